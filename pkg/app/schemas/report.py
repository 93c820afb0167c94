"""
Schémas Pydantic des rapports d'évaluation.
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class SampleMetrics(BaseModel):
    """Métriques d'une courbe prédite."""
    sample_id: int
    sigma_y: float
    n: float
    t: float
    mae: float = Field(..., ge=0, description="Erreur absolue moyenne (MPa)")
    r2: float = Field(..., description="Coefficient de détermination de la courbe")


class EvalReport(BaseModel):
    """
    Rapport d'évaluation: métriques par échantillon et agrégats
    max/min de MAE et de R² (colonnes du tableau de comparaison).
    """
    model_tag: str
    samples: List[SampleMetrics]
    max_mae: float
    min_mae: float
    max_r2: float
    min_r2: float
    mean_mae: float
    mean_r2: float
    split: Optional[str] = None
    train_config: Dict[str, Any] = Field(default_factory=dict)
    config: Optional[Dict[str, Any]] = None

    @model_validator(mode="after")
    def check_aggregates(self) -> "EvalReport":
        if self.max_mae < self.min_mae:
            raise ValueError("max_mae doit être >= min_mae")
        if self.max_r2 < self.min_r2:
            raise ValueError("max_r2 doit être >= min_r2")
        if self.max_r2 > 1.0 + 1e-12:
            raise ValueError("R² ne peut pas dépasser 1")
        return self

    def aggregates(self) -> Dict[str, float]:
        return {
            "max_mae": self.max_mae,
            "min_mae": self.min_mae,
            "max_r2": self.max_r2,
            "min_r2": self.min_r2,
        }


class ComparisonRow(BaseModel):
    """Une ligne du tableau de comparaison."""
    model_tag: str
    source: str
    max_mae: float
    min_mae: float
    max_r2: float
    min_r2: float


class ComparisonTable(BaseModel):
    """Comparaison de plusieurs rapports et meilleur modèle par colonne."""
    rows: List[ComparisonRow]
    best: Dict[str, str]
