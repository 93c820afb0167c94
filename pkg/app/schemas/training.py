"""
Schémas Pydantic pour l'entraînement.
"""

import enum
from typing import List

from pydantic import BaseModel, ConfigDict, Field, model_validator


class LossKind(str, enum.Enum):
    """Critères de perte disponibles."""
    MSE = "mse"
    MAE = "mae"


class F2DReduction(str, enum.Enum):
    """Réduction de la carte de caractéristiques 2D vers la séquence."""
    ROW = "row"         # Moyenne sur les colonnes, une ligne par pas de temps
    GLOBAL = "global"   # Moyenne globale répliquée à chaque pas


class TrainConfig(BaseModel):
    """
    Hyperparamètres d'entraînement et d'architecture.
    Enregistrés intégralement dans chaque checkpoint.
    """
    model_config = ConfigDict(extra="forbid", use_enum_values=True)

    epochs: int = Field(default=200, ge=1, description="Nombre d'époques")
    batch_size: int = Field(default=32, ge=1)
    lr: float = Field(default=1e-3, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    eps: float = Field(default=1e-8, gt=0)
    teacher_forcing_ratio: float = Field(default=0.5, ge=0, le=1)
    seed: int = Field(default=0, ge=0)

    hidden_size: int = Field(default=128, ge=1)
    num_layers: int = Field(default=5, ge=1)
    num_heads: int = Field(default=4, ge=1)
    dropout: float = Field(default=0.1, ge=0, lt=1)
    paper_exact: bool = Field(default=False, description="Attention de l'équation littérale (1 tête, sans projection)")
    gaf_enabled: bool = Field(default=True, description="Désactivé = modèle LSTM 1D de référence")
    attention_enabled: bool = Field(default=True, description="Désactivé = seq2seq LSTM sans attention")
    f2d_reduction: F2DReduction = Field(default=F2DReduction.ROW)

    loss_kind: LossKind = Field(default=LossKind.MSE)
    grad_clip: float = Field(default=5.0, ge=0, description="Norme globale maximale (0 = pas d'écrêtage)")

    @model_validator(mode="after")
    def check_heads(self) -> "TrainConfig":
        if not self.paper_exact and self.hidden_size % self.num_heads != 0:
            raise ValueError(
                f"hidden_size ({self.hidden_size}) doit être divisible par num_heads ({self.num_heads})"
            )
        return self

    @property
    def model_tag(self) -> str:
        return "proposed" if self.gaf_enabled else "1d-baseline"


class GridInfo(BaseModel):
    """Grilles d'entrée et de sortie sur lesquelles un modèle a été entraîné."""
    l_in: int = Field(..., ge=1)
    l_out: int = Field(..., ge=1)
    delta_max: float = Field(..., gt=0)
    eps_max: float = Field(..., gt=0)


class ParameterInfo(BaseModel):
    """Nom et forme d'un tenseur de paramètres dans la charge utile."""
    name: str
    shape: List[int]
