"""
Module des schémas pour Poinçon.
Définit les matériaux, jeux de données, configurations et rapports.
"""

from .material import (
    Split,
    MaterialSpec,
    NormStats,
    CurvePair,
    Dataset,
    GafImage,
    RangeSummary,
    DatasetDescription,
    DatasetManifest,
)
from .training import (
    LossKind,
    F2DReduction,
    TrainConfig,
    GridInfo,
    ParameterInfo,
)
from .report import (
    SampleMetrics,
    EvalReport,
    ComparisonRow,
    ComparisonTable,
)
from .cli import CliConfig, GenerationConfig

__all__ = [
    # Matériaux et données
    "Split",
    "MaterialSpec",
    "NormStats",
    "CurvePair",
    "Dataset",
    "GafImage",
    "RangeSummary",
    "DatasetDescription",
    "DatasetManifest",
    # Entraînement
    "LossKind",
    "F2DReduction",
    "TrainConfig",
    "GridInfo",
    "ParameterInfo",
    # Rapports
    "SampleMetrics",
    "EvalReport",
    "ComparisonRow",
    "ComparisonTable",
    # Ligne de commande
    "CliConfig",
    "GenerationConfig",
]
