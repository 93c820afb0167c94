"""
Module core - Fonctionnalités centrales de l'application.
Contient le moteur de tenseurs, le générateur aléatoire, l'optimiseur et le logging.
"""

from .exceptions import (
    SptError,
    ShapeError,
    DomainError,
    ConfigurationError,
    DatasetFormatError,
    CheckpointError,
    DivergenceError,
)
from .logging import setup_logging, logger
from .rng import Rng
from .tensor import Tensor, backward
from .optim import AdamState, adam_step
from .gradcheck import grad_check

__all__ = [
    "SptError",
    "ShapeError",
    "DomainError",
    "ConfigurationError",
    "DatasetFormatError",
    "CheckpointError",
    "DivergenceError",
    "setup_logging",
    "logger",
    "Rng",
    "Tensor",
    "backward",
    "AdamState",
    "adam_step",
    "grad_check",
]
