"""
Exceptions métier de Poinçon.
Toutes dérivent de SptError pour que le point d'entrée puisse les traduire en codes de sortie.
"""

from typing import Optional


class SptError(Exception):
    """Erreur de base de l'application."""


class ShapeError(SptError, ValueError):
    """Dimensions incompatibles entre tenseurs, grilles ou paramètres."""


class DomainError(SptError, ValueError):
    """Valeur hors du domaine de définition d'une opération."""


class ConfigurationError(SptError, ValueError):
    """Configuration invalide ou incohérente."""


class DatasetFormatError(SptError, ValueError):
    """
    Fichier de jeu de données mal formé.

    Attributes:
        line: Numéro de ligne (1 = en-tête) en cause, si connu
        column: Nom de colonne en cause, si connu
    """

    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        column: Optional[str] = None,
    ):
        self.line = line
        self.column = column
        location = []
        if line is not None:
            location.append(f"ligne {line}")
        if column is not None:
            location.append(f"colonne '{column}'")
        suffix = f" ({', '.join(location)})" if location else ""
        super().__init__(f"{message}{suffix}")


class CheckpointError(SptError, ValueError):
    """Fichier de checkpoint illisible, tronqué ou incompatible."""


class DivergenceError(SptError, RuntimeError):
    """
    Perte non finie pendant l'entraînement.

    Attributes:
        epoch: Époque (à partir de 1)
        batch: Index du batch dans l'époque
        parameter: Paramètre au gradient non fini ou de plus grande norme
    """

    def __init__(self, epoch: int, batch: int, parameter: Optional[str], loss: float):
        self.epoch = epoch
        self.batch = batch
        self.parameter = parameter
        self.loss = loss
        super().__init__(
            f"Perte non finie ({loss}) à l'époque {epoch}, batch {batch}; "
            f"paramètre suspect: {parameter or 'inconnu'}"
        )


__all__ = [
    "SptError",
    "ShapeError",
    "DomainError",
    "ConfigurationError",
    "DatasetFormatError",
    "CheckpointError",
    "DivergenceError",
]
