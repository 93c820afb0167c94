"""
Service de transformation en champ angulaire de Gram (GAF).
Convertit une séquence de charge en image symétrique et gère l'export des images.
"""

from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, Union

import numpy as np
import pandas as pd

from app.core.exceptions import DomainError, ShapeError
from app.core.logging import logger
from app.schemas.material import GafImage


DEGENERATE_SPAN = 1e-12
LENIENT_VALUE = 0.5


def _normalize(d: np.ndarray, strict: bool) -> tuple:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 1 or d.shape[0] < 2:
        raise ShapeError(f"gaf: séquence 1D de longueur >= 2 attendue, forme {d.shape}")
    if not np.all(np.isfinite(d)):
        raise DomainError("gaf: valeurs non finies dans la séquence")
    data_min, data_max = float(d.min()), float(d.max())
    span = data_max - data_min
    if span < DEGENERATE_SPAN:
        if strict:
            raise DomainError(f"gaf: séquence constante (max - min = {span:.3e})")
        return np.full(d.shape, LENIENT_VALUE), data_min, data_max, True
    scaled = np.clip((d - data_min) / span, 0.0, 1.0)
    return scaled, data_min, data_max, False


def gaf_transform(d: np.ndarray, strict: bool = True) -> GafImage:
    """
    Calcule G_ij = cos(theta_i + theta_j), theta_i = arccos(x~_i),
    x~ étant la séquence ramenée à [0, 1] par ses propres min et max.

    Args:
        d: Séquence de charge de longueur L
        strict: Erreur sur une séquence constante; sinon x~_i = 0.5

    Raises:
        ShapeError: Longueur < 2
        DomainError: Valeurs non finies ou séquence constante en mode strict
    """
    scaled, data_min, data_max, degenerate = _normalize(d, strict)
    theta = np.arccos(scaled)
    size = theta.shape[0]
    g = np.empty((size, size))
    # Une seule évaluation par paire non ordonnée: symétrie exacte
    rows, cols = np.triu_indices(size)
    upper = np.cos(theta[rows] + theta[cols])
    g[rows, cols] = upper
    g[cols, rows] = upper
    return GafImage(g=g, theta=theta, data_min=data_min, data_max=data_max, degenerate=degenerate)


def gaf_closed_form(d: np.ndarray, strict: bool = True) -> np.ndarray:
    """
    Même matrice par l'identité x~_i·x~_j - sqrt(1-x~_i²)·sqrt(1-x~_j²),
    sans passer par les angles.
    """
    scaled, _, _, _ = _normalize(d, strict)
    sine = np.sqrt(np.clip(1.0 - scaled * scaled, 0.0, 1.0))
    return np.outer(scaled, scaled) - np.outer(sine, sine)


def gaf_batch(loads: np.ndarray, strict: bool = False) -> np.ndarray:
    """Images GAF d'un lot de séquences [B×L] -> [B×L×L]."""
    loads = np.asarray(loads, dtype=np.float64)
    if loads.ndim != 2:
        raise ShapeError(f"gaf_batch: lot [B×L] attendu, forme {loads.shape}")
    return np.stack([gaf_transform(row, strict=strict).g for row in loads])


# ---------------------------------------------------------------------------
# Export des images
# ---------------------------------------------------------------------------


def to_pixels(g: np.ndarray) -> np.ndarray:
    """[-1, 1] -> [0, 255], arrondi au demi supérieur."""
    pixels = np.floor((np.asarray(g) + 1.0) * 127.5 + 0.5)
    return np.clip(pixels, 0, 255).astype(np.uint8)


class ImageExporter(ABC):
    """Interface abstraite des formats d'export."""

    extension: str = ""

    @abstractmethod
    def write(self, img: GafImage, path: Path) -> Path:
        """Écrit l'image et retourne le chemin effectif."""
        pass


class PgmExporter(ImageExporter):
    """PGM binaire 8 bits (P5), ligne par ligne."""

    extension = ".pgm"

    def write(self, img: GafImage, path: Path) -> Path:
        pixels = to_pixels(img.g)
        height, width = pixels.shape
        header = f"P5\n{width} {height}\n255\n".encode("ascii")
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(pixels.tobytes(order="C"))
        return path


class CsvMatrixExporter(ImageExporter):
    """Matrice en CSV, une ligne de l'image par ligne de fichier."""

    extension = ".csv"

    def write(self, img: GafImage, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(img.g).to_csv(
            path, header=False, index=False, float_format="%.17g", lineterminator="\n"
        )
        return path


class GafService:
    """
    Service principal des images GAF.
    Orchestre les différents exporteurs.
    """

    def __init__(self):
        self.exporters: Dict[str, ImageExporter] = {
            "pgm": PgmExporter(),
            "csv": CsvMatrixExporter(),
        }

    def transform(self, d: np.ndarray, strict: bool = True) -> GafImage:
        return gaf_transform(d, strict=strict)

    def export(self, img: GafImage, path: Union[str, Path], fmt: str = "pgm") -> Path:
        """
        Exporte une image dans le format demandé.

        Raises:
            DomainError: Format inconnu
            OSError: Échec d'écriture
        """
        exporter = self.exporters.get(fmt)
        if exporter is None:
            raise DomainError(f"Format d'export non supporté: {fmt}")
        written = exporter.write(img, Path(path))
        logger.debug(f"Image GAF {img.size}×{img.size} exportée: {written}")
        return written


def export_pgm(img: GafImage, path: Union[str, Path]) -> Path:
    return gaf_service.export(img, path, "pgm")


def export_matrix_csv(img: GafImage, path: Union[str, Path]) -> Path:
    return gaf_service.export(img, path, "csv")


# Instance singleton du service
gaf_service = GafService()


__all__ = [
    "gaf_transform",
    "gaf_closed_form",
    "gaf_batch",
    "to_pixels",
    "ImageExporter",
    "PgmExporter",
    "CsvMatrixExporter",
    "GafService",
    "gaf_service",
    "export_pgm",
    "export_matrix_csv",
]
