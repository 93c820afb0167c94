"""
Extraction des caractéristiques de la courbe de charge.

M = [charge normalisée, épaisseur, F1D, F2D] par pas de temps:
convolutions 1D multi-échelles sur la séquence brute, convolutions 2D
sur l'image GAF réduites ligne par ligne, et connexion résiduelle
vers les entrées brutes.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from app.core.exceptions import ShapeError
from app.core.tensor import (
    Tensor,
    as_tensor,
    broadcast_to,
    concat,
    conv1d,
    conv2d,
    mean,
    reshape,
    stack,
    tanh,
)
from app.models.base import Module, uniform_parameter, zero_parameter
from app.schemas.material import CurvePair, GafImage, NormStats
from app.schemas.training import F2DReduction
from app.services.gaf_service import gaf_batch


KERNEL_SIZES = (3, 5, 7)
BRANCH_CHANNELS = 8
GAF_CHANNELS = 8
GAF_KERNEL = 3
RAW_CHANNELS = 2
THICKNESS_SCALE = 4.0


@dataclass
class FeatureMatrix:
    """
    Matrice de caractéristiques par pas de temps.

    Attributes:
        m: [L_in × C_total] ou [B × L_in × C_total]
        raw_channels: Charge normalisée et épaisseur (passage résiduel)
        f1d_channels: 3 échelles × 8 canaux
        f2d_channels: 8, ou 0 sans GAF
    """
    m: Tensor
    raw_channels: int = RAW_CHANNELS
    f1d_channels: int = len(KERNEL_SIZES) * BRANCH_CHANNELS
    f2d_channels: int = GAF_CHANNELS

    @property
    def c_total(self) -> int:
        return self.raw_channels + self.f1d_channels + self.f2d_channels

    @property
    def length(self) -> int:
        return int(self.m.shape[-2])

    @property
    def batched(self) -> bool:
        return self.m.ndim == 3


@dataclass
class FeatureInputs:
    """Entrées prétraitées d'un lot: tout ce qui ne dépend pas des paramètres."""
    load: np.ndarray                  # [B × L_in], normalisée
    thickness: np.ndarray             # [B], en mm
    images: Optional[np.ndarray]      # [B × L_in × L_in] ou None sans GAF

    def __len__(self) -> int:
        return int(self.load.shape[0])

    def subset(self, indices: Sequence[int]) -> "FeatureInputs":
        idx = np.asarray(indices, dtype=np.int64)
        return FeatureInputs(
            load=self.load[idx],
            thickness=self.thickness[idx],
            images=None if self.images is None else self.images[idx],
        )


def feature_channels(gaf_enabled: bool) -> int:
    f2d = GAF_CHANNELS if gaf_enabled else 0
    return RAW_CHANNELS + len(KERNEL_SIZES) * BRANCH_CHANNELS + f2d


def prepare_inputs(
    samples: Sequence[CurvePair],
    norm_stats: NormStats,
    gaf_enabled: bool = True,
) -> FeatureInputs:
    """Normalise les charges et calcule les images GAF (mode tolérant, sur la charge brute)."""
    if not samples:
        raise ShapeError("prepare_inputs: lot vide")
    lengths = {s.l_in for s in samples}
    if len(lengths) != 1:
        raise ShapeError(f"prepare_inputs: longueurs d'entrée hétérogènes {sorted(lengths)}")
    load = np.stack([norm_stats.normalize_load(s.load) for s in samples])
    thickness = np.array([s.spec.t for s in samples], dtype=np.float64)
    images = gaf_batch(np.stack([s.load for s in samples])) if gaf_enabled else None
    return FeatureInputs(load=load, thickness=thickness, images=images)


class FeatureExtractor(Module):
    """
    Branches conv1d (K = 3, 5, 7; 1→8 canaux; tanh) et pile conv2d
    (1→8→8 canaux; K = 3; tanh) sur l'image GAF.
    """

    def __init__(
        self,
        generator: np.random.Generator,
        gaf_enabled: bool = True,
        f2d_reduction: F2DReduction = F2DReduction.ROW,
    ):
        super().__init__()
        self.gaf_enabled = gaf_enabled
        self.f2d_reduction = F2DReduction(f2d_reduction)
        for k in KERNEL_SIZES:
            self.add_parameter(f"conv1d_k{k}.weight", uniform_parameter(generator, (k, 1, BRANCH_CHANNELS), k))
            self.add_parameter(f"conv1d_k{k}.bias", zero_parameter((BRANCH_CHANNELS,)))
        if gaf_enabled:
            fan1 = GAF_KERNEL * GAF_KERNEL
            fan2 = GAF_KERNEL * GAF_KERNEL * GAF_CHANNELS
            self.add_parameter(
                "conv2d_1.weight", uniform_parameter(generator, (GAF_KERNEL, GAF_KERNEL, 1, GAF_CHANNELS), fan1)
            )
            self.add_parameter("conv2d_1.bias", zero_parameter((GAF_CHANNELS,)))
            self.add_parameter(
                "conv2d_2.weight",
                uniform_parameter(generator, (GAF_KERNEL, GAF_KERNEL, GAF_CHANNELS, GAF_CHANNELS), fan2),
            )
            self.add_parameter("conv2d_2.bias", zero_parameter((GAF_CHANNELS,)))

    @property
    def c_total(self) -> int:
        return feature_channels(self.gaf_enabled)

    def extract_1d(self, d) -> Tensor:
        """
        [L] ou [B × L] -> [L × 24] ou [B × L × 24].
        Ordre des canaux: K=3, puis 5, puis 7.
        """
        d = as_tensor(d)
        if d.ndim not in (1, 2):
            raise ShapeError(f"extract_1d: séquence [L] ou [B × L] attendue, forme {d.shape}")
        x = reshape(d, d.shape + (1,))
        branches = []
        for k in KERNEL_SIZES:
            w = self._parameters[f"conv1d_k{k}.weight"]
            b = self._parameters[f"conv1d_k{k}.bias"]
            branches.append(tanh(conv1d(x, w) + b))
        return concat(branches, axis=-1)

    def extract_2d(self, g) -> Tensor:
        """
        [L × L] ou [B × L × L] -> [L × 8] ou [B × L × 8].

        Raises:
            ShapeError: Image non carrée, ou extracteur construit sans GAF
        """
        if not self.gaf_enabled:
            raise ShapeError("extract_2d: extracteur construit sans branche GAF")
        if isinstance(g, GafImage):
            g = g.g
        g = as_tensor(g)
        if g.ndim not in (2, 3) or g.shape[-1] != g.shape[-2]:
            raise ShapeError(f"extract_2d: image carrée attendue, forme {g.shape}")
        x = reshape(g, g.shape + (1,))
        h = tanh(conv2d(x, self._parameters["conv2d_1.weight"]) + self._parameters["conv2d_1.bias"])
        h = tanh(conv2d(h, self._parameters["conv2d_2.weight"]) + self._parameters["conv2d_2.bias"])
        # h: [.., ligne i, colonne j, canal]; la ligne i porte le pas de temps i
        if self.f2d_reduction == F2DReduction.ROW:
            return mean(h, axis=-2)
        pooled = mean(h, axis=(-3, -2), keepdims=True)
        target = h.shape[:-3] + (h.shape[-3], GAF_CHANNELS)
        return broadcast_to(reshape(pooled, h.shape[:-3] + (1, GAF_CHANNELS)), target)

    def __call__(self, inputs: FeatureInputs) -> FeatureMatrix:
        """Construit M pour un lot."""
        load = as_tensor(inputs.load)
        if load.ndim != 2:
            raise ShapeError(f"features: charges [B × L] attendues, forme {load.shape}")
        batch, length = load.shape
        thickness = np.broadcast_to(
            (np.asarray(inputs.thickness, dtype=np.float64) / THICKNESS_SCALE)[:, None], (batch, length)
        )
        raw = stack([load, Tensor(thickness)], axis=-1)
        pieces = [raw, self.extract_1d(load)]
        if self.gaf_enabled:
            if inputs.images is None:
                raise ShapeError("features: images GAF requises")
            if inputs.images.shape != (batch, length, length):
                raise ShapeError(
                    f"features: images {inputs.images.shape} incompatibles avec les charges {load.shape}"
                )
            pieces.append(self.extract_2d(inputs.images))
        return FeatureMatrix(
            m=concat(pieces, axis=-1),
            f2d_channels=GAF_CHANNELS if self.gaf_enabled else 0,
        )


def build_feature_matrix(
    pair: CurvePair,
    img: Optional[GafImage],
    norm_stats: NormStats,
    extractor: FeatureExtractor,
) -> FeatureMatrix:
    """
    M d'un seul échantillon, [L_in × C_total].

    Raises:
        ShapeError: Image absente ou de taille différente de la séquence
    """
    images = None
    if extractor.gaf_enabled:
        if img is None:
            raise ShapeError("build_feature_matrix: image GAF requise")
        if img.size != pair.l_in:
            raise ShapeError(f"build_feature_matrix: image {img.size}×{img.size} pour une séquence de {pair.l_in}")
        images = img.g[None]
    inputs = FeatureInputs(
        load=norm_stats.normalize_load(pair.load)[None],
        thickness=np.array([pair.spec.t]),
        images=images,
    )
    batched = extractor(inputs)
    return FeatureMatrix(
        m=batched.m[0],
        raw_channels=batched.raw_channels,
        f1d_channels=batched.f1d_channels,
        f2d_channels=batched.f2d_channels,
    )


__all__ = [
    "KERNEL_SIZES",
    "THICKNESS_SCALE",
    "FeatureMatrix",
    "FeatureInputs",
    "FeatureExtractor",
    "feature_channels",
    "prepare_inputs",
    "build_feature_matrix",
]
