"""
Schémas des matériaux synthétiques, des courbes et des jeux de données.
"""

import enum
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


# Plages du tableau de description des données (MPa, sans dimension, mm)
YOUNG_MODULUS = 70000.0
POISSON_RATIO = 0.35

SIGMA_Y_RANGES: Dict[str, Tuple[float, float]] = {
    "train": (20.98, 1907.53),
    "test": (28.72, 1823.16),
}
HARDENING_RANGE: Tuple[float, float] = (0.068, 0.4046)
THICKNESS_RANGE: Tuple[float, float] = (1.0, 4.0)

DEFAULT_DELTA_MAX = 2.0
DEFAULT_EPS_MAX = 0.25
DEFAULT_SEQ_LEN = 64


class Split(str, enum.Enum):
    """Partitions du jeu de données."""
    TRAIN = "train"
    TEST = "test"


class MaterialSpec(BaseModel):
    """
    Un matériau synthétique.

    Attributes:
        sigma_y: Limite d'élasticité (MPa)
        n: Exposant d'écrouissage
        t: Épaisseur de l'éprouvette (mm)
        E: Module d'Young (MPa), fixe
        nu: Coefficient de Poisson, fixe
    """
    model_config = ConfigDict(frozen=True)

    sigma_y: float = Field(..., ge=SIGMA_Y_RANGES["train"][0], le=SIGMA_Y_RANGES["train"][1])
    n: float = Field(..., ge=HARDENING_RANGE[0], le=HARDENING_RANGE[1])
    t: float = Field(..., ge=THICKNESS_RANGE[0], le=THICKNESS_RANGE[1])
    E: float = Field(default=YOUNG_MODULUS, gt=0)
    nu: float = Field(default=POISSON_RATIO, gt=0, lt=0.5)

    @property
    def eps_y(self) -> float:
        """Déformation à la limite d'élasticité."""
        return self.sigma_y / self.E

    @property
    def strength_coefficient(self) -> float:
        """K de la loi de Hollomon, fixé par continuité en eps_y."""
        return self.sigma_y / self.eps_y ** self.n


class NormStats(BaseModel):
    """Bornes min-max de la partition d'entraînement (charge en N, contrainte en MPa)."""
    load_min: float
    load_max: float
    stress_min: float
    stress_max: float

    @model_validator(mode="after")
    def check_bounds(self) -> "NormStats":
        if self.load_max <= self.load_min:
            raise ValueError("load_max doit être > load_min")
        if self.stress_max <= self.stress_min:
            raise ValueError("stress_max doit être > stress_min")
        return self

    def normalize_load(self, load: np.ndarray) -> np.ndarray:
        return (np.asarray(load) - self.load_min) / (self.load_max - self.load_min)

    def normalize_stress(self, stress: np.ndarray) -> np.ndarray:
        return (np.asarray(stress) - self.stress_min) / (self.stress_max - self.stress_min)

    def denormalize_stress(self, stress: np.ndarray) -> np.ndarray:
        return np.asarray(stress) * (self.stress_max - self.stress_min) + self.stress_min

    @property
    def stress_range(self) -> float:
        return self.stress_max - self.stress_min


@dataclass(eq=False)
class CurvePair:
    """
    Courbe charge-déplacement (entrée D) et courbe contrainte-déformation (cible Y).

    Attributes:
        displacement_grid: Déplacements (mm), uniformes sur [0, delta_max]
        load: Charges (N)
        strain_grid: Déformations vraies, uniformes sur [0, eps_max]
        stress: Contraintes vraies (MPa)
        spec: Matériau d'origine
        sample_id: Identifiant dans la partition
    """
    displacement_grid: np.ndarray
    load: np.ndarray
    strain_grid: np.ndarray
    stress: np.ndarray
    spec: MaterialSpec
    sample_id: int = 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CurvePair):
            return NotImplemented
        return (
            self.sample_id == other.sample_id
            and self.spec == other.spec
            and np.array_equal(self.displacement_grid, other.displacement_grid)
            and np.array_equal(self.load, other.load)
            and np.array_equal(self.strain_grid, other.strain_grid)
            and np.array_equal(self.stress, other.stress)
        )

    @property
    def l_in(self) -> int:
        return int(self.load.shape[0])

    @property
    def l_out(self) -> int:
        return int(self.stress.shape[0])


@dataclass(eq=False)
class Dataset:
    """
    Une partition du jeu de données.

    Attributes:
        samples: Paires de courbes
        split: train ou test
        seed: Graine de génération
        norm_stats: Bornes calculées sur la partition d'entraînement uniquement
    """
    samples: List[CurvePair]
    split: Split
    seed: int
    norm_stats: NormStats
    delta_max: float = DEFAULT_DELTA_MAX
    eps_max: float = DEFAULT_EPS_MAX
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            Split(self.split) == Split(other.split)
            and self.seed == other.seed
            and self.norm_stats == other.norm_stats
            and self.delta_max == other.delta_max
            and self.eps_max == other.eps_max
            and len(self.samples) == len(other.samples)
            and all(a == b for a, b in zip(self.samples, other.samples))
        )

    def __len__(self) -> int:
        return len(self.samples)

    def __getitem__(self, index: int) -> CurvePair:
        return self.samples[index]

    @property
    def l_in(self) -> int:
        return self.samples[0].l_in if self.samples else 0

    @property
    def l_out(self) -> int:
        return self.samples[0].l_out if self.samples else 0

    def loads(self) -> np.ndarray:
        return np.stack([s.load for s in self.samples])

    def stresses(self) -> np.ndarray:
        return np.stack([s.stress for s in self.samples])


@dataclass(eq=False)
class GafImage:
    """
    Champ angulaire de Gram d'une séquence de charge.

    Attributes:
        g: Matrice L×L symétrique, valeurs dans [-1, 1]
        theta: Angles polaires (rad) dans [0, pi/2]
        data_min: min(D) utilisé pour la normalisation
        data_max: max(D) utilisé pour la normalisation
        degenerate: Séquence constante traitée en mode tolérant
    """
    g: np.ndarray
    theta: np.ndarray
    data_min: float
    data_max: float
    degenerate: bool = False

    @property
    def size(self) -> int:
        return int(self.g.shape[0])


class RangeSummary(BaseModel):
    """Plage observée d'un attribut."""
    min: float
    max: float


class DatasetDescription(BaseModel):
    """Résumé d'une partition dans la présentation du tableau de description."""
    split: Split
    num_samples: int
    young_modulus: float
    poisson_ratio: float
    yield_stress: RangeSummary
    hardening_exponent: RangeSummary
    thickness: RangeSummary
    load_max: float
    stress_max: float


class DatasetManifest(BaseModel):
    """Manifeste écrit à côté des fichiers CSV générés."""
    seed: int
    n_train: int
    n_test: int
    l_in: int
    l_out: int
    delta_max: float
    eps_max: float
    young_modulus: float = YOUNG_MODULUS
    poisson_ratio: float = POISSON_RATIO
    sigma_y_ranges: Dict[str, Tuple[float, float]] = Field(default_factory=lambda: dict(SIGMA_Y_RANGES))
    hardening_range: Tuple[float, float] = HARDENING_RANGE
    thickness_range: Tuple[float, float] = THICKNESS_RANGE
    norm_stats: NormStats
    config: Optional[Dict[str, Any]] = None
