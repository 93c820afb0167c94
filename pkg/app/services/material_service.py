"""
Service de génération des matériaux synthétiques.
Remplace la simulation par éléments finis par un modèle analytique:
loi de Hollomon pour la traction, loi puissance pour l'essai de poinçonnement.
"""

import json
import re
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from app.core.exceptions import DatasetFormatError, DomainError, ShapeError
from app.core.logging import logger, log_dataset_event
from app.core.rng import Rng
from app.schemas.material import (
    CurvePair,
    Dataset,
    DatasetDescription,
    DEFAULT_DELTA_MAX,
    DEFAULT_EPS_MAX,
    DEFAULT_SEQ_LEN,
    HARDENING_RANGE,
    MaterialSpec,
    NormStats,
    RangeSummary,
    SIGMA_Y_RANGES,
    Split,
    THICKNESS_RANGE,
)


# Constantes du modèle de poinçonnement (unités absorbées)
EQ_STRAIN_COEFF = 0.25
EQ_STRAIN_EXPONENT = 1.4
LOAD_COEFF = 2.0
THICKNESS_EXPONENT = 1.5
DISPLACEMENT_EXPONENT = 0.8

# Flux enfants de la graine racine
_TRAIN_STREAM = 0
_TEST_STREAM = 1

META_SUFFIX = ".meta.json"


def sample_material(rng: Rng, split: Union[Split, str] = Split.TRAIN) -> MaterialSpec:
    """
    Tire un matériau dans les plages de la partition.

    sigma_y est log-uniforme (deux décades), n et t sont uniformes.
    """
    split = Split(split)
    low, high = SIGMA_Y_RANGES[split.value]
    sigma_y = rng.log_uniform(low, high)
    n = min(max(rng.uniform(*HARDENING_RANGE), HARDENING_RANGE[0]), HARDENING_RANGE[1])
    t = min(max(rng.uniform(*THICKNESS_RANGE), THICKNESS_RANGE[0]), THICKNESS_RANGE[1])
    return MaterialSpec(sigma_y=sigma_y, n=n, t=t)


def flow_stress(spec: MaterialSpec, eps: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Contrainte vraie (MPa) pour une déformation vraie.

    sigma = E·eps jusqu'à eps_y, puis K·eps^n avec K = sigma_y / eps_y^n.

    Raises:
        DomainError: Déformation négative
    """
    eps_arr = np.asarray(eps, dtype=np.float64)
    if np.any(eps_arr < 0) or np.any(np.isnan(eps_arr)):
        raise DomainError("flow_stress: déformation négative ou NaN")
    eps_y = spec.eps_y
    k = spec.strength_coefficient
    plastic = k * np.power(np.maximum(eps_arr, eps_y), spec.n)
    sigma = np.where(eps_arr <= eps_y, spec.E * eps_arr, plastic)
    # Valeur exacte à la limite d'élasticité
    sigma = np.where(eps_arr == eps_y, spec.sigma_y, sigma)
    return float(sigma) if np.ndim(eps) == 0 else sigma


def equivalent_strain(spec: MaterialSpec, delta: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Déformation équivalente sous le poinçon: 0.25·(delta/t)^1.4."""
    return EQ_STRAIN_COEFF * np.power(np.asarray(delta, dtype=np.float64) / spec.t, EQ_STRAIN_EXPONENT)


def spt_load(
    spec: MaterialSpec,
    delta: Union[float, np.ndarray],
    delta_max: float = DEFAULT_DELTA_MAX,
) -> Union[float, np.ndarray]:
    """
    Charge de poinçonnement (N) pour un déplacement (mm).

    P = 2.0 · flow_stress(eps_eq(delta)) · t^1.5 · delta^0.8

    Raises:
        DomainError: Déplacement hors de [0, delta_max]
    """
    delta_arr = np.asarray(delta, dtype=np.float64)
    if np.any(delta_arr < 0) or np.any(delta_arr > delta_max) or np.any(np.isnan(delta_arr)):
        raise DomainError(f"spt_load: déplacement hors de [0, {delta_max}] mm")
    sigma = flow_stress(spec, equivalent_strain(spec, delta_arr))
    load = LOAD_COEFF * sigma * spec.t ** THICKNESS_EXPONENT * np.power(delta_arr, DISPLACEMENT_EXPONENT)
    return float(load) if np.ndim(delta) == 0 else load


def build_curve_pair(
    spec: MaterialSpec,
    sample_id: int = 0,
    l_in: int = DEFAULT_SEQ_LEN,
    l_out: int = DEFAULT_SEQ_LEN,
    delta_max: float = DEFAULT_DELTA_MAX,
    eps_max: float = DEFAULT_EPS_MAX,
) -> CurvePair:
    """Échantillonne les deux courbes d'un matériau sur des grilles uniformes."""
    displacement_grid = np.linspace(0.0, delta_max, l_in)
    strain_grid = np.linspace(0.0, eps_max, l_out)
    return CurvePair(
        displacement_grid=displacement_grid,
        load=spt_load(spec, displacement_grid, delta_max),
        strain_grid=strain_grid,
        stress=flow_stress(spec, strain_grid),
        spec=spec,
        sample_id=sample_id,
    )


def compute_norm_stats(samples) -> NormStats:
    loads = np.stack([s.load for s in samples])
    stresses = np.stack([s.stress for s in samples])
    return NormStats(
        load_min=float(loads.min()),
        load_max=float(loads.max()),
        stress_min=float(stresses.min()),
        stress_max=float(stresses.max()),
    )


def generate_dataset(
    n_train: int = 4500,
    n_test: int = 500,
    seed: int = 0,
    l_in: int = DEFAULT_SEQ_LEN,
    l_out: int = DEFAULT_SEQ_LEN,
    delta_max: float = DEFAULT_DELTA_MAX,
    eps_max: float = DEFAULT_EPS_MAX,
) -> Tuple[Dataset, Dataset]:
    """
    Génère les partitions d'entraînement et de test.

    Chaque échantillon possède son propre flux Rng (split de la graine racine),
    la génération est donc indépendante de l'ordre.

    Raises:
        ShapeError: Tailles ou longueurs de grilles invalides
    """
    if n_train < 1 or n_test < 1:
        raise ShapeError(f"generate_dataset: tailles >= 1 requises, reçu {n_train}/{n_test}")
    if l_in < 8 or l_out < 8:
        raise ShapeError(f"generate_dataset: grilles de longueur >= 8 requises, reçu {l_in}/{l_out}")

    root = Rng(seed)
    partitions = {}
    for split, stream, size in (
        (Split.TRAIN, _TRAIN_STREAM, n_train),
        (Split.TEST, _TEST_STREAM, n_test),
    ):
        parent = root.split(stream)
        partitions[split] = [
            build_curve_pair(
                sample_material(parent.split(index), split),
                sample_id=index,
                l_in=l_in,
                l_out=l_out,
                delta_max=delta_max,
                eps_max=eps_max,
            )
            for index in range(size)
        ]

    norm_stats = compute_norm_stats(partitions[Split.TRAIN])
    train = Dataset(partitions[Split.TRAIN], Split.TRAIN, seed, norm_stats, delta_max, eps_max)
    test = Dataset(partitions[Split.TEST], Split.TEST, seed, norm_stats, delta_max, eps_max)

    log_dataset_event("generation", "train", len(train), seed)
    log_dataset_event("generation", "test", len(test), seed)
    return train, test


def describe_dataset(ds: Dataset) -> DatasetDescription:
    """Résumé des attributs d'une partition (nombre, E, nu, plages)."""
    if not ds.samples:
        raise ShapeError("describe_dataset: partition vide")
    specs = [s.spec for s in ds.samples]

    def _range(values) -> RangeSummary:
        values = list(values)
        return RangeSummary(min=float(min(values)), max=float(max(values)))

    return DatasetDescription(
        split=ds.split,
        num_samples=len(ds),
        young_modulus=specs[0].E,
        poisson_ratio=specs[0].nu,
        yield_stress=_range(s.sigma_y for s in specs),
        hardening_exponent=_range(s.n for s in specs),
        thickness=_range(s.t for s in specs),
        load_max=float(ds.loads().max()),
        stress_max=float(ds.stresses().max()),
    )


# ---------------------------------------------------------------------------
# Fichiers CSV
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    # repr de float: plus courte représentation relisible à l'identique
    return repr(float(value))


def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + META_SUFFIX)


def write_csv(ds: Dataset, path: Union[str, Path], config: Optional[Dict[str, Any]] = None) -> Path:
    """
    Écrit une partition: en-tête puis une ligne par échantillon
    (id, sigma_y, n, t, load_0..load_{L-1}, stress_0..stress_{L-1}).

    Les métadonnées (partition, graine, bornes de normalisation, grilles)
    vont dans un fichier voisin <nom>.meta.json.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    columns = ["id", "sigma_y", "n", "t"]
    columns += [f"load_{i}" for i in range(ds.l_in)]
    columns += [f"stress_{i}" for i in range(ds.l_out)]

    rows = []
    for s in ds.samples:
        row = [str(s.sample_id), _fmt(s.spec.sigma_y), _fmt(s.spec.n), _fmt(s.spec.t)]
        row += [_fmt(v) for v in s.load]
        row += [_fmt(v) for v in s.stress]
        rows.append(row)
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, lineterminator="\n")

    meta = {
        "split": Split(ds.split).value,
        "seed": ds.seed,
        "delta_max": ds.delta_max,
        "eps_max": ds.eps_max,
        "norm_stats": ds.norm_stats.model_dump(),
        "config": config if config is not None else ds.metadata.get("config"),
    }
    _meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    log_dataset_event("ecriture", Split(ds.split).value, len(ds), ds.seed, str(path))
    return path


_EXPECTED_FIELDS = re.compile(r"Expected (\d+) fields in line (\d+), saw (\d+)")


def _check_sequence_columns(columns, prefix: str) -> int:
    indices = sorted(int(c[len(prefix):]) for c in columns if re.fullmatch(rf"{prefix}\d+", c))
    if not indices:
        raise DatasetFormatError("Colonne manquante", line=1, column=f"{prefix}0")
    for expected, found in enumerate(indices):
        if expected != found:
            raise DatasetFormatError("Colonne manquante", line=1, column=f"{prefix}{expected}")
    return len(indices)


def read_csv(path: Union[str, Path]) -> Dataset:
    """
    Relit une partition écrite par write_csv.

    Sans fichier .meta.json, la partition est déduite du nom du fichier,
    les grilles prennent leurs valeurs par défaut et les bornes de
    normalisation sont recalculées sur le fichier.

    Raises:
        DatasetFormatError: En-tête incomplet, ligne de mauvaise arité, valeur invalide
    """
    path = Path(path)
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except pd.errors.ParserError as exc:
        match = _EXPECTED_FIELDS.search(str(exc))
        if match:
            expected, line, seen = (int(v) for v in match.groups())
            raise DatasetFormatError(
                f"Arité incorrecte: {seen} champs au lieu de {expected}", line=line
            ) from None
        raise DatasetFormatError(f"Fichier CSV illisible: {exc}") from None
    except pd.errors.EmptyDataError:
        raise DatasetFormatError("Fichier CSV vide", line=1) from None
    except (TypeError, ValueError) as exc:
        raise DatasetFormatError(f"Valeur invalide: {exc}") from None

    for column in ("id", "sigma_y", "n", "t"):
        if column not in df.columns:
            raise DatasetFormatError("Colonne manquante", line=1, column=column)
    l_in = _check_sequence_columns(df.columns, "load_")
    l_out = _check_sequence_columns(df.columns, "stress_")

    # Valeurs non numériques -> NaN, signalées comme les champs manquants
    df = df.apply(pd.to_numeric, errors="coerce")
    missing = df.isna().any(axis=1)
    if missing.any():
        # +2: en-tête sur la ligne 1, index pandas à partir de 0
        raise DatasetFormatError("Ligne incomplète", line=int(np.flatnonzero(missing.to_numpy())[0]) + 2)

    meta_file = _meta_path(path)
    meta: Dict[str, Any] = {}
    if meta_file.exists():
        meta = json.loads(meta_file.read_text(encoding="utf-8"))
    delta_max = float(meta.get("delta_max", DEFAULT_DELTA_MAX))
    eps_max = float(meta.get("eps_max", DEFAULT_EPS_MAX))
    split = Split(meta.get("split", "test" if "test" in path.stem else "train"))

    load_cols = [f"load_{i}" for i in range(l_in)]
    stress_cols = [f"stress_{i}" for i in range(l_out)]
    loads = df[load_cols].to_numpy(dtype=np.float64)
    stresses = df[stress_cols].to_numpy(dtype=np.float64)
    displacement_grid = np.linspace(0.0, delta_max, l_in)
    strain_grid = np.linspace(0.0, eps_max, l_out)

    samples = []
    for row_index, record in enumerate(df[["id", "sigma_y", "n", "t"]].itertuples(index=False)):
        try:
            spec = MaterialSpec(sigma_y=float(record.sigma_y), n=float(record.n), t=float(record.t))
        except ValueError as exc:
            raise DatasetFormatError(f"Matériau invalide: {exc}", line=row_index + 2) from None
        samples.append(
            CurvePair(
                displacement_grid=displacement_grid,
                load=loads[row_index].copy(),
                strain_grid=strain_grid,
                stress=stresses[row_index].copy(),
                spec=spec,
                sample_id=int(record.id),
            )
        )

    if "norm_stats" in meta:
        norm_stats = NormStats(**meta["norm_stats"])
    else:
        logger.warning(f"Pas de métadonnées pour {path}: bornes recalculées sur le fichier")
        norm_stats = compute_norm_stats(samples)

    ds = Dataset(
        samples=samples,
        split=split,
        seed=int(meta.get("seed", 0)),
        norm_stats=norm_stats,
        delta_max=delta_max,
        eps_max=eps_max,
        metadata={"config": meta.get("config")},
    )
    log_dataset_event("lecture", split.value, len(ds), ds.seed, str(path))
    return ds


__all__ = [
    "sample_material",
    "flow_stress",
    "equivalent_strain",
    "spt_load",
    "build_curve_pair",
    "compute_norm_stats",
    "generate_dataset",
    "describe_dataset",
    "write_csv",
    "read_csv",
]
