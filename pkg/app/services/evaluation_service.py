"""
Service d'évaluation: métriques en MPa, rapports, superpositions et comparaisons.
"""

import json
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import matplotlib as mpl

mpl.use("Agg")
mpl.rcParams.update({
    "svg.hashsalt": "poincon",      # identifiants SVG reproductibles
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "figure.figsize": (4.5, 3.2),
})

import matplotlib.pyplot as plt  # noqa: E402

from app.core.exceptions import DomainError, ShapeError
from app.core.logging import logger, log_evaluation
from app.models.features import prepare_inputs
from app.models.seq2seq import Seq2SeqModel
from app.schemas.material import CurvePair, Dataset
from app.schemas.report import ComparisonRow, ComparisonTable, EvalReport, SampleMetrics
from app.services.training_service import Checkpoint


DEFAULT_EVAL_BATCH = 64


# ---------------------------------------------------------------------------
# Métriques
# ---------------------------------------------------------------------------


def _pair(pred, target) -> Tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    if pred.shape != target.shape:
        raise ShapeError(f"métrique: prédiction de {pred.size} points, cible de {target.size}")
    if pred.size == 0:
        raise ShapeError("métrique: séquences vides")
    return pred, target


def mae(pred, target) -> float:
    """Erreur absolue moyenne, dans l'unité des entrées (MPa)."""
    pred, target = _pair(pred, target)
    return float(np.mean(np.abs(pred - target)))


def r2(pred, target) -> float:
    """
    1 - SS_res/SS_tot, SS_tot autour de la moyenne de la cible.

    Raises:
        DomainError: Cible de variance nulle
    """
    pred, target = _pair(pred, target)
    residual = target - pred
    centered = target - np.mean(target)
    ss_res = float(np.dot(residual, residual))
    ss_tot = float(np.dot(centered, centered))
    if ss_tot == 0.0:
        raise DomainError("R² indéfini: variance de la cible nulle")
    return 1.0 - ss_res / ss_tot


# ---------------------------------------------------------------------------
# Inférence
# ---------------------------------------------------------------------------


def check_grid(ckpt: Checkpoint, ds: Dataset) -> None:
    """
    Raises:
        ShapeError: Longueurs ou bornes de grilles différentes de celles de l'entraînement
    """
    grid = ckpt.grid
    if ds.l_in != grid.l_in or ds.l_out != grid.l_out:
        raise ShapeError(
            f"Grilles incompatibles: données {ds.l_in}/{ds.l_out} points, modèle {grid.l_in}/{grid.l_out}"
        )
    if not (np.isclose(ds.delta_max, grid.delta_max) and np.isclose(ds.eps_max, grid.eps_max)):
        raise ShapeError(
            f"Bornes de grilles incompatibles: données delta_max={ds.delta_max}, eps_max={ds.eps_max}; "
            f"modèle {grid.delta_max}, {grid.eps_max}"
        )
    if ds.norm_stats != ckpt.norm_stats:
        logger.warning("Bornes de normalisation du jeu différentes du checkpoint: celles du checkpoint sont utilisées")


def predict_curves(
    ckpt: Checkpoint,
    samples: Sequence[CurvePair],
    model: Optional[Seq2SeqModel] = None,
    batch_size: int = DEFAULT_EVAL_BATCH,
) -> np.ndarray:
    """
    Inférence autorégressive; contraintes prédites en MPa [N × L_out].
    """
    model = model if model is not None else ckpt.build_model()
    model.eval()
    samples = list(samples)
    outputs = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        inputs = prepare_inputs(chunk, ckpt.norm_stats, ckpt.config.gaf_enabled)
        pred = model.run(inputs, l_out=ckpt.grid.l_out)
        outputs.append(ckpt.norm_stats.denormalize_stress(pred.data))
    return np.concatenate(outputs, axis=0) if outputs else np.zeros((0, ckpt.grid.l_out))


def evaluate_detailed(
    ckpt: Checkpoint,
    ds: Dataset,
    run_config: Optional[Dict[str, Any]] = None,
) -> Tuple[EvalReport, np.ndarray]:
    """
    Évalue un checkpoint sur une partition: MAE et R² par courbe en MPa,
    agrégats max/min.

    Returns:
        (rapport, prédictions [N × L_out] en MPa)

    Raises:
        ShapeError: Grille incompatible ou partition vide
    """
    if len(ds) == 0:
        raise ShapeError("evaluate: partition vide")
    check_grid(ckpt, ds)
    predictions = predict_curves(ckpt, ds.samples)

    metrics = []
    for sample, pred in zip(ds.samples, predictions):
        metrics.append(SampleMetrics(
            sample_id=sample.sample_id,
            sigma_y=sample.spec.sigma_y,
            n=sample.spec.n,
            t=sample.spec.t,
            mae=mae(pred, sample.stress),
            r2=r2(pred, sample.stress),
        ))
    maes = [m.mae for m in metrics]
    r2s = [m.r2 for m in metrics]
    report = EvalReport(
        model_tag=ckpt.config.model_tag,
        samples=metrics,
        max_mae=max(maes),
        min_mae=min(maes),
        max_r2=max(r2s),
        min_r2=min(r2s),
        mean_mae=float(np.mean(maes)),
        mean_r2=float(np.mean(r2s)),
        split=str(getattr(ds.split, "value", ds.split)),
        train_config=ckpt.config.model_dump(mode="json"),
        config=run_config,
    )
    log_evaluation(report.model_tag, len(metrics), report.aggregates())
    return report, predictions


def evaluate(ckpt: Checkpoint, ds: Dataset, run_config: Optional[Dict[str, Any]] = None) -> EvalReport:
    """Rapport d'évaluation seul (voir evaluate_detailed)."""
    return evaluate_detailed(ckpt, ds, run_config)[0]


def write_report(report: EvalReport, path: Union[str, Path]) -> Tuple[Path, Path]:
    """JSON complet, plus <nom>_samples.csv (id, sigma_y, n, t, mae, r2)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    samples_path = path.with_name(path.stem + "_samples.csv")
    frame = pd.DataFrame([
        {
            "id": str(m.sample_id),
            "sigma_y": repr(m.sigma_y),
            "n": repr(m.n),
            "t": repr(m.t),
            "mae": repr(m.mae),
            "r2": repr(m.r2),
        }
        for m in report.samples
    ], columns=["id", "sigma_y", "n", "t", "mae", "r2"])
    frame.to_csv(samples_path, index=False, lineterminator="\n")
    return path, samples_path


def read_report(path: Union[str, Path]) -> EvalReport:
    return EvalReport.model_validate_json(Path(path).read_text(encoding="utf-8"))


def extreme_samples(report: EvalReport) -> Dict[str, int]:
    """Positions des échantillons de MAE minimale et maximale."""
    maes = [m.mae for m in report.samples]
    return {"min_mae": int(np.argmin(maes)), "max_mae": int(np.argmax(maes))}


# ---------------------------------------------------------------------------
# Superpositions
# ---------------------------------------------------------------------------


class PlotWriter(ABC):
    """Interface abstraite des sorties de superposition."""

    suffix: str = ""

    @abstractmethod
    def write(self, strain: np.ndarray, truth: np.ndarray, pred: np.ndarray, path: Path, title: str) -> Path:
        pass


class CsvPlotWriter(PlotWriter):
    suffix = ".csv"

    def write(self, strain, truth, pred, path, title) -> Path:
        frame = pd.DataFrame({
            "strain": [repr(float(v)) for v in strain],
            "true_stress": [repr(float(v)) for v in truth],
            "pred_stress": [repr(float(v)) for v in pred],
        })
        frame.to_csv(path, index=False, lineterminator="\n")
        return path


class SvgPlotWriter(PlotWriter):
    """Graphique SVG autonome, sans date dans les métadonnées."""

    suffix = ".svg"

    def write(self, strain, truth, pred, path, title) -> Path:
        fig, ax = plt.subplots()
        try:
            ax.plot(strain, truth, color="black", linewidth=1.2, label="Référence")
            ax.plot(strain, pred, color="tab:red", linestyle="--", linewidth=1.2, label="Prédiction")
            ax.set_xlabel("Déformation vraie")
            ax.set_ylabel("Contrainte vraie (MPa)")
            ax.set_title(title)
            ax.legend(loc="lower right")
            fig.tight_layout()
            fig.savefig(path, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
        return path


class PlotService:
    """
    Service des figures.
    Orchestre les sorties CSV et SVG d'une superposition.
    """

    def __init__(self):
        self.writers: List[PlotWriter] = [CsvPlotWriter(), SvgPlotWriter()]

    def emit_plot(
        self,
        pair: CurvePair,
        pred: np.ndarray,
        path: Union[str, Path],
        config: Optional[Dict[str, Any]] = None,
    ) -> List[Path]:
        """
        Écrit <path>.csv et <path>.svg (et <path>.json si config est fourni).

        Raises:
            ShapeError: Prédiction et grille de longueurs différentes
            OSError: Échec d'écriture
        """
        pred = np.asarray(pred, dtype=np.float64).reshape(-1)
        if pred.shape != pair.stress.shape or pair.strain_grid.shape != pair.stress.shape:
            raise ShapeError(
                f"emit_plot: prédiction {pred.shape}, cible {pair.stress.shape}, grille {pair.strain_grid.shape}"
            )
        base = Path(path)
        if base.suffix in (".csv", ".svg"):
            base = base.with_suffix("")
        base.parent.mkdir(parents=True, exist_ok=True)
        title = f"Échantillon {pair.sample_id} (σy = {pair.spec.sigma_y:.1f} MPa)"
        written = [
            writer.write(pair.strain_grid, pair.stress, pred, base.with_name(base.name + writer.suffix), title)
            for writer in self.writers
        ]
        if config is not None:
            provenance = base.with_name(base.name + ".json")
            provenance.write_text(
                json.dumps({"sample_id": pair.sample_id, "config": config}, indent=2, sort_keys=True) + "\n",
                encoding="utf-8",
            )
            written.append(provenance)
        logger.debug(f"Superposition écrite: {base}")
        return written

    def emit_dataset_overview(self, ds: Dataset, path: Union[str, Path], max_curves: int = 50) -> Path:
        """PNG à deux panneaux: courbes charge-déplacement et contrainte-déformation."""
        if len(ds) == 0:
            raise ShapeError("emit_dataset_overview: partition vide")
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fig, (left, right) = plt.subplots(1, 2, figsize=(9.0, 3.4))
        try:
            for sample in ds.samples[:max_curves]:
                left.plot(sample.displacement_grid, sample.load, linewidth=0.6, alpha=0.7)
                right.plot(sample.strain_grid, sample.stress, linewidth=0.6, alpha=0.7)
            left.set_xlabel("Déplacement (mm)")
            left.set_ylabel("Charge (N)")
            right.set_xlabel("Déformation vraie")
            right.set_ylabel("Contrainte vraie (MPa)")
            split = getattr(ds.split, "value", ds.split)
            fig.suptitle(f"Partition {split}: {min(len(ds), max_curves)} courbes sur {len(ds)}")
            fig.tight_layout()
            fig.savefig(path, format="png", dpi=150, metadata={"Software": None})
        finally:
            plt.close(fig)
        logger.info(f"Vue d'ensemble du jeu écrite: {path}")
        return path


# Instance singleton du service
plot_service = PlotService()


def emit_plot(pair: CurvePair, pred: np.ndarray, path: Union[str, Path], config: Optional[Dict[str, Any]] = None) -> List[Path]:
    return plot_service.emit_plot(pair, pred, path, config)


def emit_dataset_overview(ds: Dataset, path: Union[str, Path], max_curves: int = 50) -> Path:
    return plot_service.emit_dataset_overview(ds, path, max_curves)


# ---------------------------------------------------------------------------
# Comparaison de rapports
# ---------------------------------------------------------------------------


# Sens de l'optimum par colonne
_BEST_DIRECTION = {"max_mae": min, "min_mae": min, "max_r2": max, "min_r2": max}


def compare_reports(reports: Sequence[Tuple[str, EvalReport]]) -> ComparisonTable:
    """
    Tableau max/min MAE et R², dans l'ordre donné, avec le meilleur modèle par colonne.

    Raises:
        ShapeError: Aucun rapport
    """
    if not reports:
        raise ShapeError("compare_reports: au moins un rapport requis")
    rows = [
        ComparisonRow(source=source, model_tag=report.model_tag, **report.aggregates())
        for source, report in reports
    ]
    best = {}
    for column, pick in _BEST_DIRECTION.items():
        winner = pick(rows, key=lambda row: getattr(row, column))
        best[column] = winner.source
    return ComparisonTable(rows=rows, best=best)


def write_comparison(table: ComparisonTable, path: Union[str, Path]) -> Tuple[Path, Path]:
    """JSON et CSV (model_tag, source, max_mae, min_mae, max_r2, min_r2)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(table.model_dump_json(indent=2) + "\n", encoding="utf-8")
    csv_path = path.with_suffix(".csv")
    pd.DataFrame([row.model_dump() for row in table.rows]).to_csv(csv_path, index=False, lineterminator="\n")
    return path, csv_path


__all__ = [
    "mae",
    "r2",
    "check_grid",
    "predict_curves",
    "evaluate",
    "evaluate_detailed",
    "write_report",
    "read_report",
    "extreme_samples",
    "PlotWriter",
    "CsvPlotWriter",
    "SvgPlotWriter",
    "PlotService",
    "plot_service",
    "emit_plot",
    "emit_dataset_overview",
    "compare_reports",
    "write_comparison",
]
