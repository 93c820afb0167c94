"""
Service d'entraînement du modèle seq2seq.

Boucle par époque: mélange déterministe, batchs, perte accumulée pas à pas,
rétropropagation, écrêtage, pas d'Adam puis remise à zéro des gradients.
Gère aussi le format binaire des checkpoints et l'historique des pertes.
"""

import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from app.core.exceptions import CheckpointError, DivergenceError, DomainError, ShapeError
from app.core.logging import logger, log_checkpoint_event, log_epoch
from app.core.optim import AdamState, adam_step, clip_grad_norm
from app.core.rng import Rng
from app.core.tensor import Tensor, absolute, as_tensor, mean
from app.models.features import prepare_inputs
from app.models.seq2seq import Seq2SeqModel
from app.schemas.material import Dataset, NormStats
from app.schemas.training import GridInfo, LossKind, ParameterInfo, TrainConfig


CHECKPOINT_MAGIC = b"SPT2SS01"
CHECKPOINT_FORMAT = "spt2ss"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<I")

# Flux enfants de la graine d'entraînement
_INIT_STREAM = 0
_TRAIN_STREAM = 1


# ---------------------------------------------------------------------------
# Pertes
# ---------------------------------------------------------------------------


def criterion(p_t, y_t, kind: Union[LossKind, str] = LossKind.MSE) -> Tensor:
    """Critère d'un pas de temps, moyenné sur le lot."""
    p_t, y_t = as_tensor(p_t), as_tensor(y_t)
    diff = p_t - y_t
    if LossKind(kind) == LossKind.MSE:
        return mean(diff * diff)
    return mean(absolute(diff))


def sequence_loss(pred, target, kind: Union[LossKind, str] = LossKind.MSE) -> Tensor:
    """
    Somme des critères par pas de temps, divisée par L_out.

    pred et target: [L_out] ou [B × L_out], en unités normalisées.

    Raises:
        ShapeError: Longueurs différentes
    """
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"perte: prédiction {pred.shape} et cible {target.shape} de formes différentes")
    if pred.ndim == 1:
        pred = pred.reshape(1, -1)
        target = target.reshape(1, -1)
    steps = pred.shape[1]
    if steps == 0:
        raise ShapeError("perte: séquence vide")
    total = criterion(pred[:, 0], target[:, 0], kind)
    for t in range(1, steps):
        total = total + criterion(pred[:, t], target[:, t], kind)
    return total * (1.0 / steps)


def loss(pred, target, kind: Union[LossKind, str] = LossKind.MSE) -> Tensor:
    """Alias de sequence_loss: mse ou mae accumulé pas à pas."""
    return sequence_loss(pred, target, kind)


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    """
    Modèle entraîné et tout ce qu'il faut pour le reconstruire.

    Les paramètres sont conservés à la précision stockée (float32),
    si bien qu'un modèle reconstruit depuis l'objet ou depuis le fichier
    produit des prédictions identiques au bit près.
    """
    config: TrainConfig
    parameters: Dict[str, np.ndarray]
    norm_stats: NormStats
    grid: GridInfo
    epoch: int = 0
    final_loss: float = float("nan")
    loss_history: List[float] = field(default_factory=list)
    run_config: Optional[Dict[str, Any]] = None

    @classmethod
    def from_model(
        cls,
        model: Seq2SeqModel,
        config: TrainConfig,
        norm_stats: NormStats,
        grid: GridInfo,
        epoch: int,
        loss_history: List[float],
        run_config: Optional[Dict[str, Any]] = None,
    ) -> "Checkpoint":
        parameters = {
            name: p.data.astype("<f4").astype(np.float64) for name, p in model.named_parameters()
        }
        return cls(
            config=config,
            parameters=parameters,
            norm_stats=norm_stats,
            grid=grid,
            epoch=epoch,
            final_loss=float(loss_history[-1]) if loss_history else float("nan"),
            loss_history=[float(v) for v in loss_history],
            run_config=run_config,
        )

    @property
    def num_parameters(self) -> int:
        return int(sum(a.size for a in self.parameters.values()))

    def build_model(self) -> Seq2SeqModel:
        """
        Reconstruit le modèle en mode inférence.

        Raises:
            CheckpointError: Noms ou formes de paramètres incompatibles avec la configuration
        """
        model = Seq2SeqModel(self.config, Rng(self.config.seed).split(_INIT_STREAM))
        model.load_arrays(self.parameters)
        model.eval()
        return model

    def metadata(self) -> Dict[str, Any]:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": self.config.model_dump(mode="json"),
            "parameters": [
                ParameterInfo(name=name, shape=list(a.shape)).model_dump()
                for name, a in self.parameters.items()
            ],
            "norm_stats": self.norm_stats.model_dump(),
            "grid": self.grid.model_dump(),
            "epoch": self.epoch,
            "final_loss": self.final_loss,
            "loss_history": self.loss_history,
            "run_config": self.run_config,
        }

    def to_bytes(self) -> bytes:
        meta = json.dumps(self.metadata(), sort_keys=True, separators=(",", ":")).encode("utf-8")
        payload = b"".join(
            np.ascontiguousarray(a, dtype="<f4").tobytes(order="C") for a in self.parameters.values()
        )
        return CHECKPOINT_MAGIC + _HEADER.pack(len(meta)) + meta + payload

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Checkpoint":
        """
        Raises:
            CheckpointError: Signature, version, métadonnées ou taille de charge utile invalides
        """
        magic_size = len(CHECKPOINT_MAGIC)
        if blob[:magic_size] != CHECKPOINT_MAGIC:
            raise CheckpointError(f"Signature invalide: {blob[:magic_size]!r}, attendu {CHECKPOINT_MAGIC!r}")
        offset = magic_size + _HEADER.size
        if len(blob) < offset:
            raise CheckpointError("Checkpoint tronqué dans l'en-tête")
        (meta_size,) = _HEADER.unpack_from(blob, magic_size)
        if len(blob) < offset + meta_size:
            raise CheckpointError(
                f"Checkpoint tronqué dans les métadonnées: {meta_size} octets attendus, "
                f"{len(blob) - offset} disponibles"
            )
        try:
            meta = json.loads(blob[offset:offset + meta_size].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"Métadonnées illisibles: {exc}") from None
        if not isinstance(meta, dict):
            raise CheckpointError("Métadonnées: objet JSON attendu")

        if meta.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(f"Format inconnu: {meta.get('format')!r}")
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"Version de checkpoint {meta.get('version')} non supportée (attendu {CHECKPOINT_VERSION})"
            )

        try:
            infos = [ParameterInfo(**p) for p in meta["parameters"]]
            config = TrainConfig(**meta["config"])
            norm_stats = NormStats(**meta["norm_stats"])
            grid = GridInfo(**meta["grid"])
            epoch = int(meta.get("epoch", 0))
            final_loss = float(meta.get("final_loss", float("nan")))
            loss_history = [float(v) for v in meta.get("loss_history", [])]
        except KeyError as exc:
            raise CheckpointError(f"Métadonnées incomplètes: clé {exc} absente") from None
        except (TypeError, ValueError) as exc:
            # ValueError couvre pydantic.ValidationError
            raise CheckpointError(f"Métadonnées invalides: {exc}") from None

        expected = sum(int(np.prod(info.shape, dtype=np.int64)) for info in infos) * 4
        payload = blob[offset + meta_size:]
        if len(payload) != expected:
            raise CheckpointError(
                f"Charge utile de {len(payload)} octets, {expected} attendus"
            )

        parameters: Dict[str, np.ndarray] = {}
        cursor = 0
        for info in infos:
            count = int(np.prod(info.shape, dtype=np.int64))
            values = np.frombuffer(payload, dtype="<f4", count=count, offset=cursor)
            parameters[info.name] = values.astype(np.float64).reshape(info.shape)
            cursor += count * 4

        return cls(
            config=config,
            parameters=parameters,
            norm_stats=norm_stats,
            grid=grid,
            epoch=epoch,
            final_loss=final_loss,
            loss_history=loss_history,
            run_config=meta.get("run_config"),
        )


def save_checkpoint(ckpt: Checkpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = ckpt.to_bytes()
    path.write_bytes(blob)
    log_checkpoint_event("sauvegarde", str(path), ckpt.num_parameters, len(blob))
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Relit un checkpoint et vérifie qu'il reconstruit bien un modèle.

    Raises:
        CheckpointError: Fichier invalide ou incompatible
        OSError: Lecture impossible
    """
    path = Path(path)
    blob = path.read_bytes()
    ckpt = Checkpoint.from_bytes(blob)
    # Contrôle des noms et formes contre l'architecture décrite par la configuration
    ckpt.build_model()
    log_checkpoint_event("chargement", str(path), ckpt.num_parameters, len(blob))
    return ckpt


def write_loss_history(
    history: List[float],
    path: Union[str, Path],
    config: Optional[Dict[str, Any]] = None,
) -> Path:
    """CSV (epoch, mean_loss), époques à partir de 1, plus un fichier .meta.json de provenance."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({
        "epoch": [str(i + 1) for i in range(len(history))],
        "mean_loss": [repr(float(v)) for v in history],
    })
    frame.to_csv(path, index=False, lineterminator="\n")
    if config is not None:
        meta_path = path.with_name(path.name + ".meta.json")
        meta_path.write_text(json.dumps({"config": config}, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_loss_history(path: Union[str, Path]) -> List[float]:
    frame = pd.read_csv(path, float_precision="round_trip")
    return [float(v) for v in frame["mean_loss"]]


# ---------------------------------------------------------------------------
# Boucle d'entraînement
# ---------------------------------------------------------------------------


@dataclass
class TrainState:
    """
    Attributes:
        epoch: Dernière époque terminée
        batch_loss: Perte du dernier batch
        adam: État de l'optimiseur
        history: Perte moyenne par époque
    """
    adam: AdamState
    epoch: int = 0
    batch_loss: float = 0.0
    last_grad_norm: float = 0.0
    history: List[float] = field(default_factory=list)


class Trainer:
    """
    Entraîne un Seq2SeqModel sur une partition.

    Le modèle est initialisé par Rng(seed).split(0); mélanges, tirages de
    teacher forcing et masques de dropout viennent de Rng(seed).split(1).split(epoch).
    """

    def __init__(
        self,
        train_ds: Dataset,
        config: TrainConfig,
        max_samples: Optional[int] = None,
        run_config: Optional[Dict[str, Any]] = None,
    ):
        if len(train_ds) == 0:
            raise ShapeError("train: jeu d'entraînement vide")
        self.config = config
        self.dataset = train_ds
        self.run_config = run_config
        samples = train_ds.samples if max_samples is None else train_ds.samples[:max_samples]
        self.samples = list(samples)
        self.norm_stats = train_ds.norm_stats

        root = Rng(config.seed)
        self.model = Seq2SeqModel(config, root.split(_INIT_STREAM))
        self.params = self.model.parameters()
        self.train_stream = root.split(_TRAIN_STREAM)
        self.state = TrainState(
            adam=AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
        )

        # Les images GAF n'ont pas de paramètres: calculées une seule fois
        self.inputs = prepare_inputs(self.samples, self.norm_stats, config.gaf_enabled)
        self.targets = np.stack([self.norm_stats.normalize_stress(s.stress) for s in self.samples])
        logger.info(
            f"Entraînement {config.model_tag}: {len(self.samples)} échantillons, "
            f"{self.model.num_parameters()} paramètres"
        )

    def _suspect_parameter(self) -> Optional[str]:
        for name, p in self.params.items():
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                return name
        for name, p in self.params.items():
            if not np.all(np.isfinite(p.data)):
                return name
        if not self.params:
            return None
        return max(self.params, key=lambda n: float(np.abs(self.params[n].data).max()))

    def train_batch(self, indices: List[int], rng: Rng, epoch: int, batch: int) -> float:
        """Une itération: forward, perte, backward, écrêtage, Adam, remise à zéro."""
        self.model.train()
        try:
            pred = self.model.run(
                self.inputs.subset(indices),
                target=self.targets[indices],
                teacher_forcing_ratio=self.config.teacher_forcing_ratio,
                rng=rng,
            )
        except DomainError as exc:
            # Scores d'attention NaN: les paramètres ont déjà divergé
            logger.error(f"Passe avant impossible: {exc}")
            raise DivergenceError(epoch, batch, self._suspect_parameter(), float("nan")) from exc
        value_tensor = sequence_loss(pred, self.targets[indices], self.config.loss_kind)
        value = value_tensor.item()
        if not np.isfinite(value):
            raise DivergenceError(epoch, batch, self._suspect_parameter(), value)

        value_tensor.backward()
        norm = clip_grad_norm(self.params, self.config.grad_clip)
        if not np.isfinite(norm):
            raise DivergenceError(epoch, batch, self._suspect_parameter(), value)
        adam_step(self.params, {name: p.grad for name, p in self.params.items()}, self.state.adam)
        self.model.zero_grad()

        self.state.batch_loss = value
        self.state.last_grad_norm = norm
        return value

    def train_epoch(self, epoch: int) -> float:
        """Époque numérotée à partir de 1; retourne la perte moyenne par échantillon."""
        rng = self.train_stream.split(epoch)
        order = rng.permutation(len(self.samples))
        size = self.config.batch_size
        weighted, count = 0.0, 0
        for batch, start in enumerate(range(0, len(order), size)):
            indices = order[start:start + size]
            weighted += self.train_batch(indices, rng, epoch, batch) * len(indices)
            count += len(indices)
        return weighted / count

    def fit(self) -> Tuple[Checkpoint, List[float]]:
        for epoch in range(1, self.config.epochs + 1):
            start = time.perf_counter()
            mean_loss = self.train_epoch(epoch)
            self.state.epoch = epoch
            self.state.history.append(mean_loss)
            log_epoch(epoch, self.config.epochs, mean_loss, time.perf_counter() - start, self.state.last_grad_norm)

        grid = GridInfo(
            l_in=self.dataset.l_in,
            l_out=self.dataset.l_out,
            delta_max=self.dataset.delta_max,
            eps_max=self.dataset.eps_max,
        )
        ckpt = Checkpoint.from_model(
            self.model,
            self.config,
            self.norm_stats,
            grid,
            self.state.epoch,
            self.state.history,
            self.run_config,
        )
        return ckpt, list(self.state.history)


def train(
    train_ds: Dataset,
    config: TrainConfig,
    max_samples: Optional[int] = None,
    run_config: Optional[Dict[str, Any]] = None,
) -> Tuple[Checkpoint, List[float]]:
    """
    Entraîne un modèle et retourne (checkpoint, historique des pertes).

    Raises:
        ShapeError: Jeu de données vide
        DivergenceError: Perte non finie
    """
    return Trainer(train_ds, config, max_samples, run_config).fit()


__all__ = [
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_VERSION",
    "criterion",
    "sequence_loss",
    "loss",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "write_loss_history",
    "read_loss_history",
    "TrainState",
    "Trainer",
    "train",
]
