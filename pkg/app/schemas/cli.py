"""
Configuration effective d'une commande: défauts < fichier JSON < options.
"""

import json
from copy import deepcopy
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from pydantic import BaseModel, ConfigDict, Field

from app.config import settings
from app.core.exceptions import ConfigurationError
from app.schemas.material import DEFAULT_DELTA_MAX, DEFAULT_EPS_MAX, DEFAULT_SEQ_LEN
from app.schemas.training import TrainConfig


# Architecture réduite pour que generate → train → evaluate tienne en quelques minutes
DESK_ARCHITECTURE: Dict[str, Any] = {"hidden_size": 64, "num_layers": 2}
FULL_ARCHITECTURE: Dict[str, Any] = {"hidden_size": 128, "num_layers": 5, "num_heads": 4}


def desk_train_config() -> TrainConfig:
    return TrainConfig(**DESK_ARCHITECTURE)


class GenerationConfig(BaseModel):
    """Paramètres de génération du jeu synthétique."""
    model_config = ConfigDict(extra="forbid")

    n_train: int = Field(default=4500, ge=1)
    n_test: int = Field(default=500, ge=1)
    seed: int = Field(default=0, ge=0)
    l_in: int = Field(default=DEFAULT_SEQ_LEN, ge=8)
    l_out: int = Field(default=DEFAULT_SEQ_LEN, ge=8)
    delta_max: float = Field(default=DEFAULT_DELTA_MAX, gt=0)
    eps_max: float = Field(default=DEFAULT_EPS_MAX, gt=0)


class CliConfig(BaseModel):
    """
    Configuration complète d'une exécution de la ligne de commande.
    Sérialisée dans les métadonnées de chaque artefact produit.
    """
    model_config = ConfigDict(extra="forbid")

    command: Optional[str] = None
    data_dir: str = Field(default_factory=lambda: settings.DATA_DIR)
    output_dir: str = Field(default_factory=lambda: settings.OUTPUT_DIR)
    checkpoint: Optional[str] = None
    max_train_samples: Optional[int] = Field(default=200, ge=1, description="None = toute la partition")
    generation: GenerationConfig = Field(default_factory=GenerationConfig)
    train: TrainConfig = Field(default_factory=desk_train_config)


def deep_update(base: Dict[str, Any], update: Mapping[str, Any]) -> Dict[str, Any]:
    """Fusion récursive: les valeurs de update remplacent celles de base."""
    merged = deepcopy(base)
    for key, value in update.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), dict):
            merged[key] = deep_update(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Raises:
        ConfigurationError: Fichier absent, JSON invalide ou racine non objet
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"Fichier de configuration introuvable: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"Fichier de configuration invalide ({path}): {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"La configuration {path} doit être un objet JSON")
    return data


def build_cli_config(
    file_data: Optional[Mapping[str, Any]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    full_arch: bool = False,
) -> CliConfig:
    """
    Fusionne défauts, fichier, --paper-arch puis options explicites.

    Raises:
        pydantic.ValidationError: Clé inconnue ou valeur hors plage
    """
    merged = CliConfig().model_dump(mode="json")
    if file_data:
        merged = deep_update(merged, file_data)
    if full_arch:
        merged = deep_update(merged, {"train": FULL_ARCHITECTURE})
    if overrides:
        merged = deep_update(merged, overrides)
    return CliConfig.model_validate(merged)


def nest_dotted(flat: Mapping[str, Any]) -> Dict[str, Any]:
    """{"train.epochs": 3} -> {"train": {"epochs": 3}}; les valeurs None sont ignorées."""
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        if value is None:
            continue
        node = nested
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return nested
