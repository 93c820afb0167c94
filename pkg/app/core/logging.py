"""
Configuration du système de logging pour Poinçon.
Utilise Loguru pour un logging structuré et détaillé.
"""

import sys
from pathlib import Path
from typing import Optional, Dict, Any
from loguru import logger


def setup_logging(
    log_level: str = "INFO",
    log_file: Optional[str] = None,
    rotation: str = "10 MB",
    retention: str = "30 days",
) -> None:
    """
    Configure le système de logging de l'application.

    Args:
        log_level: Niveau de log (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Chemin du fichier de log (aucun fichier si None)
        rotation: Taille maximale avant rotation
        retention: Durée de rétention des logs
    """
    # Supprimer le handler par défaut
    logger.remove()

    # Format personnalisé pour les logs
    log_format = (
        "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | "
        "<level>{level: <8}</level> | "
        "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> | "
        "<level>{message}</level>"
    )

    # Format pour fichier (sans couleurs)
    file_format = (
        "{time:YYYY-MM-DD HH:mm:ss.SSS} | "
        "{level: <8} | "
        "{name}:{function}:{line} | "
        "{message}"
    )

    # La sortie standard est réservée aux résultats des commandes
    logger.add(
        sys.stderr,
        format=log_format,
        level=log_level,
        colorize=True,
        backtrace=True,
        diagnose=False,
    )

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)

        # Handler pour fichier avec rotation
        logger.add(
            log_file,
            format=file_format,
            level=log_level,
            rotation=rotation,
            retention=retention,
            compression="zip",
            backtrace=True,
            diagnose=False,
            enqueue=True,
        )

        # Fichier séparé pour les erreurs
        error_log = str(log_path.parent / "errors.log")
        logger.add(
            error_log,
            format=file_format,
            level="ERROR",
            rotation=rotation,
            retention=retention,
            compression="zip",
            backtrace=True,
            diagnose=False,
            enqueue=True,
        )

    logger.debug(f"Système de logging initialisé (niveau {log_level})")
    if log_file:
        logger.debug(f"Fichier de log: {log_file}")


def log_epoch(
    epoch: int,
    num_epochs: int,
    mean_loss: float,
    duration_s: float,
    grad_norm: Optional[float] = None,
) -> None:
    """
    Log la fin d'une époque d'entraînement.

    Args:
        epoch: Numéro d'époque (à partir de 1)
        num_epochs: Nombre total d'époques
        mean_loss: Perte moyenne de l'époque
        duration_s: Durée de l'époque en secondes
        grad_norm: Norme globale du dernier gradient (avant écrêtage)
    """
    bound = logger.bind(
        epoch=epoch,
        mean_loss=mean_loss,
        duration_s=duration_s,
        grad_norm=grad_norm,
    )
    # Une ligne INFO toutes les 10 époques, le reste en DEBUG
    level = "INFO" if epoch == 1 or epoch == num_epochs or epoch % 10 == 0 else "DEBUG"
    bound.log(
        level,
        f"Époque {epoch}/{num_epochs} - perte {mean_loss:.6e} ({duration_s:.2f}s)",
    )


def log_dataset_event(
    event_type: str,
    split: str,
    size: int,
    seed: Optional[int] = None,
    path: Optional[str] = None,
) -> None:
    """
    Log un événement sur un jeu de données.

    Args:
        event_type: Type d'événement (generation, lecture, ecriture)
        split: Partition (train, test)
        size: Nombre d'échantillons
        seed: Graine de génération
        path: Fichier concerné
    """
    logger.bind(
        event_type=event_type,
        split=split,
        size=size,
        seed=seed,
        path=path,
    ).info(
        f"Dataset {event_type}: {split} - {size} échantillons"
        + (f" (graine {seed})" if seed is not None else "")
        + (f" -> {path}" if path else "")
    )


def log_checkpoint_event(
    action: str,
    path: str,
    num_parameters: int,
    size_bytes: int,
) -> None:
    """
    Log la sauvegarde ou le chargement d'un checkpoint.

    Args:
        action: "sauvegarde" ou "chargement"
        path: Chemin du fichier
        num_parameters: Nombre total de scalaires
        size_bytes: Taille du fichier
    """
    logger.bind(
        action=action,
        path=path,
        num_parameters=num_parameters,
        size_bytes=size_bytes,
    ).info(
        f"Checkpoint {action}: {path} - {num_parameters} paramètres, {size_bytes} octets"
    )


def log_evaluation(
    model_tag: str,
    num_samples: int,
    aggregates: Dict[str, Any],
) -> None:
    """
    Log le résultat d'une évaluation.

    Args:
        model_tag: Modèle évalué (proposed, 1d-baseline)
        num_samples: Nombre d'échantillons évalués
        aggregates: Agrégats max/min MAE et R²
    """
    logger.bind(model_tag=model_tag, num_samples=num_samples, **aggregates).info(
        f"Évaluation {model_tag} sur {num_samples} échantillons: "
        f"MAE max {aggregates['max_mae']:.3f} MPa, min {aggregates['min_mae']:.3f} MPa, "
        f"R² max {aggregates['max_r2']:.4f}, min {aggregates['min_r2']:.4f}"
    )


__all__ = [
    "logger",
    "setup_logging",
    "log_epoch",
    "log_dataset_event",
    "log_checkpoint_event",
    "log_evaluation",
]
