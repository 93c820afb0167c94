"""
Configuration de l'application Poinçon.
Gestion centralisée des paramètres de processus.
"""

from functools import lru_cache
from typing import ClassVar
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Configuration principale de l'application.

    Seul LOG_LEVEL est lu depuis les variables d'environnement ou le fichier .env:
    les répertoires et le fichier de log passent par la ligne de commande ou le
    fichier de configuration JSON.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    # Configuration de l'application
    APP_NAME: ClassVar[str] = "Poincon"
    APP_VERSION: ClassVar[str] = "1.0.0"

    # Verbosité des logs
    LOG_LEVEL: str = "INFO"
    LOG_ROTATION: ClassVar[str] = "10 MB"
    LOG_RETENTION: ClassVar[str] = "30 days"

    # Répertoires par défaut
    DATA_DIR: ClassVar[str] = "data"
    OUTPUT_DIR: ClassVar[str] = "runs"


@lru_cache()
def get_settings() -> Settings:
    """
    Retourne une instance unique des paramètres (singleton pattern).
    Utilise le cache LRU pour éviter de recharger les variables à chaque appel.
    """
    return Settings()


# Instance globale des paramètres
settings = get_settings()
