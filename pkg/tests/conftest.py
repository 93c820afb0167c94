"""
Fixtures partagées des tests.
"""

from typing import List

import pytest
from loguru import logger

from app.schemas.training import TrainConfig
from app.services.material_service import generate_dataset


@pytest.fixture(autouse=True)
def quiet_logging():
    """Pas de sortie loguru pendant les tests; les messages restent capturables."""
    logger.remove()
    yield
    logger.remove()


@pytest.fixture
def log_messages() -> List[str]:
    messages: List[str] = []
    handler_id = logger.add(lambda message: messages.append(message.record["message"]), level="DEBUG")
    yield messages
    logger.remove(handler_id)


@pytest.fixture(scope="session")
def small_datasets():
    """8 échantillons d'entraînement, 4 de test, grilles de 16 points."""
    return generate_dataset(n_train=8, n_test=4, seed=3, l_in=16, l_out=16)


@pytest.fixture(scope="session")
def small_train(small_datasets):
    return small_datasets[0]


@pytest.fixture(scope="session")
def small_test(small_datasets):
    return small_datasets[1]


@pytest.fixture
def tiny_config() -> TrainConfig:
    """Modèle minuscule: quelques secondes par époque."""
    return TrainConfig(
        epochs=2,
        batch_size=4,
        hidden_size=8,
        num_layers=1,
        num_heads=2,
        dropout=0.0,
        seed=5,
    )
