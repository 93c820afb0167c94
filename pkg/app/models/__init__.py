"""
Module des réseaux de neurones de Poinçon.
Extraction de caractéristiques et modèle seq2seq à attention.
"""

from .base import Module, Linear
from .features import FeatureExtractor, FeatureMatrix, FeatureInputs, build_feature_matrix, prepare_inputs
from .seq2seq import (
    LstmStack,
    Encoder,
    Decoder,
    CrossAttention,
    PredictionHead,
    Seq2SeqModel,
)

__all__ = [
    "Module",
    "Linear",
    "FeatureExtractor",
    "FeatureMatrix",
    "FeatureInputs",
    "build_feature_matrix",
    "prepare_inputs",
    "LstmStack",
    "Encoder",
    "Decoder",
    "CrossAttention",
    "PredictionHead",
    "Seq2SeqModel",
]
