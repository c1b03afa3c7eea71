"""Multi-sense word embeddings with Gumbel-softmax sense attention."""

from .attention import AttentionMode, Variant
from .corpus import Vocabulary, build_vocab
from .trainer import ModelParams, TrainConfig, train

__all__ = [
    "AttentionMode",
    "Variant",
    "Vocabulary",
    "build_vocab",
    "ModelParams",
    "TrainConfig",
    "train",
]
