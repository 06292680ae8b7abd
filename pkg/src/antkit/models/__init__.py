"""Local temporal dynamics models over action-label sequences."""

from .ngram import NgramModel, train_ngram
from .neural import (
    ActionSequenceModel,
    ModelBindings,
    SeqModelConfig,
    train_seq_model,
)
from .checkpoint import (
    Checkpoint,
    load_checkpoint,
    load_model,
    parameter_hash,
    save_checkpoint,
)
from .decoding import Beam, Greedy, TopP, predict, predict_topdown

__all__ = [
    "ActionSequenceModel",
    "Beam",
    "Checkpoint",
    "Greedy",
    "ModelBindings",
    "NgramModel",
    "SeqModelConfig",
    "TopP",
    "load_checkpoint",
    "load_model",
    "parameter_hash",
    "predict",
    "predict_topdown",
    "save_checkpoint",
    "train_ngram",
]
