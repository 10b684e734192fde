"""Reverse-mode differentiation engine, parameter storage, and checkpoints."""

from momentrl.autodiff.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from momentrl.autodiff.engine import (
    Act,
    Var,
    backward,
    const,
    dense_forward,
    gru_step,
    no_grad,
    sample_categorical,
    softmax,
)
from momentrl.autodiff.store import ParameterStore, StoreView, adam_update

__all__ = [
    "Act",
    "CheckpointError",
    "ParameterStore",
    "StoreView",
    "Var",
    "adam_update",
    "backward",
    "const",
    "dense_forward",
    "gru_step",
    "load_checkpoint",
    "no_grad",
    "sample_categorical",
    "save_checkpoint",
    "softmax",
]
