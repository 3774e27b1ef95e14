"""Minimal float64 differentiable-computation core."""

from . import ops
from .autograd import ConfigError, Tensor, TrainingError, UsageError, backward, grad_enabled, no_grad
from .layers import BiLSTM, Embedding, GRUCell, Linear, LSTMCell, LSTMStack
from .optim import Adam, clip_grad_norm, sgd_step
from .params import LayerSpec, ParamStore
from .recurrent import gru_layer, gru_step, lstm_layer, lstm_step

__all__ = [
    "Adam", "BiLSTM", "ConfigError", "Embedding", "GRUCell", "LSTMCell", "LSTMStack", "LayerSpec",
    "Linear", "ParamStore", "Tensor", "TrainingError", "UsageError", "backward", "clip_grad_norm", "grad_enabled",
    "gru_layer", "gru_step", "lstm_layer", "lstm_step", "no_grad", "ops", "sgd_step",
]
