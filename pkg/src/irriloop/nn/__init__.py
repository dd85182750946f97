"""Minimal neural-network engine: dense + LSTM layers, BPTT, Adam."""

from .io import (
    CorruptModelError,
    VersionMismatchError,
    load_extra,
    load_model,
    save_model,
)
from .layers import DenseLayer, LstmLayer, sigmoid
from .network import LayerSpec, Network, NetworkSpec, dense_spec, lstm_spec
from .train import Adam, TrainConfig, TrainResult, TrainingDiverged, batch_gradients, mse, train

__all__ = [
    "Adam",
    "CorruptModelError",
    "DenseLayer",
    "LayerSpec",
    "LstmLayer",
    "Network",
    "NetworkSpec",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "VersionMismatchError",
    "batch_gradients",
    "dense_spec",
    "load_extra",
    "load_model",
    "lstm_spec",
    "mse",
    "save_model",
    "sigmoid",
    "train",
]
