"""From-scratch trainable networks: layers, losses, optimizer, training loop.

Everything runs in float64 numpy; no autograd or NN framework involved.
"""

from .layers import Conv2D, Flatten, Linear, MaxPool2D, ReLU, Sigmoid
from .losses import bce_loss, mae_loss
from .network import (
    ArchConfig,
    Network,
    build_network,
    load_model,
    predict,
    save_model,
)
from .optim import AdamW, AdamWConfig
from .training import TrainingDiverged, fit, gradient_check, train_step

__all__ = [
    "AdamW",
    "AdamWConfig",
    "ArchConfig",
    "Conv2D",
    "Flatten",
    "Linear",
    "MaxPool2D",
    "Network",
    "ReLU",
    "Sigmoid",
    "TrainingDiverged",
    "bce_loss",
    "build_network",
    "fit",
    "gradient_check",
    "load_model",
    "mae_loss",
    "predict",
    "save_model",
    "train_step",
]
