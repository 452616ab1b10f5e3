from .model import Arch, EspcnLite, ModelSpec, SrModel, WdsrLite, build_model, model_from_bytes
from .ops import (
    conv2d_backward,
    conv2d_forward,
    l1_loss,
    pixel_shuffle,
    pixel_unshuffle,
    relu,
    relu_backward,
)
from .optim import AdamConfig, Parameter, adam_step

__all__ = [
    "Arch",
    "ModelSpec",
    "SrModel",
    "EspcnLite",
    "WdsrLite",
    "build_model",
    "model_from_bytes",
    "conv2d_forward",
    "conv2d_backward",
    "relu",
    "relu_backward",
    "pixel_shuffle",
    "pixel_unshuffle",
    "l1_loss",
    "AdamConfig",
    "Parameter",
    "adam_step",
]
