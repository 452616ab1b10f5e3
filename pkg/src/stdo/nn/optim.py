"""Trainable parameters and the Adam update.

Parameter values are float32 (that is what gets serialized); Adam moments are
kept in float64 and the update itself is computed in float64, so the only
rounding per step is the final float32 store of the new value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericsError, ShapeError
from ..util import require_finite


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1) or not (0 <= self.beta2 < 1):
            raise ValueError(f"betas must lie in [0, 1): {self.beta1}, {self.beta2}")
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")


@dataclass
class Parameter:
    value: np.ndarray
    grad: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    step_count: int = 0

    @classmethod
    def of(cls, value: np.ndarray) -> "Parameter":
        return cls(
            value=value,
            grad=np.zeros_like(value),
            adam_m=np.zeros(value.shape, dtype=np.float64),
            adam_v=np.zeros(value.shape, dtype=np.float64),
        )

    def zero_grad(self) -> None:
        self.grad[...] = 0


def adam_step(param: Parameter, config: AdamConfig) -> Parameter:
    """One bias-corrected Adam update; increments step_count and zeroes grad."""
    g = param.grad
    if g.shape != param.value.shape:
        raise ShapeError(f"grad shape {g.shape} != value shape {param.value.shape}")
    require_finite(g, "adam gradient")

    t = param.step_count + 1
    g64 = g.astype(np.float64)
    m = config.beta1 * param.adam_m + (1.0 - config.beta1) * g64
    v = config.beta2 * param.adam_v + (1.0 - config.beta2) * g64 * g64
    m_hat = m / (1.0 - config.beta1**t)
    v_hat = v / (1.0 - config.beta2**t)
    new_value = param.value.astype(np.float64) - config.lr * m_hat / (np.sqrt(v_hat) + config.eps)

    param.adam_m = m
    param.adam_v = v
    param.value = new_value.astype(param.value.dtype)
    param.step_count = t
    param.zero_grad()
    return param
