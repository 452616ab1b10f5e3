"""Small shared helpers: seeding, finiteness checks, 8-bit quantization."""

from __future__ import annotations

import numpy as np

from .errors import NumericsError


def rng_from(seed: int, *key: int) -> np.random.Generator:
    """Deterministic generator for (seed, key) so independent consumers of the
    same user seed never share a stream."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def require_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise NumericsError(f"non-finite values in {what}")


def quantize_u8(x: np.ndarray) -> np.ndarray:
    """Clamp to [0, 1] then round half up to 8 bits."""
    return np.floor(np.clip(x, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def dequantize_u8(q: np.ndarray) -> np.ndarray:
    return q.astype(np.float32) / np.float32(255.0)
