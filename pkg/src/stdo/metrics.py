"""PSNR at patch, frame and video granularity, plus heatmap emission.

All levels pool per-pixel squared error first and convert to dB once, so the
video number is exactly the pixel-weighted pooling of the frame numbers (and
those of the patch numbers); nothing here averages dB values. PSNR is
computed over all three RGB channels against MAX = 1.0 and capped at 100 dB
so reports stay totally ordered and serializable.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, StdoError
from .video import PatchGrid, PatchId

PSNR_CAP = 100.0
_MSE_FLOOR = 1e-10


def _db(mse: float) -> float:
    if mse < _MSE_FLOOR:
        return PSNR_CAP
    return 10.0 * math.log10(1.0 / mse)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB between two same-shape [0, 1] float images or patches."""
    if a.shape != b.shape:
        raise ShapeError(f"psnr shape mismatch: {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    return _db(float(np.mean(diff * diff)))


@dataclass
class PsnrReport:
    """Per-patch, per-frame and whole-video PSNR plus the raw squared error
    it was pooled from (patch_sse keeps the pooling exact and re-derivable)."""

    per_patch: dict[PatchId, float]
    per_frame: dict[int, float]
    video: float
    patch_sse: dict[PatchId, float] = field(repr=False, default_factory=dict)
    pixels_per_patch: int = 0

    @classmethod
    def from_patch_sse(cls, ids: list[PatchId], sse: np.ndarray, pixels_per_patch: int) -> "PsnrReport":
        if len(ids) != len(sse):
            raise ShapeError(f"{len(ids)} ids vs {len(sse)} error entries")
        per_patch = {}
        frame_sse: dict[int, float] = {}
        frame_n: dict[int, int] = {}
        for pid, s in zip(ids, sse):
            per_patch[pid] = _db(s / pixels_per_patch)
            frame_sse[pid.t] = frame_sse.get(pid.t, 0.0) + s
            frame_n[pid.t] = frame_n.get(pid.t, 0) + 1
        per_frame = {t: _db(frame_sse[t] / (frame_n[t] * pixels_per_patch)) for t in frame_sse}
        video = _db(float(sum(frame_sse.values())) / (len(ids) * pixels_per_patch))
        return cls(
            per_patch=per_patch,
            per_frame=per_frame,
            video=video,
            patch_sse=dict(zip(ids, (float(s) for s in sse))),
            pixels_per_patch=pixels_per_patch,
        )

    def mean_patch_db(self, ids=None) -> float:
        vals = [self.per_patch[p] for p in (ids if ids is not None else self.per_patch)]
        return float(np.mean(vals))

    def pooled_db(self, ids) -> float:
        """PSNR of the pooled squared error over a subset of patches."""
        ids = list(ids)
        total = sum(self.patch_sse[p] for p in ids)
        return _db(total / (len(ids) * self.pixels_per_patch))


def patch_sse_u8(pred_u8: np.ndarray, hr_f32: np.ndarray) -> np.ndarray:
    """Sum of squared error per patch between quantized predictions (N,3,h,w)
    uint8 and float reference patches; both compared on the [0, 1] scale."""
    if pred_u8.shape != hr_f32.shape:
        raise ShapeError(f"prediction {pred_u8.shape} vs reference {hr_f32.shape}")
    diff = pred_u8.astype(np.float64) / 255.0 - hr_f32.astype(np.float64)
    return (diff * diff).sum(axis=(1, 2, 3))


def write_pgm(gray: np.ndarray, path: str) -> None:
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(gray.astype(np.uint8).tobytes())


def read_pgm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] != b"P5":
        raise StdoError(f"{path}: not a binary PGM")
    parts = data[2:].split(maxsplit=3)
    w, h = int(parts[0]), int(parts[1])
    raw = parts[3][: w * h] if len(parts) > 3 else b""
    if len(raw) != w * h:
        raise StdoError(f"{path}: truncated PGM")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w).copy()


def emit_heatmap(report: PsnrReport, grid: PatchGrid, t: int, out_prefix: str, cell: int = 1) -> tuple[str, str]:
    """Write frame t's patch PSNRs as ``<prefix>_<t>.csv`` (rows j, columns i,
    4 decimals) and ``<prefix>_<t>.pgm`` (frame-local [min, max] dB mapped
    linearly to [0, 255], one ``cell x cell`` block per patch)."""
    values = np.empty((grid.rows, grid.cols), dtype=np.float64)
    for j in range(grid.rows):
        for i in range(grid.cols):
            pid = PatchId(i, j, t)
            if pid not in report.per_patch:
                raise StdoError(f"report does not cover patch {pid}")
            values[j, i] = report.per_patch[pid]

    parent = os.path.dirname(out_prefix)
    if parent:
        os.makedirs(parent, exist_ok=True)
    csv_path = f"{out_prefix}_{t}.csv"
    with open(csv_path, "w", encoding="utf-8") as f:
        for j in range(grid.rows):
            f.write(",".join(f"{values[j, i]:.4f}" for i in range(grid.cols)) + "\n")

    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        gray = np.floor((values - lo) / (hi - lo) * 255.0 + 0.5).astype(np.uint8)
    else:
        gray = np.zeros_like(values, dtype=np.uint8)
    if cell > 1:
        gray = np.kron(gray, np.ones((cell, cell), dtype=np.uint8))
    pgm_path = f"{out_prefix}_{t}.pgm"
    write_pgm(gray, pgm_path)
    return csv_path, pgm_path
