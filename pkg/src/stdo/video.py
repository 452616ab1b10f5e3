"""Frame I/O, bicubic resampling, the patch grid, and synthetic test videos.

Frames are 8-bit interleaved RGB. The canonical on-disk format is binary PPM
(P6, maxval 255), one file per frame named ``frame_%06d.ppm``; a raw
concatenated-RGB format with a one-line ``W H T`` sidecar exists for bulk
data. Pixel math happens on [0, 1] floats; quantization (clamp, round half
up) occurs only at 8-bit boundaries.

The bicubic resampler is the separable cubic-convolution kernel with
a = -0.5 (Catmull-Rom), edge-clamped, with pixel-center alignment
(src = (dst + 0.5) * in/out - 0.5). That exact definition is what makes LR
generation reproducible bit-for-bit across implementations.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .errors import FormatError, ShapeError, StdoError
from .util import dequantize_u8, quantize_u8, rng_from

PPM_NAME = "frame_%06d.ppm"
_PPM_RE = re.compile(r"^frame_(\d{6})\.ppm$")


@dataclass
class FrameSequence:
    """An ordered stack of same-size RGB frames, shape (T, H, W, 3) uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 4 or p.shape[3] != 3 or p.dtype != np.uint8:
            raise ShapeError(f"frame stack must be (T, H, W, 3) uint8, got {p.shape} {p.dtype}")
        if p.shape[0] < 1:
            raise ShapeError("a sequence needs at least one frame")

    @property
    def t(self) -> int:
        return self.pixels.shape[0]

    @property
    def h(self) -> int:
        return self.pixels.shape[1]

    @property
    def w(self) -> int:
        return self.pixels.shape[2]

    def frame(self, t: int) -> np.ndarray:
        return self.pixels[t]


# ---------------------------------------------------------------------------
# PPM / raw I/O


def write_ppm(frame: np.ndarray, path: str) -> None:
    h, w, _ = frame.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n255\n" % (w, h))
        f.write(frame.tobytes())


def read_ppm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if data[:2] != b"P6":
        raise FormatError(f"{path}: not a binary PPM (bad magic)")
    # header: magic, width, height, maxval; whitespace/comment separated
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PPM header")
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(v) for v in fields)
    except ValueError:
        raise FormatError(f"{path}: non-numeric PPM header field") from None
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    need = 3 * w * h
    raw = data[pos : pos + need]
    if len(raw) != need:
        raise FormatError(f"{path}: truncated PPM pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).copy()


def write_frames(seq: FrameSequence, dirpath: str) -> None:
    os.makedirs(dirpath, exist_ok=True)
    for t in range(seq.t):
        write_ppm(seq.frame(t), os.path.join(dirpath, PPM_NAME % t))


def write_raw8(seq: FrameSequence, path: str) -> None:
    with open(path, "wb") as f:
        f.write(seq.pixels.tobytes())
    with open(path + ".hdr", "w", encoding="utf-8") as f:
        f.write(f"{seq.w} {seq.h} {seq.t}\n")


def _load_ppm_dir(path: str) -> FrameSequence:
    indices = {}
    for name in os.listdir(path):
        m = _PPM_RE.match(name)
        if m:
            indices[int(m.group(1))] = name
    if not indices:
        raise FormatError(f"{path}: no frame_######.ppm files found")
    count = max(indices) + 1
    for i in range(count):
        if i not in indices:
            raise FormatError(f"{path}: frame index {i} missing from sequence")
    frames = [read_ppm(os.path.join(path, indices[i])) for i in range(count)]
    first = frames[0].shape
    for i, fr in enumerate(frames):
        if fr.shape != first:
            raise FormatError(f"{path}: frame {i} is {fr.shape[1]}x{fr.shape[0]}, expected {first[1]}x{first[0]}")
    return FrameSequence(np.stack(frames))


def _load_raw8(path: str) -> FrameSequence:
    hdr = path + ".hdr"
    try:
        with open(hdr, "r", encoding="utf-8") as f:
            parts = f.read().split()
    except FileNotFoundError:
        raise FormatError(f"{hdr}: raw8 sidecar header not found") from None
    if len(parts) != 3:
        raise FormatError(f"{hdr}: expected 'W H T'")
    w, h, t = (int(p) for p in parts)
    with open(path, "rb") as f:
        raw = f.read()
    need = 3 * w * h * t
    if len(raw) != need:
        raise FormatError(f"{path}: raw8 payload is {len(raw)} bytes, header implies {need}")
    return FrameSequence(np.frombuffer(raw, dtype=np.uint8).reshape(t, h, w, 3).copy())


def load_frames(path: str, fmt: str = "ppm_dir") -> FrameSequence:
    if fmt == "ppm_dir":
        return _load_ppm_dir(path)
    if fmt == "raw8":
        return _load_raw8(path)
    raise ValueError(f"unknown frame format {fmt!r}")


# ---------------------------------------------------------------------------
# Bicubic resampling


def _cubic_axis(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-output-pixel tap indices (n_out, 4) and weights for one axis."""
    scale = n_in / n_out
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * scale - 0.5
    base = np.floor(src)
    t = src - base
    # Catmull-Rom (a = -0.5) tap weights at offsets -1, 0, +1, +2
    w = np.empty((n_out, 4), dtype=np.float64)
    w[:, 0] = ((-0.5 * t + 1.0) * t - 0.5) * t
    w[:, 1] = (1.5 * t - 2.5) * t * t + 1.0
    w[:, 2] = ((-1.5 * t + 2.0) * t + 0.5) * t
    w[:, 3] = (0.5 * t - 0.5) * t * t
    idx = base[:, None].astype(np.int64) + np.arange(-1, 3)
    np.clip(idx, 0, n_in - 1, out=idx)
    return idx, w


def bicubic_resize(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Resample a (h, w) or (h, w, c) float image; returns float32.

    Internally float64; output is NOT clamped (clamping belongs to the 8-bit
    quantization boundary).
    """
    if out_w < 1 or out_h < 1:
        raise ShapeError(f"output dims must be >= 1, got {out_w}x{out_h}")
    if img.ndim not in (2, 3):
        raise ShapeError(f"expected (h, w) or (h, w, c) image, got {img.shape}")
    work = img.astype(np.float64)
    squeeze = work.ndim == 2
    if squeeze:
        work = work[:, :, None]
    h, w, _ = work.shape

    idx, wts = _cubic_axis(w, out_w)
    work = (work[:, idx, :] * wts[None, :, :, None]).sum(axis=2)
    idy, wtsy = _cubic_axis(h, out_h)
    work = (work[idy, :, :] * wtsy[:, :, None, None]).sum(axis=1)

    out = work.astype(np.float32)
    return out[:, :, 0] if squeeze else out


def make_lr_sequence(hr: FrameSequence, scale: int) -> FrameSequence:
    """Bicubic-downscale each frame by ``scale`` after cropping the top-left
    region to dimensions divisible by it; requantizes to 8 bits."""
    if scale not in (2, 3, 4):
        raise StdoError(f"scale must be 2, 3 or 4, got {scale}")
    w2 = (hr.w // scale) * scale
    h2 = (hr.h // scale) * scale
    if w2 == 0 or h2 == 0:
        raise ShapeError(f"frames {hr.w}x{hr.h} too small for scale {scale}")
    out = np.empty((hr.t, h2 // scale, w2 // scale, 3), dtype=np.uint8)
    for t in range(hr.t):
        f = dequantize_u8(hr.frame(t)[:h2, :w2])
        out[t] = quantize_u8(bicubic_resize(f, w2 // scale, h2 // scale))
    return FrameSequence(out)


# ---------------------------------------------------------------------------
# Patch grid


class PatchId(NamedTuple):
    i: int
    j: int
    t: int


@dataclass(frozen=True)
class PatchGrid:
    """Non-overlapping patch tiling, defined on the LR raster.

    I = floor(lr_w / patch_w) columns, J rows; the active region is the
    top-left (crop_w, crop_h) block and the right/bottom remainder is
    excluded. HR patches are exactly scale times larger.
    """

    lr_patch_w: int
    lr_patch_h: int
    scale: int
    cols: int
    rows: int

    @classmethod
    def from_lr(cls, lr_w: int, lr_h: int, patch_w: int, patch_h: int, scale: int) -> "PatchGrid":
        if patch_w < 1 or patch_h < 1:
            raise ShapeError(f"patch dims must be >= 1, got {patch_w}x{patch_h}")
        cols, rows = lr_w // patch_w, lr_h // patch_h
        if cols < 1 or rows < 1:
            raise ShapeError(f"LR raster {lr_w}x{lr_h} smaller than one {patch_w}x{patch_h} patch")
        return cls(patch_w, patch_h, scale, cols, rows)

    @property
    def crop_w(self) -> int:
        return self.cols * self.lr_patch_w

    @property
    def crop_h(self) -> int:
        return self.rows * self.lr_patch_h

    @property
    def per_frame(self) -> int:
        return self.cols * self.rows

    def n_patches(self, t_frames: int) -> int:
        return self.per_frame * t_frames

    def linear_index(self, pid: PatchId) -> int:
        return pid.t * self.per_frame + pid.j * self.cols + pid.i

    def patch_id(self, linear: int) -> PatchId:
        t, rem = divmod(linear, self.per_frame)
        j, i = divmod(rem, self.cols)
        return PatchId(i, j, t)

    def frame_ids(self, t: int) -> list[PatchId]:
        return [PatchId(i, j, t) for j in range(self.rows) for i in range(self.cols)]


@dataclass
class PatchDataset:
    """LR/HR patch pairs as [0, 1] float32 stacks aligned with ``ids``.

    A freshly sliced dataset covers the full grid in linear-index order;
    ``select`` produces training subsets that keep the same grid.
    """

    grid: PatchGrid
    t_frames: int
    ids: list[PatchId]
    lr: np.ndarray  # (N, 3, patch_h, patch_w)
    hr: np.ndarray  # (N, 3, scale*patch_h, scale*patch_w)

    def __len__(self) -> int:
        return len(self.ids)

    def select(self, indices: Iterable[int]) -> "PatchDataset":
        idx = list(indices)
        return PatchDataset(
            grid=self.grid,
            t_frames=self.t_frames,
            ids=[self.ids[i] for i in idx],
            lr=self.lr[idx],
            hr=self.hr[idx],
        )

    def select_ids(self, ids: Iterable[PatchId]) -> "PatchDataset":
        lookup = {pid: n for n, pid in enumerate(self.ids)}
        return self.select(lookup[pid] for pid in ids)


def _tile(frames_f32: np.ndarray, rows: int, cols: int, ph: int, pw: int) -> np.ndarray:
    """(T, rows*ph, cols*pw, 3) -> (T*rows*cols, 3, ph, pw), linear order."""
    t = frames_f32.shape[0]
    v = frames_f32.reshape(t, rows, ph, cols, pw, 3)
    v = v.transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(v.reshape(t * rows * cols, 3, ph, pw))


def slice_into_patches(hr: FrameSequence, lr: FrameSequence, grid: PatchGrid) -> PatchDataset:
    """Cut both rasters into the grid's patches; N = I*J*T pairs in linear order."""
    r = grid.scale
    if hr.t != lr.t:
        raise ShapeError(f"HR has {hr.t} frames, LR has {lr.t}")
    if lr.w < grid.crop_w or lr.h < grid.crop_h:
        raise ShapeError(f"LR {lr.w}x{lr.h} smaller than grid active region {grid.crop_w}x{grid.crop_h}")
    if lr.w - grid.crop_w >= grid.lr_patch_w or lr.h - grid.crop_h >= grid.lr_patch_h:
        raise ShapeError("grid does not match the LR raster (more columns/rows would fit)")
    if hr.w < r * grid.crop_w or hr.h < r * grid.crop_h:
        raise ShapeError(f"HR {hr.w}x{hr.h} cannot cover the grid at scale {r}")

    pw, ph = grid.lr_patch_w, grid.lr_patch_h
    lr_act = dequantize_u8(lr.pixels[:, : grid.crop_h, : grid.crop_w])
    hr_act = dequantize_u8(hr.pixels[:, : r * grid.crop_h, : r * grid.crop_w])
    ids = [pid for t in range(lr.t) for pid in grid.frame_ids(t)]
    return PatchDataset(
        grid=grid,
        t_frames=lr.t,
        ids=ids,
        lr=_tile(lr_act, grid.rows, grid.cols, ph, pw),
        hr=_tile(hr_act, grid.rows, grid.cols, r * ph, r * pw),
    )


def assemble_frame(patches: list[tuple[PatchId, np.ndarray]], grid: PatchGrid, t: int) -> np.ndarray:
    """Reassemble one frame's HR patches into an (H, W, 3) uint8 image.

    Accepts float patches in [0, 1] (quantized here, round half up) or uint8
    patches (placed verbatim). Requires exactly the I*J patches of frame t.
    """
    expected = set(grid.frame_ids(t))
    seen = set()
    r = grid.scale
    ph, pw = r * grid.lr_patch_h, r * grid.lr_patch_w
    out = np.zeros((grid.rows * ph, grid.cols * pw, 3), dtype=np.uint8)
    for pid, pix in patches:
        if pid in seen:
            raise StdoError(f"duplicate patch {pid}")
        if pid not in expected:
            raise StdoError(f"patch {pid} does not belong to frame {t}")
        seen.add(pid)
        arr = pix[0] if pix.ndim == 4 else pix  # allow (1, 3, h, w)
        if arr.shape != (3, ph, pw):
            raise ShapeError(f"patch {pid} has shape {arr.shape}, expected {(3, ph, pw)}")
        cell = arr.transpose(1, 2, 0)
        if cell.dtype != np.uint8:
            cell = quantize_u8(cell)
        out[pid.j * ph : (pid.j + 1) * ph, pid.i * pw : (pid.i + 1) * pw] = cell
    missing = expected - seen
    if missing:
        raise StdoError(f"missing patch {sorted(missing)[0]} for frame {t}")
    return out


# ---------------------------------------------------------------------------
# Synthetic videos


MOTIFS = ("texture", "rings", "checker")


def synth_video(w: int, h: int, t_frames: int, motif: str = "texture", seed: int = 0) -> FrameSequence:
    """Deterministic test video: a strongly textured region drifting over a
    mildly woven gradient background, so per-patch upscaling difficulty (and
    hence anchor PSNR) varies across space and time."""
    if w < 32 or h < 32:
        raise ShapeError(f"synthetic video needs dims >= 32, got {w}x{h}")
    if t_frames < 2:
        raise ShapeError(f"synthetic video needs at least 2 frames, got {t_frames}")
    if motif not in MOTIFS:
        raise ValueError(f"unknown motif {motif!r}, choose from {MOTIFS}")

    rng = rng_from(seed, 11)
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    gdir = rng.uniform(0, 2 * np.pi)
    grad = (np.cos(gdir) * xx / w + np.sin(gdir) * yy / h + 1.0) / 2.0
    g0 = rng.uniform(0.3, 0.45)
    weave_phase = rng.uniform(0, 2 * np.pi, size=2)

    # band-limited texture: components stay below the x4 LR Nyquist so the
    # detail is recoverable from the LR raster rather than pure aliasing
    n_waves = 6
    periods = rng.uniform(9.0, 14.0, size=n_waves)
    angles = rng.uniform(0, 2 * np.pi, size=n_waves)
    phases = rng.uniform(0, 2 * np.pi, size=n_waves)
    drifts = rng.uniform(0.2, 0.9, size=n_waves)

    radius = 0.26 * min(w, h)
    radius2 = 0.17 * min(w, h)
    path_phase = rng.uniform(0, 2 * np.pi, size=4)
    chan_gain = np.array([1.0, 0.92, 0.84])
    chan_off = np.array([0.0, 0.015, -0.015])

    def wave_tex(tau):
        tex = np.zeros_like(xx)
        for k in range(n_waves):
            fx = np.cos(angles[k]) / periods[k]
            fy = np.sin(angles[k]) / periods[k]
            tex += np.sin(2 * np.pi * (fx * xx + fy * yy) + phases[k] + drifts[k] * tau)
        return tex * (0.38 / n_waves * 3.0)

    def ring_tex(dist, tau):
        return 0.30 * np.sin(2 * np.pi * dist / 10.0 + 1.5 * tau)

    def checker_tex(cx, cy, tau):
        return 0.30 * np.sign(
            np.sin(2 * np.pi * (xx - cx) / 9.0) * np.sin(2 * np.pi * (yy - cy) / 9.0)
        )

    frames = np.empty((t_frames, h, w, 3), dtype=np.uint8)
    for t in range(t_frames):
        tau = 2 * np.pi * t / t_frames
        bg = g0 + 0.35 * grad
        # near-Nyquist weave keeps bicubic honest on the background too
        bg = bg + 0.06 * np.sin(2 * np.pi * xx / 6.2 + weave_phase[0] + 0.7 * tau) * np.sin(
            2 * np.pi * yy / 5.6 + weave_phase[1]
        )
        bg = bg + 0.03 * np.sin(2 * np.pi * (xx + yy) / 7.3 + weave_phase[1] + 0.4 * tau)

        # two drifting regions with structurally different textures so that a
        # single tiny model faces real capacity contention
        cx = w / 2 + 0.24 * w * np.sin(tau + path_phase[0])
        cy = h / 2 + 0.24 * h * np.cos(0.5 * tau + path_phase[1])
        dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        mask = np.clip((radius - dist) / 3.0, 0.0, 1.0)

        cx2 = w / 2 - 0.27 * w * np.sin(0.5 * tau + path_phase[2])
        cy2 = h / 2 - 0.27 * h * np.cos(tau + path_phase[3])
        dist2 = np.sqrt((xx - cx2) ** 2 + (yy - cy2) ** 2)
        mask2 = np.clip((radius2 - dist2) / 3.0, 0.0, 1.0)

        if motif == "texture":
            tex, tex2 = wave_tex(tau), ring_tex(dist2, tau)
        elif motif == "rings":
            tex, tex2 = ring_tex(dist, tau), checker_tex(cx2, cy2, tau)
        else:  # checker
            tex, tex2 = checker_tex(cx, cy, tau), wave_tex(tau)

        base = bg + mask * tex + mask2 * tex2
        img = base[:, :, None] * chan_gain[None, None, :] + chan_off[None, None, :]
        frames[t] = quantize_u8(img)
    return FrameSequence(frames)


def concat_sequences(a: FrameSequence, b: FrameSequence) -> FrameSequence:
    if (a.h, a.w) != (b.h, b.w):
        raise ShapeError(f"cannot concatenate {a.w}x{a.h} with {b.w}x{b.h}")
    return FrameSequence(np.concatenate([a.pixels, b.pixels], axis=0))
