"""The serialized deliverable: header, chunk assignment, model blobs, LR frames.

Byte layout (all integers little-endian), normative and bit-exact:

  header, 38 bytes:
    magic       4s   "STDO"
    version     u16  1
    arch_id     u8   0 = EspcnLite, 1 = WdsrLite
    scale       u8   2 / 3 / 4
    k           u8   chunk count
    mode        u8   0 = one model per chunk, 1 = single joint model
    lr_w, lr_h  u32  cropped LR dims (divisible by patch_w / patch_h)
    T           u32  frame count
    patch_w/h   u16  patch dims on the LR raster
    orig_w/h    u32  pre-crop HR dims
    width_a/b   u16  backbone widths (EspcnLite: F1, F2; WdsrLite: F, blocks)
  assignment:   N = (lr_w/patch_w)*(lr_h/patch_h)*T bytes, the chunk index of
                each patch in linear (t, j, i) order; present and validated
                in both modes (mode 1 only uses it for diagnostics)
  model_count   u8 (k in mode 0, 1 in mode 1), then per model:
    param_count u64, then param_count little-endian f32 in wire order
  LR payload:   T frames of raw interleaved RGB8, row-major

Stream length = 38 + N + 1 + sum(8 + 4*param_count) + 3*lr_w*lr_h*T.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .chunking import ChunkAssignment
from .errors import (
    AssignmentRangeError,
    BadMagicError,
    FormatError,
    ParamCountError,
    StdoError,
    TruncatedStreamError,
    VersionMismatchError,
)
from .nn import Arch, ModelSpec, SrModel, model_from_bytes
from .training import TrainedEnsemble, sr_inference
from .util import dequantize_u8
from .video import FrameSequence, PatchGrid, _tile, assemble_frame

MAGIC = b"STDO"
VERSION = 1
_HEADER = struct.Struct("<4sHBBBBIIIHHIIHH")
HEADER_SIZE = _HEADER.size  # 38

MODE_MULTI = 0
MODE_SINGLE = 1


@dataclass(frozen=True)
class StreamHeader:
    arch_id: int
    scale: int
    k: int
    mode: int
    lr_w: int
    lr_h: int
    t_frames: int
    patch_w: int
    patch_h: int
    orig_w: int
    orig_h: int
    width_a: int
    width_b: int

    @property
    def n_patches(self) -> int:
        return (self.lr_w // self.patch_w) * (self.lr_h // self.patch_h) * self.t_frames

    @property
    def model_spec(self) -> ModelSpec:
        return ModelSpec(Arch(self.arch_id), self.scale, self.width_a, self.width_b)

    @property
    def grid(self) -> PatchGrid:
        return PatchGrid.from_lr(self.lr_w, self.lr_h, self.patch_w, self.patch_h, self.scale)

    def pack(self) -> bytes:
        return _HEADER.pack(
            MAGIC,
            VERSION,
            self.arch_id,
            self.scale,
            self.k,
            self.mode,
            self.lr_w,
            self.lr_h,
            self.t_frames,
            self.patch_w,
            self.patch_h,
            self.orig_w,
            self.orig_h,
            self.width_a,
            self.width_b,
        )


def _unpack_header(data: bytes) -> StreamHeader:
    if data[:4] != MAGIC:
        raise BadMagicError("not an STDO stream")
    if len(data) < 6:
        raise TruncatedStreamError("stream ends inside the version field")
    (version,) = struct.unpack_from("<H", data, 4)
    if version != VERSION:
        raise VersionMismatchError(f"unsupported stream version {version}, expected {VERSION}")
    if len(data) < HEADER_SIZE:
        raise TruncatedStreamError(f"header needs {HEADER_SIZE} bytes, stream has {len(data)}")
    fields = _HEADER.unpack_from(data, 0)
    hdr = StreamHeader(*fields[2:])
    if hdr.arch_id not in (0, 1):
        raise FormatError(f"unknown architecture id {hdr.arch_id}")
    if hdr.scale not in (2, 3, 4):
        raise FormatError(f"invalid scale {hdr.scale}")
    if hdr.k < 1:
        raise FormatError("chunk count must be >= 1")
    if hdr.mode not in (MODE_MULTI, MODE_SINGLE):
        raise FormatError(f"invalid mode byte {hdr.mode}")
    if hdr.patch_w < 1 or hdr.patch_h < 1:
        raise FormatError("patch dims must be >= 1")
    if hdr.lr_w % hdr.patch_w or hdr.lr_h % hdr.patch_h:
        raise FormatError(
            f"LR dims {hdr.lr_w}x{hdr.lr_h} not divisible by patch {hdr.patch_w}x{hdr.patch_h}"
        )
    if hdr.t_frames < 1:
        raise FormatError("frame count must be >= 1")
    if hdr.width_a < 1 or hdr.width_b < 1:
        raise FormatError("backbone widths must be >= 1")
    return hdr


def encode_stream(
    lr: FrameSequence,
    grid: PatchGrid,
    assignment: ChunkAssignment,
    ensemble: TrainedEnsemble,
    orig_size: tuple[int, int],
) -> bytes:
    """Serialize cropped LR frames, the assignment and the trained models."""
    if (lr.w, lr.h) != (grid.crop_w, grid.crop_h):
        raise StdoError(
            f"LR frames are {lr.w}x{lr.h}, expected the grid's active region "
            f"{grid.crop_w}x{grid.crop_h} (crop before encoding)"
        )
    if assignment.k > 255:
        raise StdoError(f"k = {assignment.k} does not fit the container (max 255)")
    spec = ensemble.spec
    if spec.width_a > 0xFFFF or spec.width_b > 0xFFFF:
        raise StdoError("backbone widths do not fit the container")
    n = grid.n_patches(lr.t)
    if len(assignment.chunk_of) != n:
        raise StdoError(f"assignment covers {len(assignment.chunk_of)} patches, stream needs {n}")
    mode = MODE_SINGLE if len(ensemble.models) == 1 else MODE_MULTI
    if mode == MODE_MULTI and len(ensemble.models) != assignment.k:
        raise StdoError(f"{len(ensemble.models)} models for {assignment.k} chunks")

    ordered_ids = [pid for t in range(lr.t) for pid in grid.frame_ids(t)]
    labels = assignment.labels_for(ordered_ids)

    header = StreamHeader(
        arch_id=int(spec.arch),
        scale=spec.scale,
        k=assignment.k,
        mode=mode,
        lr_w=lr.w,
        lr_h=lr.h,
        t_frames=lr.t,
        patch_w=grid.lr_patch_w,
        patch_h=grid.lr_patch_h,
        orig_w=orig_size[0],
        orig_h=orig_size[1],
        width_a=spec.width_a,
        width_b=spec.width_b,
    )
    parts = [header.pack(), labels.tobytes(), bytes([len(ensemble.models)])]
    for model in ensemble.models:
        blob = model.to_bytes()
        parts.append(struct.pack("<Q", len(blob) // 4))
        parts.append(blob)
    parts.append(lr.pixels.tobytes())
    return b"".join(parts)


@dataclass
class DecodeTiming:
    frames: int
    io_ms: float
    inference_ms: float
    assembly_ms: float
    total_ms: float
    per_frame_ms: list[float] = field(default_factory=list)  # sequential mode only

    @property
    def ms_per_frame(self) -> float:
        return self.total_ms / self.frames

    @property
    def fps(self) -> float:
        return 1000.0 / self.ms_per_frame


@dataclass
class DecodedStream:
    header: StreamHeader
    models: list[SrModel]
    labels: np.ndarray
    lr: FrameSequence
    hr: FrameSequence
    timing: DecodeTiming

    def ensemble(self) -> TrainedEnsemble:
        """Rebuild a TrainedEnsemble so evaluate() runs on decoded streams."""
        grid = self.header.grid
        ids = [pid for t in range(self.header.t_frames) for pid in grid.frame_ids(t)]
        chunk_of = {pid: int(c) for pid, c in zip(ids, self.labels)}
        members: list[list] = [[] for _ in range(self.header.k)]
        for pid in ids:
            members[chunk_of[pid]].append(pid)
        assignment = ChunkAssignment(
            k=self.header.k, mode="stream", chunk_of=chunk_of, _members=members
        )
        mode = "jstdo" if self.header.mode == MODE_SINGLE else "stdo"
        return TrainedEnsemble(
            spec=self.header.model_spec, models=self.models, assignment=assignment, mode=mode
        )


def decode_stream(data: bytes, threads: int = 1) -> DecodedStream:
    """Parse, validate, super-resolve every patch, and reassemble HR frames."""
    t0 = time.perf_counter()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("not an STDO stream")
    header = _unpack_header(data)
    spec = header.model_spec
    grid = header.grid
    n = header.n_patches
    off = HEADER_SIZE

    if len(data) < off + n:
        raise TruncatedStreamError(f"assignment needs {n} bytes, {len(data) - off} remain")
    labels = np.frombuffer(data, dtype=np.uint8, count=n, offset=off).copy()
    off += n
    if labels.size and int(labels.max()) >= header.k:
        raise AssignmentRangeError(
            f"assignment byte {int(labels.max())} out of range for k = {header.k}"
        )

    if len(data) < off + 1:
        raise TruncatedStreamError("stream ends before the model count")
    model_count = data[off]
    off += 1
    expected_models = 1 if header.mode == MODE_SINGLE else header.k
    if model_count != expected_models:
        raise FormatError(f"mode {header.mode} requires {expected_models} models, stream has {model_count}")

    models = []
    for m in range(model_count):
        if len(data) < off + 8:
            raise TruncatedStreamError(f"model {m}: stream ends before its parameter count")
        (param_count,) = struct.unpack_from("<Q", data, off)
        off += 8
        if param_count != spec.param_count:
            raise ParamCountError(
                f"model {m} declares {param_count} parameters, architecture needs {spec.param_count}"
            )
        nbytes = 4 * param_count
        if len(data) < off + nbytes:
            raise TruncatedStreamError(f"model {m}: weight blob truncated")
        models.append(model_from_bytes(spec, data[off : off + nbytes]))
        off += nbytes

    payload = 3 * header.lr_w * header.lr_h * header.t_frames
    if len(data) < off + payload:
        raise TruncatedStreamError(f"LR payload needs {payload} bytes, {len(data) - off} remain")
    if len(data) > off + payload:
        raise FormatError(f"{len(data) - off - payload} trailing bytes after the LR payload")
    lr_pixels = (
        np.frombuffer(data, dtype=np.uint8, count=payload, offset=off)
        .reshape(header.t_frames, header.lr_h, header.lr_w, 3)
        .copy()
    )
    lr = FrameSequence(lr_pixels)
    lr_f32 = _tile(dequantize_u8(lr_pixels), grid.rows, grid.cols, grid.lr_patch_h, grid.lr_patch_w)
    io_ms = (time.perf_counter() - t0) * 1000.0

    # inference + assembly; sequential reference mode times each frame
    infer_ms = 0.0
    asm_ms = 0.0
    per_frame = []
    hr_frames = np.empty(
        (header.t_frames, header.scale * grid.crop_h, header.scale * grid.crop_w, 3), dtype=np.uint8
    )
    tile_ids = [pid for t in range(header.t_frames) for pid in grid.frame_ids(t)]

    use_labels = labels if header.mode == MODE_MULTI else None
    per_frame_count = grid.per_frame
    if threads <= 1:
        for t in range(header.t_frames):
            f0 = time.perf_counter()
            sel = slice(t * per_frame_count, (t + 1) * per_frame_count)
            out = sr_inference(
                models,
                use_labels[sel] if use_labels is not None else None,
                lr_f32[sel],
                grid.frame_ids(t),
                grid,
            )
            f1 = time.perf_counter()
            hr_frames[t] = assemble_frame(list(zip(grid.frame_ids(t), out)), grid, t)
            f2 = time.perf_counter()
            infer_ms += (f1 - f0) * 1000.0
            asm_ms += (f2 - f1) * 1000.0
            per_frame.append((f2 - f0) * 1000.0)
    else:
        f0 = time.perf_counter()
        out = sr_inference(models, use_labels, lr_f32, tile_ids, grid, threads=threads)
        f1 = time.perf_counter()
        for t in range(header.t_frames):
            sel = slice(t * per_frame_count, (t + 1) * per_frame_count)
            hr_frames[t] = assemble_frame(list(zip(grid.frame_ids(t), out[sel])), grid, t)
        f2 = time.perf_counter()
        infer_ms = (f1 - f0) * 1000.0
        asm_ms = (f2 - f1) * 1000.0

    total_ms = (time.perf_counter() - t0) * 1000.0
    timing = DecodeTiming(
        frames=header.t_frames,
        io_ms=io_ms,
        inference_ms=infer_ms,
        assembly_ms=asm_ms,
        total_ms=total_ms,
        per_frame_ms=per_frame,
    )
    return DecodedStream(
        header=header, models=models, labels=labels, lr=lr, hr=FrameSequence(hr_frames), timing=timing
    )


@dataclass
class BenchReport:
    repeats: int
    frames: int
    ms_per_frame: float
    fps: float
    io_ms: float
    inference_ms: float
    assembly_ms: float
    macs_per_lr_pixel: int
    gmacs_per_frame: float
    threads: int

    def rows(self) -> list[tuple[str, str]]:
        return [
            ("repeats", str(self.repeats)),
            ("frames", str(self.frames)),
            ("threads", str(self.threads)),
            ("ms_per_frame", f"{self.ms_per_frame:.4f}"),
            ("fps", f"{self.fps:.4f}"),
            ("io_ms", f"{self.io_ms:.4f}"),
            ("inference_ms", f"{self.inference_ms:.4f}"),
            ("assembly_ms", f"{self.assembly_ms:.4f}"),
            ("macs_per_lr_pixel", str(self.macs_per_lr_pixel)),
            ("gmacs_per_frame", f"{self.gmacs_per_frame:.6f}"),
        ]


def bench_decode(data: bytes, repeats: int, threads: int = 1) -> BenchReport:
    """Median decode throughput over ``repeats`` runs plus the analytic
    per-layer MAC count of the shipped backbone."""
    if repeats < 1:
        raise StdoError(f"repeats must be >= 1, got {repeats}")
    ms, io, inf, asm = [], [], [], []
    decoded = None
    for _ in range(repeats):
        decoded = decode_stream(data, threads=threads)
        tm = decoded.timing
        ms.append(tm.total_ms / decoded.header.t_frames)
        io.append(tm.io_ms)
        inf.append(tm.inference_ms)
        asm.append(tm.assembly_ms)
    header = decoded.header
    spec = header.model_spec
    ms_med = float(np.median(ms))
    return BenchReport(
        repeats=repeats,
        frames=header.t_frames,
        ms_per_frame=ms_med,
        fps=1000.0 / ms_med,
        io_ms=float(np.median(io)),
        inference_ms=float(np.median(inf)),
        assembly_ms=float(np.median(asm)),
        macs_per_lr_pixel=spec.macs_per_lr_pixel,
        gmacs_per_frame=spec.macs_per_lr_pixel * header.lr_w * header.lr_h / 1e9,
        threads=threads,
    )
