"""Anchor-model profiling and the PSNR partition of the patch set.

Every patch is scored by how well a cheap anchor upscales it; patches are
then grouped into k chunks of similar difficulty. Chunk 0 always holds the
lowest-PSNR (hardest, most informative) patches and chunk k-1 the easiest.

Two partition modes: "count" sorts by (psnr, linear index) and cuts into
near-equal groups (the default); "range" splits the [min, max] dB span into k
equal half-open intervals, the last closed above. The count mode's index tie
rule is what makes the partition a pure function of the report.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import training
from .errors import ShapeError, StdoError
from .metrics import PsnrReport, patch_sse_u8
from .nn import ModelSpec, SrModel, build_model
from .util import quantize_u8
from .video import PatchDataset, PatchGrid, PatchId, bicubic_resize


@dataclass(frozen=True)
class AnchorModel:
    """The profiling upscaler: a trained SR model, or plain bicubic."""

    model: SrModel | None = None

    @classmethod
    def bicubic(cls) -> "AnchorModel":
        return cls(model=None)

    @classmethod
    def pretrained(cls, model: SrModel) -> "AnchorModel":
        return cls(model=model)

    @property
    def kind(self) -> str:
        return "bicubic" if self.model is None else "pretrained"


@dataclass(frozen=True)
class AnchorConfig:
    warmup_epochs: int = 20
    lr: float = 3e-3
    batch_size: int = 4
    seed: int = 0


def train_anchor(dataset: PatchDataset, spec: ModelSpec | None = None, config: AnchorConfig = AnchorConfig()) -> SrModel:
    """Warm-up-train a small model on the full dataset to act as the profiler.

    A short run is enough: the anchor only ranks patches, it is never shipped.
    """
    if len(dataset) == 0:
        raise StdoError("cannot train an anchor on an empty dataset")
    if spec is None:
        spec = ModelSpec.espcn_lite(dataset.grid.scale)
    if config.warmup_epochs == 0:
        return build_model(spec, config.seed)
    tc = training.TrainConfig(
        epochs=config.warmup_epochs,
        batch_size=config.batch_size,
        lr=config.lr,
        seed=config.seed,
    )
    return training.train_on(dataset, spec, tc).model


def profile_patches(anchor: AnchorModel, dataset: PatchDataset) -> PsnrReport:
    """Upscale every LR patch with the anchor and report per-patch PSNR.

    Outputs are quantized to 8 bits before scoring, the same convention the
    evaluator and decoder use, so anchor scores are comparable with theirs.
    """
    grid = dataset.grid
    r = grid.scale
    if anchor.model is not None:
        if anchor.model.spec.scale != r:
            raise ShapeError(f"anchor scale {anchor.model.spec.scale} != dataset scale {r}")
        out = training.sr_inference([anchor.model], None, dataset.lr, dataset.ids, grid)
    else:
        out = np.empty_like(dataset.hr, dtype=np.uint8)
        for n in range(len(dataset)):
            img = dataset.lr[n].transpose(1, 2, 0)
            up = bicubic_resize(img, r * grid.lr_patch_w, r * grid.lr_patch_h)
            out[n] = quantize_u8(up).transpose(2, 0, 1)
    sse = patch_sse_u8(out, dataset.hr)
    px = 3 * (r * grid.lr_patch_h) * (r * grid.lr_patch_w)
    return PsnrReport.from_patch_sse(dataset.ids, sse, px)


@dataclass(frozen=True)
class ChunkBoundaries:
    """k-1 ascending dB thresholds; interval j is [thresholds[j-1],
    thresholds[j]), open below the first and above the last. Ties in the
    source PSNRs may make consecutive thresholds equal."""

    thresholds: tuple[float, ...]

    def __post_init__(self):
        for a, b in zip(self.thresholds, self.thresholds[1:]):
            if b < a:
                raise StdoError(f"thresholds must be ascending, got {self.thresholds}")


@dataclass
class ChunkAssignment:
    """A partition of the patch ids into k chunks ordered by difficulty."""

    k: int
    mode: str
    chunk_of: dict[PatchId, int]
    _members: list[list[PatchId]] = field(repr=False, default_factory=list)

    def members(self, c: int) -> list[PatchId]:
        return self._members[c]

    def sizes(self) -> list[int]:
        return [len(m) for m in self._members]

    def labels_for(self, ids: list[PatchId]) -> np.ndarray:
        try:
            return np.array([self.chunk_of[pid] for pid in ids], dtype=np.uint8)
        except KeyError as e:
            raise StdoError(f"assignment is missing patch {e.args[0]}") from None


def _linear_key(pid: PatchId) -> tuple[int, int, int]:
    # (t, j, i) lexicographic equals linear-index order without needing I, J
    return (pid.t, pid.j, pid.i)


def partition_chunks(report: PsnrReport, k: int, mode: str = "count") -> tuple[ChunkAssignment, ChunkBoundaries]:
    """Partition the profiled patches into k chunks by PSNR."""
    n = len(report.per_patch)
    if k < 1 or k > n:
        raise StdoError(f"k must lie in [1, {n}], got {k}")
    if mode not in ("count", "range"):
        raise ValueError(f"unknown partition mode {mode!r}")

    ids = sorted(report.per_patch, key=_linear_key)
    chunk_of: dict[PatchId, int] = {}

    if mode == "count":
        order = sorted(ids, key=lambda p: (report.per_patch[p], _linear_key(p)))
        base, rem = divmod(n, k)
        sizes = [base + 1 if c < rem else base for c in range(k)]
        thresholds = []
        pos = 0
        for c, size in enumerate(sizes):
            if c > 0:
                thresholds.append(report.per_patch[order[pos]])
            for pid in order[pos : pos + size]:
                chunk_of[pid] = c
            pos += size
    else:
        vals = np.array([report.per_patch[p] for p in ids])
        lo, hi = float(vals.min()), float(vals.max())
        thresholds = [lo + (hi - lo) * j / k for j in range(1, k)]
        if hi > lo:
            labels = np.floor((vals - lo) / (hi - lo) * k).astype(int)
            np.clip(labels, 0, k - 1, out=labels)
        else:
            labels = np.zeros(n, dtype=int)
        for pid, c in zip(ids, labels):
            chunk_of[pid] = int(c)

    members: list[list[PatchId]] = [[] for _ in range(k)]
    for pid in ids:
        members[chunk_of[pid]].append(pid)
    assignment = ChunkAssignment(k=k, mode=mode, chunk_of=chunk_of, _members=members)
    return assignment, ChunkBoundaries(tuple(thresholds))


def export_assignment_csv(assignment: ChunkAssignment, grid: PatchGrid, path: str) -> None:
    ids = sorted(assignment.chunk_of, key=_linear_key)
    with open(path, "w", encoding="utf-8") as f:
        f.write("linear_index,chunk\n")
        for pid in ids:
            f.write(f"{grid.linear_index(pid)},{assignment.chunk_of[pid]}\n")
