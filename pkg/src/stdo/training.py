"""Per-chunk overfitting, data-aware joint training, and evaluation.

train_on is the single training loop everything else reuses: Adam on L1 loss
with a seeded shuffle and a fixed halve-at-60%-and-80% learning-rate decay.
train_stdo runs it once per chunk (seeds derived as seed + chunk index, so
chunk runs are independent and order-insensitive); train_jstdo runs it once
on a chunk-weighted sample of the data.

Everything here is deterministic given (data, spec, config, seed) in
single-threaded mode. The parallel inference path gives each worker its own
weight copies and writes disjoint output slices, so its results are
bit-identical to the sequential reference.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING

import numpy as np

from .errors import NumericsError, ShapeError, StdoError
from .metrics import PsnrReport, patch_sse_u8
from .nn import AdamConfig, Arch, ModelSpec, SrModel, adam_step, build_model, l1_loss, model_from_bytes
from .util import quantize_u8, rng_from
from .video import PatchDataset, PatchGrid, PatchId

if TYPE_CHECKING:
    from .chunking import ChunkAssignment

DEFAULT_LR = {Arch.ESPCN_LITE: 1e-4, Arch.WDSR_LITE: 1e-3}
DECAY_POINTS = (0.6, 0.8)
DECAY_FACTOR = 0.5


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int = 16
    lr: float | None = None  # None = per-arch default
    adam: AdamConfig | None = None  # betas/eps; lr comes from the schedule
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class EpochStat:
    epoch: int
    mean_loss: float
    lr: float


@dataclass
class TrainResult:
    model: SrModel
    log: list[EpochStat]
    steps: int


def _epoch_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    lr = base_lr
    for frac in DECAY_POINTS:
        if epoch >= int(frac * total_epochs):
            lr *= DECAY_FACTOR
    return lr


def train_on(patches: PatchDataset, spec: ModelSpec, config: TrainConfig) -> TrainResult:
    """Overfit one model to the given patches; returns weights and loss trace."""
    n = len(patches)
    if n == 0:
        raise StdoError("cannot train on an empty patch set")
    model = build_model(spec, config.seed)
    base_lr = config.lr if config.lr is not None else DEFAULT_LR[spec.arch]
    adam = config.adam or AdamConfig(lr=base_lr)
    shuffle_rng = rng_from(config.seed, 1)

    log: list[EpochStat] = []
    steps = 0
    params = model.parameters()
    for epoch in range(config.epochs):
        lr_e = _epoch_lr(base_lr, epoch, config.epochs)
        cfg_e = replace(adam, lr=lr_e)
        perm = shuffle_rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            sel = perm[start : start + config.batch_size]
            try:
                out = model.forward(patches.lr[sel])
                loss, grad = l1_loss(out, patches.hr[sel])
            except NumericsError as e:
                raise NumericsError(
                    f"training diverged at epoch {epoch}, batch {start // config.batch_size}: {e}"
                ) from e
            model.backward(grad)
            for p in params:
                adam_step(p, cfg_e)
            steps += 1
            loss_sum += loss * len(sel)
        log.append(EpochStat(epoch, loss_sum / n, lr_e))
    return TrainResult(model=model, log=log, steps=steps)


@dataclass
class TrainedEnsemble:
    """k chunk models (STDO) or one joint model (JSTDO) plus their assignment."""

    spec: ModelSpec
    models: list[SrModel]
    assignment: "ChunkAssignment"
    mode: str  # "stdo" | "jstdo"
    logs: list[list[EpochStat]] = field(default_factory=list)
    total_steps: int = 0
    schedule: "SamplingSchedule | None" = None

    @property
    def param_count(self) -> int:
        return sum(m.param_count for m in self.models)


def train_stdo(
    dataset: PatchDataset, assignment: "ChunkAssignment", spec: ModelSpec, config: TrainConfig
) -> TrainedEnsemble:
    """One independent overfit per chunk; chunk c trains with seed + c."""
    if len(assignment.chunk_of) != len(dataset) or any(pid not in assignment.chunk_of for pid in dataset.ids):
        raise StdoError("assignment does not cover the dataset")
    models, logs, steps = [], [], 0
    for c in range(assignment.k):
        members = assignment.members(c)
        if not members:
            raise StdoError(f"chunk {c} is empty; cannot overfit an empty chunk")
        res = train_on(dataset.select_ids(members), spec, replace(config, seed=config.seed + c))
        models.append(res.model)
        logs.append(res.log)
        steps += res.steps
    return TrainedEnsemble(
        spec=spec, models=models, assignment=assignment, mode="stdo", logs=logs, total_steps=steps
    )


@dataclass(frozen=True)
class SamplingSchedule:
    """Per-chunk sampling proportions (non-increasing, in [0, 1]) and the
    joint-dataset size target mu. The canonical schedule is linear from 1
    down to 0: keep all of chunk 0, drop chunk k-1 entirely."""

    rho: tuple[float, ...]
    mu: int

    def __post_init__(self):
        if len(self.rho) < 1:
            raise ValueError("schedule needs at least one chunk proportion")
        if any(not (0.0 <= r <= 1.0) for r in self.rho):
            raise ValueError(f"proportions must lie in [0, 1], got {self.rho}")
        if any(b > a for a, b in zip(self.rho, self.rho[1:])):
            raise ValueError(f"proportions must be non-increasing, got {self.rho}")
        if self.mu < 1:
            raise ValueError(f"mu must be >= 1, got {self.mu}")

    @property
    def k(self) -> int:
        return len(self.rho)

    @classmethod
    def linear(cls, k: int, mu: int) -> "SamplingSchedule":
        if k == 1:
            return cls((1.0,), mu)
        return cls(tuple(1.0 - i / (k - 1) for i in range(k)), mu)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def _largest_remainder(quotas: list[float], caps: list[int], total: int) -> list[int]:
    """Integerize quotas to sum to ``total`` (or as close as caps allow)."""
    n = [min(int(np.floor(q)), cap) for q, cap in zip(quotas, caps)]
    rema = sorted(
        range(len(quotas)),
        key=lambda i: (-(quotas[i] - np.floor(quotas[i])), i),
    )
    deficit = total - sum(n)
    while deficit > 0:
        progress = False
        for i in rema:
            if deficit == 0:
                break
            if n[i] < caps[i]:
                n[i] += 1
                deficit -= 1
                progress = True
        if not progress:
            break  # no capacity left; caller tolerates bounded slack
    return n


def jstdo_sample(
    dataset: PatchDataset, assignment: "ChunkAssignment", schedule: SamplingSchedule, seed: int
) -> PatchDataset:
    """Build the joint training set: chunks with rho = 1 are kept whole,
    rho = 0 chunks are dropped, and the rest are sampled uniformly without
    replacement, proportionally rescaled so the total lands on mu (within k)."""
    if schedule.k != assignment.k:
        raise StdoError(f"schedule has {schedule.k} chunks, assignment has {assignment.k}")
    member_lists = [assignment.members(c) for c in range(assignment.k)]
    sizes = [len(m) for m in member_lists]

    counts = [0] * assignment.k
    flexible = []
    anchored_total = 0
    for c, (rho, size) in enumerate(zip(schedule.rho, sizes)):
        if rho == 1.0:
            counts[c] = size
            anchored_total += size
        elif rho > 0.0:
            counts[c] = min(_round_half_up(rho * size), size)
            flexible.append(c)
    if schedule.mu < anchored_total:
        raise StdoError(
            f"mu = {schedule.mu} cannot fit the {anchored_total} patches of the keep-all chunks"
        )
    reachable = anchored_total + sum(sizes[c] for c in flexible)
    if schedule.mu > reachable:
        raise StdoError(
            f"mu = {schedule.mu} exceeds the {reachable} patches reachable with this schedule"
        )

    target = schedule.mu - anchored_total
    flex_sum = sum(counts[c] for c in flexible)
    if flexible and flex_sum != target:
        weights = [counts[c] if flex_sum > 0 else sizes[c] for c in flexible]
        wsum = sum(weights)
        quotas = [w * target / wsum for w in weights] if wsum else [0.0] * len(flexible)
        ints = _largest_remainder(quotas, [sizes[c] for c in flexible], target)
        for c, v in zip(flexible, ints):
            counts[c] = v

    rng = rng_from(seed, 3)
    chosen: list[PatchId] = []
    for c in range(assignment.k):
        members = member_lists[c]
        take = counts[c]
        if take == 0:
            continue
        if take >= len(members):
            chosen.extend(members)
        else:
            pos = np.sort(rng.choice(len(members), size=take, replace=False))
            chosen.extend(members[p] for p in pos)
    return dataset.select_ids(chosen)


def train_jstdo(
    dataset: PatchDataset,
    assignment: "ChunkAssignment",
    schedule: SamplingSchedule,
    spec: ModelSpec,
    config: TrainConfig,
) -> TrainedEnsemble:
    joint = jstdo_sample(dataset, assignment, schedule, config.seed)
    res = train_on(joint, spec, config)
    return TrainedEnsemble(
        spec=spec,
        models=[res.model],
        assignment=assignment,
        mode="jstdo",
        logs=[res.log],
        total_steps=res.steps,
        schedule=schedule,
    )


# ---------------------------------------------------------------------------
# Inference and evaluation


def _infer_frame(models, labels, lr, positions, out):
    if labels is None:
        groups = [(0, positions)]
    else:
        by_chunk: dict[int, list[int]] = {}
        for p in positions:
            by_chunk.setdefault(int(labels[p]), []).append(p)
        groups = sorted(by_chunk.items())
    for c, sel in groups:
        pred = models[c].forward(lr[sel])
        out[sel] = quantize_u8(pred)


def sr_inference(
    models: list[SrModel],
    labels: np.ndarray | None,
    lr_patches: np.ndarray,
    ids: list[PatchId],
    grid: PatchGrid,
    threads: int = 1,
) -> np.ndarray:
    """Super-resolve every LR patch with its assigned model and quantize.

    Batching is fixed (per frame, then per chunk in ascending order, patches
    in input order) so sequential and parallel runs emit identical bytes.
    With labels None a single model serves all patches.
    """
    if labels is None and len(models) != 1:
        raise StdoError("multi-model inference needs a chunk label per patch")
    r = grid.scale
    n = len(ids)
    out = np.empty((n, 3, r * grid.lr_patch_h, r * grid.lr_patch_w), dtype=np.uint8)
    frames: dict[int, list[int]] = {}
    for pos, pid in enumerate(ids):
        frames.setdefault(pid.t, []).append(pos)
    frame_keys = sorted(frames)

    if threads <= 1 or len(frame_keys) == 1:
        for t in frame_keys:
            _infer_frame(models, labels, lr_patches, frames[t], out)
        return out

    # thread workers get private weight copies; outputs land in disjoint rows
    def run(t_list, worker_models):
        for t in t_list:
            _infer_frame(worker_models, labels, lr_patches, frames[t], out)

    blobs = [(m.spec, m.to_bytes()) for m in models]
    workers = min(threads, len(frame_keys))
    shards = [frame_keys[i::workers] for i in range(workers)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futs = [
            pool.submit(run, shard, [model_from_bytes(s, b) for s, b in blobs])
            for shard in shards
        ]
        for f in futs:
            f.result()
    return out


def evaluate(ensemble: TrainedEnsemble, dataset: PatchDataset, threads: int = 1) -> PsnrReport:
    """Super-resolve the whole dataset with the ensemble and report PSNR.

    Predictions are clamped and quantized to 8 bits before scoring, matching
    what the decoder emits, so this report equals the decoded-stream PSNR.
    """
    grid = dataset.grid
    if ensemble.spec.scale != grid.scale:
        raise ShapeError(f"ensemble scale {ensemble.spec.scale} != dataset scale {grid.scale}")
    if len(ensemble.models) == 1:
        labels = None
    else:
        labels = ensemble.assignment.labels_for(dataset.ids)
    out = sr_inference(ensemble.models, labels, dataset.lr, dataset.ids, grid, threads=threads)
    sse = patch_sse_u8(out, dataset.hr)
    px = 3 * (grid.scale * grid.lr_patch_h) * (grid.scale * grid.lr_patch_w)
    return PsnrReport.from_patch_sse(dataset.ids, sse, px)


def write_training_log(log: list[EpochStat], path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("epoch,mean_loss,lr\n")
        for stat in log:
            f.write(f"{stat.epoch},{stat.mean_loss:.8f},{stat.lr:.8g}\n")
