"""End-to-end encode orchestration shared by the CLI and the test suites."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .chunking import (
    AnchorConfig,
    AnchorModel,
    ChunkAssignment,
    ChunkBoundaries,
    partition_chunks,
    profile_patches,
    train_anchor,
)
from .codec import encode_stream
from .errors import StdoError
from .metrics import PsnrReport
from .nn import ModelSpec
from .training import SamplingSchedule, TrainConfig, TrainedEnsemble, train_jstdo, train_stdo
from .video import FrameSequence, PatchDataset, PatchGrid, make_lr_sequence, slice_into_patches


@dataclass
class VideoBundle:
    """A video prepared for training: HR source, generated LR, grid, patches."""

    hr: FrameSequence
    lr: FrameSequence
    lr_active: FrameSequence
    grid: PatchGrid
    dataset: PatchDataset


def prepare_video(hr: FrameSequence, scale: int, patch_w: int, patch_h: int) -> VideoBundle:
    lr = make_lr_sequence(hr, scale)
    grid = PatchGrid.from_lr(lr.w, lr.h, patch_w, patch_h, scale)
    dataset = slice_into_patches(hr, lr, grid)
    active = FrameSequence(np.ascontiguousarray(lr.pixels[:, : grid.crop_h, : grid.crop_w]))
    return VideoBundle(hr=hr, lr=lr, lr_active=active, grid=grid, dataset=dataset)


@dataclass(frozen=True)
class EncodeSettings:
    scale: int
    patch_w: int = 24
    patch_h: int = 24
    k: int = 4
    partition_mode: str = "count"
    method: str = "stdo"  # "stdo" | "jstdo"
    arch: str = "espcn"  # "espcn" | "wdsr"
    width_a: int | None = None
    width_b: int | None = None
    epochs: int = 100
    batch_size: int = 16
    lr: float | None = None
    seed: int = 0
    mu: int | None = None  # None = ceil(N / 2)
    rho: tuple[float, ...] | None = None  # None = linear schedule
    anchor: str = "warmup"  # "warmup" | "bicubic"
    warmup_epochs: int = 20

    def model_spec(self) -> ModelSpec:
        if self.arch == "espcn":
            return ModelSpec.espcn_lite(
                self.scale,
                f1=self.width_a if self.width_a is not None else 32,
                f2=self.width_b if self.width_b is not None else 16,
            )
        if self.arch == "wdsr":
            return ModelSpec.wdsr_lite(
                self.scale,
                feats=self.width_a if self.width_a is not None else 16,
                blocks=self.width_b if self.width_b is not None else 4,
            )
        raise ValueError(f"unknown arch {self.arch!r}")


@dataclass
class EncodeOutcome:
    stream: bytes
    bundle: VideoBundle
    ensemble: TrainedEnsemble
    assignment: ChunkAssignment
    boundaries: ChunkBoundaries
    profile: PsnrReport
    schedule: SamplingSchedule | None = None
    resolved: dict = field(default_factory=dict)


def build_anchor(bundle: VideoBundle, settings: EncodeSettings) -> AnchorModel:
    if settings.anchor == "bicubic":
        return AnchorModel.bicubic()
    if settings.anchor == "warmup":
        cfg = AnchorConfig(warmup_epochs=settings.warmup_epochs, seed=settings.seed)
        return AnchorModel.pretrained(train_anchor(bundle.dataset, config=cfg))
    raise ValueError(f"unknown anchor kind {settings.anchor!r}")


def encode_video(hr: FrameSequence, settings: EncodeSettings) -> EncodeOutcome:
    """Profile, partition, train (STDO or JSTDO) and serialize one video."""
    bundle = prepare_video(hr, settings.scale, settings.patch_w, settings.patch_h)
    anchor = build_anchor(bundle, settings)
    profile = profile_patches(anchor, bundle.dataset)
    assignment, boundaries = partition_chunks(profile, settings.k, settings.partition_mode)

    spec = settings.model_spec()
    config = TrainConfig(
        epochs=settings.epochs, batch_size=settings.batch_size, lr=settings.lr, seed=settings.seed
    )
    schedule = None
    if settings.method == "stdo":
        ensemble = train_stdo(bundle.dataset, assignment, spec, config)
    elif settings.method == "jstdo":
        mu = settings.mu if settings.mu is not None else math.ceil(len(bundle.dataset) / 2)
        rho = settings.rho
        schedule = (
            SamplingSchedule(rho, mu) if rho is not None else SamplingSchedule.linear(settings.k, mu)
        )
        ensemble = train_jstdo(bundle.dataset, assignment, schedule, spec, config)
    else:
        raise StdoError(f"unknown method {settings.method!r}")

    stream = encode_stream(bundle.lr_active, bundle.grid, assignment, ensemble, (hr.w, hr.h))
    resolved = {
        "mu": schedule.mu if schedule else "",
        "rho": ",".join(f"{r:g}" for r in schedule.rho) if schedule else "",
        "lr": config.lr if config.lr is not None else "",
        "total_steps": ensemble.total_steps,
    }
    return EncodeOutcome(
        stream=stream,
        bundle=bundle,
        ensemble=ensemble,
        assignment=assignment,
        boundaries=boundaries,
        profile=profile,
        schedule=schedule,
        resolved=resolved,
    )
