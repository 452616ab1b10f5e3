"""stdo: encode a video as LR frames plus tiny per-chunk SR models.

The encoder profiles every spatial-temporal patch of a video with a cheap
anchor upscaler, partitions patches into difficulty chunks, overfits one tiny
model per chunk (or a single joint model on a chunk-weighted sample), and
packs LR frames, the patch-to-chunk assignment and the model weights into a
bit-exact binary stream. The decoder runs per-patch inference and reassembles
the HR frames.
"""

__version__ = "0.1.0"

from .chunking import (
    AnchorConfig,
    AnchorModel,
    ChunkAssignment,
    ChunkBoundaries,
    partition_chunks,
    profile_patches,
    train_anchor,
)
from .codec import BenchReport, DecodedStream, StreamHeader, bench_decode, decode_stream, encode_stream
from .errors import (
    AssignmentRangeError,
    BadMagicError,
    FormatError,
    NumericsError,
    ParamCountError,
    ShapeError,
    StdoError,
    TruncatedStreamError,
    VersionMismatchError,
)
from .metrics import PSNR_CAP, PsnrReport, emit_heatmap, psnr
from .nn import AdamConfig, Arch, ModelSpec, Parameter, SrModel, adam_step, build_model
from .pipeline import EncodeSettings, encode_video, prepare_video
from .training import (
    SamplingSchedule,
    TrainConfig,
    TrainedEnsemble,
    evaluate,
    jstdo_sample,
    train_jstdo,
    train_on,
    train_stdo,
)
from .video import (
    FrameSequence,
    PatchDataset,
    PatchGrid,
    PatchId,
    assemble_frame,
    bicubic_resize,
    concat_sequences,
    load_frames,
    make_lr_sequence,
    slice_into_patches,
    synth_video,
    write_frames,
)
