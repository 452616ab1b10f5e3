"""Command-line front end for the full pipeline.

Subcommands: synth, profile, encode, decode, eval, bench. Every run writes a
manifest (key=value, one per line) next to its primary output with all
defaults materialized, the seed, the tool version and input digests;
``encode --from-manifest FILE`` re-runs a recorded configuration and
reproduces the stream byte for byte in single-threaded mode.

Exit codes: 1 usage or invalid configuration, 2 I/O failure, 3 malformed
input format, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import math
import os
import sys

import numpy as np

from . import __version__
from .chunking import export_assignment_csv
from .codec import bench_decode, decode_stream
from .errors import FormatError, NumericsError, StdoError
from .metrics import emit_heatmap
from .pipeline import EncodeSettings, encode_video, prepare_video
from .training import evaluate, write_training_log
from .video import MOTIFS, load_frames, synth_video, write_frames

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_IO = 2
EXIT_FORMAT = 3
EXIT_NUMERIC = 4


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _digest_frames(seq) -> str:
    h = hashlib.sha256()
    h.update(f"{seq.w}x{seq.h}x{seq.t}".encode())
    h.update(seq.pixels.tobytes())
    return h.hexdigest()


def write_manifest(path: str, entries: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for key, value in entries.items():
            f.write(f"{key}={value}\n")


def read_manifest(path: str) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            key, _, value = line.partition("=")
            out[key] = value
    return out


def _parse_patch(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise _UsageError(f"--patch expects WxH, got {text!r}") from None


def _parse_rho(text: str, k: int) -> tuple[float, ...] | None:
    if text == "linear":
        return None
    try:
        rho = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise _UsageError(f"--rho expects 'linear' or comma-separated floats, got {text!r}") from None
    if len(rho) != k:
        raise _UsageError(f"--rho has {len(rho)} entries, --k is {k}")
    return rho


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    seq = synth_video(args.w, args.h, args.t, motif=args.motif, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    write_frames(seq, args.out)
    write_manifest(
        os.path.join(args.out, "synth.manifest"),
        {
            "command": "synth",
            "version": __version__,
            "w": args.w,
            "h": args.h,
            "t": args.t,
            "motif": args.motif,
            "seed": args.seed,
            "out": args.out,
            "digest": _digest_frames(seq),
        },
    )
    print(f"wrote {seq.t} frames ({seq.w}x{seq.h}) to {args.out}")
    return EXIT_OK


def cmd_profile(args) -> int:
    from .pipeline import build_anchor
    from .chunking import partition_chunks, profile_patches

    hr = load_frames(args.hr)
    pw, ph = _parse_patch(args.patch)
    settings = EncodeSettings(
        scale=args.scale,
        patch_w=pw,
        patch_h=ph,
        k=args.k,
        partition_mode=args.mode,
        anchor=args.anchor,
        warmup_epochs=args.warmup_epochs,
        seed=args.seed,
    )
    bundle = prepare_video(hr, args.scale, pw, ph)
    anchor = build_anchor(bundle, settings)
    report = profile_patches(anchor, bundle.dataset)
    assignment, boundaries = partition_chunks(report, args.k, args.mode)

    export_assignment_csv(assignment, bundle.grid, f"{args.out}_assignment.csv")
    frames = sorted({0, bundle.hr.t // 2, bundle.hr.t - 1})
    for t in frames:
        emit_heatmap(report, bundle.grid, t, f"{args.out}_heat", cell=args.cell)
    write_manifest(
        f"{args.out}.manifest",
        {
            "command": "profile",
            "version": __version__,
            "hr": args.hr,
            "hr_digest": _digest_frames(hr),
            "scale": args.scale,
            "patch": f"{pw}x{ph}",
            "anchor": args.anchor,
            "warmup_epochs": args.warmup_epochs,
            "k": args.k,
            "mode": args.mode,
            "seed": args.seed,
            "out": args.out,
        },
    )
    sizes = ",".join(str(s) for s in assignment.sizes())
    lams = ",".join(f"{v:.4f}" for v in boundaries.thresholds)
    print(f"profiled {len(bundle.dataset)} patches with {anchor.kind} anchor")
    print(f"mean patch PSNR {report.mean_patch_db():.3f} dB, video {report.video:.3f} dB")
    print(f"chunk sizes [{sizes}], thresholds [{lams}]")
    return EXIT_OK


def _encode_args_from_manifest(args) -> None:
    m = read_manifest(args.from_manifest)
    if m.get("command") != "encode":
        raise _UsageError(f"{args.from_manifest} is not an encode manifest")
    args.hr = m["hr"]
    args.scale = int(m["scale"])
    args.patch = m["patch"]
    args.k = int(m["k"])
    args.mode = m["mode"]
    args.method = m["method"]
    args.arch = m["arch"]
    args.width_a = int(m["width_a"]) if m.get("width_a") else None
    args.width_b = int(m["width_b"]) if m.get("width_b") else None
    args.epochs = int(m["epochs"])
    args.batch = int(m["batch"])
    args.lr = float(m["lr"]) if m.get("lr") else None
    args.seed = int(m["seed"])
    args.mu = int(m["mu"]) if m.get("mu") else None
    args.rho = m.get("rho") or "linear"
    args.anchor = m["anchor"]
    args.warmup_epochs = int(m["warmup_epochs"])
    if args.out is None:
        args.out = m["out"]


def cmd_encode(args) -> int:
    if args.from_manifest:
        _encode_args_from_manifest(args)
    if args.out is None:
        raise _UsageError("encode requires --out FILE.stdo")
    hr = load_frames(args.hr)
    pw, ph = _parse_patch(args.patch)
    rho = _parse_rho(args.rho, args.k) if isinstance(args.rho, str) else args.rho
    settings = EncodeSettings(
        scale=args.scale,
        patch_w=pw,
        patch_h=ph,
        k=args.k,
        partition_mode=args.mode,
        method=args.method,
        arch=args.arch,
        width_a=args.width_a,
        width_b=args.width_b,
        epochs=args.epochs,
        batch_size=args.batch,
        lr=args.lr,
        seed=args.seed,
        mu=args.mu,
        rho=rho,
        anchor=args.anchor,
        warmup_epochs=args.warmup_epochs,
    )
    outcome = encode_video(hr, settings)
    with open(args.out, "wb") as f:
        f.write(outcome.stream)
    for i, log in enumerate(outcome.ensemble.logs):
        write_training_log(log, f"{args.out}.train_{i}.csv")

    n = len(outcome.bundle.dataset)
    mu_resolved = settings.mu if settings.mu is not None else math.ceil(n / 2)
    rho_resolved = (
        outcome.schedule.rho
        if outcome.schedule is not None
        else ()
    )
    write_manifest(
        f"{args.out}.manifest",
        {
            "command": "encode",
            "version": __version__,
            "hr": args.hr,
            "hr_digest": _digest_frames(hr),
            "scale": args.scale,
            "patch": f"{pw}x{ph}",
            "k": args.k,
            "mode": args.mode,
            "method": args.method,
            "arch": args.arch,
            "width_a": settings.width_a if settings.width_a is not None else "",
            "width_b": settings.width_b if settings.width_b is not None else "",
            "epochs": args.epochs,
            "batch": args.batch,
            "lr": args.lr if args.lr is not None else "",
            "seed": args.seed,
            "mu": mu_resolved if args.method == "jstdo" else "",
            "rho": ",".join(f"{r:g}" for r in rho_resolved),
            "anchor": args.anchor,
            "warmup_epochs": args.warmup_epochs,
            "out": args.out,
            "stream_bytes": len(outcome.stream),
            "stream_digest": hashlib.sha256(outcome.stream).hexdigest(),
        },
    )
    ens = outcome.ensemble
    print(
        f"encoded {n} patches into {args.out}: {len(ens.models)} model(s) x "
        f"{ens.spec.param_count} params, {len(outcome.stream)} bytes, "
        f"{ens.total_steps} optimizer steps"
    )
    return EXIT_OK


def cmd_decode(args) -> int:
    with open(args.infile, "rb") as f:
        data = f.read()
    decoded = decode_stream(data, threads=args.threads)
    os.makedirs(args.out, exist_ok=True)
    write_frames(decoded.hr, args.out)
    tm = decoded.timing
    with open(os.path.join(args.out, "timing.csv"), "w", encoding="utf-8") as f:
        f.write("frame,ms\n")
        for t, ms in enumerate(tm.per_frame_ms):
            f.write(f"{t},{ms:.4f}\n")
        f.write(f"total,{tm.total_ms:.4f}\n")
    write_manifest(
        os.path.join(args.out, "decode.manifest"),
        {
            "command": "decode",
            "version": __version__,
            "in": args.infile,
            "out": args.out,
            "threads": args.threads,
            "frames": decoded.header.t_frames,
            "fps": f"{tm.fps:.4f}",
        },
    )
    print(
        f"decoded {decoded.header.t_frames} frames to {args.out}: "
        f"{tm.ms_per_frame:.2f} ms/frame ({tm.fps:.1f} FPS)"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    with open(args.infile, "rb") as f:
        data = f.read()
    decoded = decode_stream(data, threads=args.threads)
    hr = load_frames(args.hr)
    header = decoded.header
    if (hr.w, hr.h, hr.t) != (header.orig_w, header.orig_h, header.t_frames):
        raise FormatError(
            f"HR video is {hr.w}x{hr.h}x{hr.t}, stream was encoded from "
            f"{header.orig_w}x{header.orig_h}x{header.t_frames}"
        )
    from .video import slice_into_patches

    dataset = slice_into_patches(hr, decoded.lr, header.grid)
    report = evaluate(decoded.ensemble(), dataset, threads=args.threads)

    prefix = args.out if args.out else args.infile + ".eval"
    with open(f"{prefix}_video.csv", "w", encoding="utf-8") as f:
        f.write("psnr_db\n")
        f.write(f"{report.video:.6f}\n")
    with open(f"{prefix}_frames.csv", "w", encoding="utf-8") as f:
        f.write("t,psnr_db\n")
        for t in sorted(report.per_frame):
            f.write(f"{t},{report.per_frame[t]:.6f}\n")
    with open(f"{prefix}_patches.csv", "w", encoding="utf-8") as f:
        f.write("i,j,t,psnr_db\n")
        for pid in sorted(report.per_patch, key=lambda p: (p.t, p.j, p.i)):
            f.write(f"{pid.i},{pid.j},{pid.t},{report.per_patch[pid]:.6f}\n")
    write_manifest(
        f"{prefix}.manifest",
        {
            "command": "eval",
            "version": __version__,
            "in": args.infile,
            "hr": args.hr,
            "hr_digest": _digest_frames(hr),
            "threads": args.threads,
            "out": prefix,
            "video_psnr_db": f"{report.video:.6f}",
        },
    )
    print(f"video PSNR {report.video:.4f} dB over {len(report.per_patch)} patches")
    return EXIT_OK


def cmd_bench(args) -> int:
    with open(args.infile, "rb") as f:
        data = f.read()
    report = bench_decode(data, repeats=args.repeats, threads=args.threads)
    csv_path = args.out if args.out else args.infile + ".bench.csv"
    with open(csv_path, "w", encoding="utf-8") as f:
        f.write("key,value\n")
        for key, value in report.rows():
            f.write(f"{key},{value}\n")
    for key, value in report.rows():
        print(f"{key}: {value}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    p = _Parser(prog="stdo", description="Overfitting-based neural video codec")
    p.add_argument("--version", action="version", version=f"stdo {__version__}")
    sub = p.add_subparsers(dest="cmd", metavar="COMMAND")

    sp = sub.add_parser("synth", parents=[], help="generate a synthetic test video")
    sp.add_argument("--out", required=True, help="output PPM directory")
    sp.add_argument("--w", type=int, default=192)
    sp.add_argument("--h", type=int, default=192)
    sp.add_argument("--t", type=int, default=16)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--motif", choices=MOTIFS, default="texture")
    sp.set_defaults(func=cmd_synth)

    pp = sub.add_parser("profile", help="profile patches and preview the chunk partition")
    pp.add_argument("--hr", required=True, help="HR PPM directory")
    pp.add_argument("--scale", type=int, required=True, choices=(2, 3, 4))
    pp.add_argument("--patch", default="24x24", help="LR patch size WxH")
    pp.add_argument("--anchor", choices=("warmup", "bicubic"), default="warmup")
    pp.add_argument("--warmup-epochs", type=int, default=20, dest="warmup_epochs")
    pp.add_argument("--k", type=int, default=4)
    pp.add_argument("--mode", choices=("count", "range"), default="count")
    pp.add_argument("--seed", type=int, default=0)
    pp.add_argument("--cell", type=int, default=16, help="heatmap pixels per patch cell")
    pp.add_argument("--out", required=True, help="output file prefix")
    pp.set_defaults(func=cmd_profile)

    ep = sub.add_parser("encode", help="train models and write a .stdo stream")
    ep.add_argument("--hr", help="HR PPM directory")
    ep.add_argument("--scale", type=int, choices=(2, 3, 4), default=2)
    ep.add_argument("--patch", default="24x24")
    ep.add_argument("--k", type=int, default=4)
    ep.add_argument("--mode", choices=("count", "range"), default="count")
    ep.add_argument("--method", choices=("stdo", "jstdo"), default="stdo")
    ep.add_argument("--arch", choices=("espcn", "wdsr"), default="espcn")
    ep.add_argument("--width-a", type=int, default=None, dest="width_a")
    ep.add_argument("--width-b", type=int, default=None, dest="width_b")
    ep.add_argument("--epochs", type=int, default=100)
    ep.add_argument("--batch", type=int, default=16)
    ep.add_argument("--lr", type=float, default=None, help="default 1e-4 espcn, 1e-3 wdsr")
    ep.add_argument("--seed", type=int, default=0)
    ep.add_argument("--mu", type=int, default=None, help="joint dataset size (jstdo)")
    ep.add_argument("--rho", default="linear", help="'linear' or comma floats (jstdo)")
    ep.add_argument("--anchor", choices=("warmup", "bicubic"), default="warmup")
    ep.add_argument("--warmup-epochs", type=int, default=20, dest="warmup_epochs")
    ep.add_argument("--from-manifest", default=None, dest="from_manifest")
    ep.add_argument("--out", default=None, help="output .stdo path")
    ep.set_defaults(func=cmd_encode)

    dp = sub.add_parser("decode", help="decode a stream to PPM frames")
    dp.add_argument("--in", required=True, dest="infile")
    dp.add_argument("--out", required=True, help="output PPM directory")
    dp.add_argument("--threads", type=int, default=1)
    dp.set_defaults(func=cmd_decode)

    vp = sub.add_parser("eval", help="PSNR of a stream against the original HR video")
    vp.add_argument("--in", required=True, dest="infile")
    vp.add_argument("--hr", required=True)
    vp.add_argument("--threads", type=int, default=1)
    vp.add_argument("--out", default=None, help="report file prefix")
    vp.set_defaults(func=cmd_eval)

    bp = sub.add_parser("bench", help="decode throughput benchmark")
    bp.add_argument("--in", required=True, dest="infile")
    bp.add_argument("--repeats", type=int, default=5)
    bp.add_argument("--threads", type=int, default=1)
    bp.add_argument("--out", default=None, help="CSV path")
    bp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "func", None):
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except _UsageError as e:
        print(f"stdo: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericsError as e:
        print(f"stdo: numeric error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except FormatError as e:
        print(f"stdo: format error: {e}", file=sys.stderr)
        return EXIT_FORMAT
    except StdoError as e:
        print(f"stdo: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"stdo: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"stdo: i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
