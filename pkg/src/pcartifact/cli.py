"""Command-line entry point: ``pcartifact <command> ...``.

Commands: simulate, sample, train, denoise, eval, bdrate, sweep-c.
Every command exits non-zero with a one-line ``error:`` message on failure,
and output files are written atomically.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from .cloud import _atomic_write_bytes, read_ply, write_ply
from .metrics import DEFAULT_PEAK, RateDistortionPoint, bd_rate, evaluate, read_metrics_csv, write_metrics_csv
from .net import Checkpoint, train
from .noise import NoiseConfig, inject_noise_detailed, noise_manifest
from .pipeline import default_workers, denoise, load_config, sweep_c, training_pairs
from .sampling import load_patch_pairs, save_patch_pairs

log = logging.getLogger("pcartifact")


def _add_config_flags(p: argparse.ArgumentParser, net: bool = False):
    p.add_argument("--config", help="flat key = value config file; flags override it")
    p.add_argument("--k", type=int, help="target points per patch")
    p.add_argument("--C", type=float, help="mean patches per point")
    p.add_argument("--cube-side", type=float, dest="cube_side", help="cube side in voxels (default: derived)")
    p.add_argument("--seed-index", type=int, dest="seed_index", help="first farthest-point sample")
    p.add_argument("--min-points", type=int, dest="min_points")
    p.add_argument("--workers", type=int, help="parallel patch workers (default: CPU count)")
    if net:
        p.add_argument("--depth", type=int)
        p.add_argument("--base-channels", type=int, dest="base_channels")
        p.add_argument("--head-mode", choices=("one_hot", "soft", "direct"), dest="head_mode")
        p.add_argument("--normalization", choices=("none", "instance"))
        p.add_argument("--lr", type=float)
        p.add_argument("--lr-schedule", choices=("constant", "cosine"), dest="lr_schedule")
        p.add_argument("--steps", type=int)
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--seed", type=int)


def _config(args):
    keys = ("k", "C", "cube_side", "seed_index", "min_points", "workers", "depth", "base_channels",
            "head_mode", "normalization", "lr", "lr_schedule", "steps", "batch_size", "seed", "peak")
    overrides = {k: getattr(args, k, None) for k in keys}
    cfg = load_config(args.config, overrides)
    return cfg if cfg.workers is not None else replace(cfg, workers=default_workers())


def _write_text(path, text: str):
    _atomic_write_bytes(path, [text.encode("utf-8")])


def cmd_simulate(args) -> int:
    cloud = read_ply(args.input)
    cfg = NoiseConfig(qstep=args.qstep, axis_mode=args.axis_mode, drop_duplicates=not args.keep_duplicates,
                      seed=args.seed, neighbors=args.neighbors)
    res = inject_noise_detailed(cloud, cfg)
    write_ply(res.cloud, args.output, args.format)
    manifest = args.manifest or str(args.output) + ".noise.txt"
    _write_text(manifest, noise_manifest(res, cfg))
    print(f"simulated {len(cloud)} -> {len(res.cloud)} points (qstep {cfg.qstep:g}); manifest {manifest}")
    return 0


def cmd_sample(args) -> int:
    cfg = _config(args)
    pairs = training_pairs(read_ply(args.noisy), read_ply(args.clean), cfg.sampler, seeds=args.passes)
    if not pairs:
        raise ValueError("no patch pairs met the minimum point count")
    path = save_patch_pairs(pairs, args.outdir)
    print(f"wrote {len(pairs)} patch pairs; manifest {path}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    pairs = []
    for d in args.pairs:
        pairs.extend(load_patch_pairs(d))
    log_path = args.log or str(args.out) + ".loss.csv"
    ckpt = train(pairs, cfg.net, checkpoint_path=None, workers=cfg.workers)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "loss"])
    for i, v in enumerate(ckpt.losses):
        w.writerow([i, repr(v)])
    ckpt.save(args.out)
    _write_text(log_path, buf.getvalue())
    last = ckpt.losses[-1] if ckpt.losses else float("nan")
    print(f"trained {cfg.net.steps} steps on {len(pairs)} pairs; final loss {last:.6g}; checkpoint {args.out}")
    return 0


def cmd_denoise(args) -> int:
    cfg = _config(args)
    ckpt = Checkpoint.load(args.checkpoint)
    if args.config and not cfg.net.same_architecture(ckpt.config):
        raise ValueError("config architecture does not match the checkpoint")
    noisy = read_ply(args.noisy)
    if len(noisy) == 0:
        raise ValueError("input cloud is empty")
    res = denoise(noisy, ckpt, cfg.sampler, workers=cfg.workers)
    write_ply(res.cloud, args.output, args.format)
    print(f"patches N={res.n_patches} used={res.used_patches} covered={res.covered}/{len(noisy)} "
          f"time={res.seconds:.3f}s")
    return 0


def cmd_eval(args) -> int:
    rep = evaluate(read_ply(args.test), read_ply(args.ref), peak=args.peak,
                   name=args.name or Path(args.test).name, rate_bpp=args.rate)
    buf = io.StringIO()
    write_metrics_csv([rep], buf)
    sys.stdout.write(buf.getvalue())
    if args.csv:
        write_metrics_csv([rep], args.csv, append=True)
    return 0


def _rd_curve(path):
    pts = []
    for r in read_metrics_csv(path):
        if r.rate_bpp is None:
            raise ValueError(f"{path}: row {r.name!r} has no rate_bpp")
        pts.append(RateDistortionPoint(r.rate_bpp, r.psnr_d1))
    return pts


def cmd_bdrate(args) -> int:
    value = bd_rate(_rd_curve(args.anchor), _rd_curve(args.test))
    print(f"{value:.4f}")
    return 0


def cmd_sweep_c(args) -> int:
    cfg = _config(args)
    rows = sweep_c(read_ply(args.noisy), read_ply(args.clean), Checkpoint.load(args.checkpoint), cfg.sampler,
                   args.C_values, peak=args.peak, repeats=args.repeats, workers=cfg.workers)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["C", "psnr", "seconds", "n_patches"])
    for r in rows:
        w.writerow([repr(r.C), "inf" if r.psnr == math.inf else repr(r.psnr), repr(r.seconds), r.n_patches])
    if args.out:
        _write_text(args.out, buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pcartifact", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="apply axis-aligned quantization noise to a PLY")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--qstep", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--axis-mode", choices=("normal_based", "random"), default="normal_based")
    p.add_argument("--keep-duplicates", action="store_true", help="do not collapse coincident points")
    p.add_argument("--neighbors", type=int, default=16)
    p.add_argument("--manifest", help="sidecar path (default: OUTPUT.noise.txt)")
    p.add_argument("--format", choices=("ascii", "binary-le"), default="binary-le")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sample", help="cut noisy/clean patch pairs into a patch-set directory")
    p.add_argument("noisy")
    p.add_argument("clean")
    p.add_argument("outdir")
    p.add_argument("--passes", type=int, default=1, help="FPS passes with different start points")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="train the network on one or more patch sets")
    p.add_argument("pairs", nargs="+", help="patch-set directories (or their manifest files)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="loss CSV path (default: OUT.loss.csv)")
    _add_config_flags(p, net=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="remove artifacts from a noisy PLY")
    p.add_argument("noisy")
    p.add_argument("checkpoint")
    p.add_argument("output")
    p.add_argument("--format", choices=("ascii", "binary-le"), default="binary-le")
    _add_config_flags(p)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("eval", help="D1 / Hausdorff PSNR and Chamfer distance of TEST against REF")
    p.add_argument("test")
    p.add_argument("ref")
    p.add_argument("--peak", type=float, default=DEFAULT_PEAK)
    p.add_argument("--rate", type=float, help="bits per point to record with this row")
    p.add_argument("--name")
    p.add_argument("--csv", help="append the row to this metrics CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bdrate", help="BD-rate of TEST vs ANCHOR metrics CSVs (percent)")
    p.add_argument("anchor")
    p.add_argument("test")
    p.set_defaults(func=cmd_bdrate)

    p = sub.add_parser("sweep-c", help="PSNR and runtime for several overlap factors C")
    p.add_argument("noisy")
    p.add_argument("clean")
    p.add_argument("checkpoint")
    p.add_argument("--values", dest="C_values", type=float, nargs="+", required=True)
    p.add_argument("--out", help="CSV path (C, psnr, seconds, n_patches)")
    p.add_argument("--peak", type=float, default=DEFAULT_PEAK)
    p.add_argument("--repeats", type=int, default=1, help="timing runs per C (median reported)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep_c)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
