"""End-to-end flows: sample -> clean each patch -> aggregate, plus helpers
for building training sets and sweeping the overlap factor ``C``."""

from __future__ import annotations

import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .aggregate import Accumulator
from .cloud import PointCloud
from .metrics import DEFAULT_PEAK, d1_psnr
from .net import Checkpoint, NetConfig, UNet
from .sampling import (
    PatchPair,
    SamplerConfig,
    derive_cube_side,
    extract_cube_patch,
    patch_count,
    sample_centers,
    sample_patch_pairs,
)

__all__ = [
    "DenoiseResult",
    "RunConfig",
    "default_workers",
    "denoise",
    "load_config",
    "parse_config_text",
    "sweep_c",
    "training_pairs",
]


def default_workers() -> int:
    return os.cpu_count() or 1


@dataclass(frozen=True)
class RunConfig:
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    net: NetConfig = field(default_factory=NetConfig)
    peak: float = DEFAULT_PEAK
    workers: int | None = None


_SAMPLER_KEYS = {f.name: f for f in fields(SamplerConfig)}
_NET_KEYS = {f.name: f for f in fields(NetConfig)}
_TOP_KEYS = {"peak": float, "workers": int}


def _convert(name: str, raw: str):
    if name in ("head_mode", "activation", "normalization", "lr_schedule"):
        return raw
    if name == "cube_side":
        return None if raw.lower() in ("", "none", "auto") else float(raw)
    if name in ("C", "lr", "head_init_scale", "peak"):
        return float(raw)
    return int(raw)


def parse_config_text(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse ``key = value`` lines (``#`` starts a comment) into a :class:`RunConfig`.

    ``overrides`` (already-typed values, ``None`` meaning unset) win over the file.
    """
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        if not sep:
            key, _, raw = line.partition(" ")
        key, raw = key.strip(), raw.strip()
        if key not in _SAMPLER_KEYS and key not in _NET_KEYS and key not in _TOP_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ValueError:
            raise ValueError(f"config line {lineno}: bad value {raw!r} for {key}") from None
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = v
    sampler = SamplerConfig(**{k: v for k, v in values.items() if k in _SAMPLER_KEYS})
    net = NetConfig(**{k: v for k, v in values.items() if k in _NET_KEYS})
    top = {k: values[k] for k in _TOP_KEYS if k in values}
    return RunConfig(sampler, net, **top)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    text = "" if path is None else open(path).read()
    return parse_config_text(text, overrides)


@dataclass(frozen=True, eq=False)
class DenoiseResult:
    cloud: PointCloud
    n_patches: int      # patch_count(n, C, k)
    used_patches: int   # after dropping patches below min_points
    covered: int        # points that received at least one contribution
    seconds: float


def denoise(noisy: PointCloud, net: UNet | Checkpoint, sampler: SamplerConfig, workers: int = 1) -> DenoiseResult:
    """Clean a whole cloud patch by patch.

    Patches are processed in parallel but accumulated in patch order, so the
    output does not depend on ``workers``.
    """
    if len(noisy) == 0:
        raise ValueError("empty input cloud")
    if isinstance(net, Checkpoint):
        net = net.network()
    t0 = time.perf_counter()
    side = sampler.cube_side if sampler.cube_side is not None else derive_cube_side(noisy, sampler.k)
    centers = sample_centers(noisy, sampler)
    lim = max(sampler.min_points, 1)

    def work(center):
        patch = extract_cube_patch(noisy, center, side)
        return net.clean(patch) if len(patch) >= lim else None

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            cleaned = list(pool.map(work, centers))
    else:
        cleaned = [work(c) for c in centers]

    acc = Accumulator(len(noisy))
    used = 0
    for patch in cleaned:
        if patch is not None:
            acc.add_patch(patch)
            used += 1
    out = acc.result(noisy)
    return DenoiseResult(
        cloud=out,
        n_patches=patch_count(len(noisy), sampler.C, sampler.k),
        used_patches=used,
        covered=int((acc.counts > 0).sum()),
        seconds=time.perf_counter() - t0,
    )


def training_pairs(noisy: PointCloud, clean: PointCloud, sampler: SamplerConfig,
                   seeds: int = 1, rng_seed: int = 0) -> list[PatchPair]:
    """Patch pairs from several FPS passes with different starting points."""
    rng = np.random.default_rng(rng_seed)
    starts = [sampler.seed_index] + list(rng.integers(0, len(noisy), size=seeds - 1))
    pairs = []
    for s in starts:
        pairs.extend(sample_patch_pairs(noisy, clean, replace(sampler, seed_index=int(s))))
    return pairs


@dataclass(frozen=True)
class SweepRow:
    C: float
    psnr: float
    seconds: float
    n_patches: int


def sweep_c(noisy: PointCloud, clean: PointCloud, net: UNet | Checkpoint, sampler: SamplerConfig,
            C_values, peak: float = DEFAULT_PEAK, repeats: int = 1, workers: int = 1) -> list[SweepRow]:
    """Denoise once per ``C`` (timing is the median of ``repeats`` runs) and score D1 PSNR."""
    if isinstance(net, Checkpoint):
        net = net.network()
    rows = []
    for C in C_values:
        cfg = replace(sampler, C=C)
        times, res = [], None
        for _ in range(max(repeats, 1)):
            res = denoise(noisy, net, cfg, workers)
            times.append(res.seconds)
        _, _, psnr = d1_psnr(res.cloud, clean, peak)
        rows.append(SweepRow(C, psnr, statistics.median(times), res.n_patches))
    return rows
