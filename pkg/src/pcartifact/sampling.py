"""Overlapping cube patches placed by farthest point sampling.

A cloud of ``n`` points is covered by ``N = ceil(n * C / k)`` cubes of side
``L`` centered on farthest-point-sampled points, where ``k`` is the target
number of points per patch and ``C`` the mean number of patches each point
falls into. Patch positions are expressed in a local frame ``[0, L)^3``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cloud import PointCloud, bounding_box, read_ply, write_ply

__all__ = [
    "Patch",
    "PatchPair",
    "SamplerConfig",
    "derive_cube_side",
    "extract_cube_patch",
    "extract_patch_pair",
    "farthest_point_sample",
    "load_patch_pairs",
    "patch_count",
    "sample_centers",
    "sample_patch_pairs",
    "sample_patches",
    "save_patch_pairs",
]


@dataclass(frozen=True)
class SamplerConfig:
    k: int = 1000
    C: float = 4.0
    cube_side: float | None = None
    seed_index: int = 0
    min_points: int = 8

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.C < 1:
            raise ValueError("C must be >= 1")
        if self.cube_side is not None and self.cube_side <= 0:
            raise ValueError("cube_side must be positive")
        if self.min_points < 0:
            raise ValueError("min_points must be >= 0")


@dataclass(frozen=True, eq=False)
class Patch:
    """Points of one cube, in the cube's local frame.

    ``positions[i]`` came from ``source_indices[i]`` of the source cloud, at
    ``positions[i] + origin`` where ``origin = center - side / 2``.
    """

    positions: np.ndarray
    source_indices: np.ndarray
    center: np.ndarray
    side: float

    @property
    def origin(self) -> np.ndarray:
        return self.center - self.side / 2.0

    def __len__(self) -> int:
        return len(self.positions)

    def with_positions(self, positions) -> "Patch":
        positions = np.asarray(positions, dtype=np.float64)
        if positions.shape != self.positions.shape:
            raise ValueError("positions shape mismatch")
        return Patch(positions, self.source_indices, self.center, self.side)


@dataclass(frozen=True, eq=False)
class PatchPair:
    noisy: Patch
    clean: Patch

    def __post_init__(self):
        if not (np.array_equal(self.noisy.center, self.clean.center) and self.noisy.side == self.clean.side):
            raise ValueError("noisy and clean patches must share one cube")


def patch_count(n: int, C: float, k: int) -> int:
    """Number of cubes needed so each point is covered ``C`` times on average."""
    if n < 1 or C < 1 or k < 1:
        raise ValueError(f"patch_count needs n, C, k >= 1 (got {n}, {C}, {k})")
    if isinstance(C, (int, np.integer)) or float(C).is_integer():
        return max(1, -(-int(n) * int(C) // int(k)))
    return max(1, math.ceil(n * C / k))


def farthest_point_sample(cloud, N: int, seed_index: int = 0) -> np.ndarray:
    """Greedy max-min-distance selection starting from ``seed_index``.

    Ties go to the lowest index. Returns ``N`` distinct indices.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    n = len(pts)
    if not 1 <= N <= n:
        raise ValueError(f"N={N} out of range for a cloud of {n} points")
    if not 0 <= seed_index < n:
        raise ValueError(f"seed_index={seed_index} out of range")
    chosen = np.empty(N, dtype=np.int64)
    chosen[0] = seed_index
    min_d2 = np.full(n, np.inf)
    last = seed_index
    for i in range(1, N):
        diff = pts - pts[last]
        np.minimum(min_d2, np.einsum("ij,ij->i", diff, diff), out=min_d2)
        min_d2[chosen[:i]] = -1.0
        last = int(np.argmax(min_d2))
        chosen[i] = last
    return chosen


def extract_cube_patch(cloud: PointCloud, center, side: float) -> Patch:
    """All points with ``center - side/2 <= p < center + side/2`` on every axis."""
    if side <= 0:
        raise ValueError("side must be positive")
    center = np.asarray(center, dtype=np.float64).reshape(3)
    lo = center - side / 2.0
    hi = center + side / 2.0
    pts = cloud.points
    inside = np.all((pts >= lo) & (pts < hi), axis=1)
    idx = np.flatnonzero(inside)
    return Patch(pts[idx] - lo, idx, center, float(side))


def extract_patch_pair(noisy: PointCloud, clean: PointCloud, center, side: float) -> PatchPair:
    return PatchPair(extract_cube_patch(noisy, center, side), extract_cube_patch(clean, center, side))


def derive_cube_side(cloud: PointCloud, k: int) -> float:
    """Cube side expected to hold about ``k`` points at the cloud's mean density.

    The side is rounded to a whole number of voxels so that, for integer
    clouds, ``center - side / 2`` is exact and the local frame round-trips
    bit for bit.
    """
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    if k < 1:
        raise ValueError("k must be >= 1")
    ext = bounding_box(cloud).extent
    longest = float(ext.max())
    if longest == 0.0:
        return 1.0
    volume = float(np.prod(ext))
    if volume == 0.0:
        side = longest / 8.0
    else:
        side = (k * volume / len(cloud)) ** (1.0 / 3.0)
        side = min(side, longest)
    return float(max(round(side), 1))


def sample_centers(cloud: PointCloud, cfg: SamplerConfig) -> np.ndarray:
    """FPS cube centers for ``cloud`` (``patch_count`` of them, capped at ``len(cloud)``)."""
    n = len(cloud)
    N = min(patch_count(n, cfg.C, cfg.k), n)
    return cloud.points[farthest_point_sample(cloud, N, cfg.seed_index)]


def _side(cloud, cfg):
    return cfg.cube_side if cfg.cube_side is not None else derive_cube_side(cloud, cfg.k)


def sample_patches(cloud: PointCloud, cfg: SamplerConfig) -> list[Patch]:
    """Cube patches over ``cloud``; patches smaller than ``cfg.min_points`` are dropped."""
    side = _side(cloud, cfg)
    patches = (extract_cube_patch(cloud, c, side) for c in sample_centers(cloud, cfg))
    return [p for p in patches if len(p) >= max(cfg.min_points, 1)]


def sample_patch_pairs(noisy: PointCloud, clean: PointCloud, cfg: SamplerConfig) -> list[PatchPair]:
    """Centers come from the noisy cloud; each pair is cut from both clouds at that center."""
    side = _side(noisy, cfg)
    pairs = (extract_patch_pair(noisy, clean, c, side) for c in sample_centers(noisy, cfg))
    lim = max(cfg.min_points, 1)
    return [p for p in pairs if len(p.noisy) >= lim and len(p.clean) >= lim]


# Manifest lines, one record per line, whitespace separated:
#   patch <id> <cx> <cy> <cz> <side> <noisy.ply> <clean.ply>
#   noisy_indices <id> <i0> <i1> ...
#   clean_indices <id> <i0> <i1> ...
MANIFEST = "manifest.txt"


def save_patch_pairs(pairs: list[PatchPair], directory) -> Path:
    """Cache patch pairs as per-patch PLY files plus a text manifest."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = ["# pcartifact patch set v1"]
    for i, pair in enumerate(pairs):
        nf, cf = f"patch_{i:05d}_noisy.ply", f"patch_{i:05d}_clean.ply"
        write_ply(PointCloud(pair.noisy.positions), d / nf)
        write_ply(PointCloud(pair.clean.positions), d / cf)
        nums = [repr(float(v)) for v in (*pair.noisy.center, pair.noisy.side)]
        lines.append(" ".join(["patch", str(i), *nums, nf, cf]))
        lines.append(" ".join(["noisy_indices", str(i), *map(str, pair.noisy.source_indices)]))
        lines.append(" ".join(["clean_indices", str(i), *map(str, pair.clean.source_indices)]))
    (d / MANIFEST).write_text("\n".join(lines) + "\n")
    return d / MANIFEST


def load_patch_pairs(path) -> list[PatchPair]:
    """Inverse of :func:`save_patch_pairs`; ``path`` is the directory or its manifest."""
    path = Path(path)
    manifest = path / MANIFEST if path.is_dir() else path
    root = manifest.parent
    heads, noisy_idx, clean_idx = {}, {}, {}
    for lineno, line in enumerate(manifest.read_text().splitlines(), start=1):
        tok = line.split()
        if not tok or tok[0].startswith("#"):
            continue
        try:
            if tok[0] == "patch":
                heads[int(tok[1])] = (np.array([float(v) for v in tok[2:5]]), float(tok[5]), tok[6], tok[7])
            elif tok[0] == "noisy_indices":
                noisy_idx[int(tok[1])] = np.array(tok[2:], dtype=np.int64)
            elif tok[0] == "clean_indices":
                clean_idx[int(tok[1])] = np.array(tok[2:], dtype=np.int64)
            else:
                raise ValueError(tok[0])
        except (ValueError, IndexError):
            raise ValueError(f"{manifest}:{lineno}: malformed manifest line") from None
    pairs = []
    for i in sorted(heads):
        center, side, nf, cf = heads[i]
        noisy = read_ply(root / nf).points
        clean = read_ply(root / cf).points
        pairs.append(PatchPair(
            Patch(noisy, noisy_idx.get(i, np.arange(len(noisy))), center, side),
            Patch(clean, clean_idx.get(i, np.arange(len(clean))), center, side),
        ))
    return pairs
