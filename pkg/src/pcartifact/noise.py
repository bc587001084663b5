"""Axis-aligned depth-quantization degradation.

Each point is assigned one axis (by default the axis closest to its local
surface normal, as a projection-based codec would choose) and that single
coordinate is floored to a multiple of ``qstep``. Points that land on the
same position can then be collapsed, which thins the cloud the way low-rate
reconstructions do.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud

__all__ = [
    "NoiseConfig",
    "NoiseResult",
    "estimate_axes",
    "estimate_point_axis",
    "inject_noise",
    "inject_noise_detailed",
    "noise_manifest",
]

AXES = "xyz"


@dataclass(frozen=True)
class NoiseConfig:
    qstep: float = 4.0
    axis_mode: str = "normal_based"
    drop_duplicates: bool = True
    seed: int = 0
    neighbors: int = 16

    def __post_init__(self):
        if self.qstep < 1:
            raise ValueError("qstep must be >= 1")
        if self.axis_mode not in ("normal_based", "random"):
            raise ValueError("axis_mode must be 'normal_based' or 'random'")
        if self.neighbors < 3:
            raise ValueError("need at least 3 neighbors for a normal estimate")


@dataclass(frozen=True, eq=False)
class NoiseResult:
    cloud: PointCloud
    axes: np.ndarray          # per input point, 0/1/2
    displacement: np.ndarray  # per input point, new - old along its axis (<= 0)
    kept: np.ndarray          # input indices that survive duplicate collapse, in order


def _normal_axes(points: np.ndarray, neighbors: int, seed: int) -> np.ndarray:
    n = len(points)
    k = min(neighbors, n)
    _, nbr = cKDTree(points).query(points, k=k)
    nbr = nbr.reshape(n, k)
    local = points[nbr] - points[nbr].mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", local, local) / k
    _, vecs = np.linalg.eigh(cov)
    normal = vecs[:, :, 0]  # eigenvalues ascending: smallest-variance direction
    axes = np.abs(normal).argmax(axis=1)
    degenerate = np.all(np.abs(cov) == 0.0, axis=(1, 2))
    if degenerate.any():
        rng = np.random.default_rng(seed)
        axes[degenerate] = rng.integers(0, 3, size=int(degenerate.sum()))
    return axes


def estimate_axes(cloud: PointCloud, neighbors: int = 16, seed: int = 0) -> np.ndarray:
    """Dominant normal axis (0=x, 1=y, 2=z) for every point, via local PCA."""
    if neighbors < 3:
        raise ValueError("need at least 3 neighbors")
    return _normal_axes(cloud.points, neighbors, seed)


def estimate_point_axis(cloud: PointCloud, index: int, neighbors: int = 16, seed: int = 0) -> int:
    if neighbors < 3:
        raise ValueError("need at least 3 neighbors")
    pts = cloud.points
    k = min(neighbors, len(pts))
    _, nbr = cKDTree(pts).query(pts[index], k=k)
    local = pts[np.atleast_1d(nbr)]
    local = local - local.mean(axis=0)
    cov = local.T @ local / k
    if np.all(cov == 0.0):
        return int(np.random.default_rng(seed).integers(0, 3))
    _, vecs = np.linalg.eigh(cov)
    return int(np.abs(vecs[:, 0]).argmax())


def inject_noise_detailed(cloud: PointCloud, cfg: NoiseConfig) -> NoiseResult:
    pts = cloud.points
    n = len(pts)
    if cfg.axis_mode == "random":
        axes = np.random.default_rng(cfg.seed).integers(0, 3, size=n)
    else:
        axes = _normal_axes(pts, cfg.neighbors, cfg.seed)
    rows = np.arange(n)
    out = pts.copy()
    old = pts[rows, axes]
    new = np.floor(old / cfg.qstep) * cfg.qstep
    out[rows, axes] = new
    kept = rows
    if cfg.drop_duplicates:
        _, first = np.unique(out, axis=0, return_index=True)
        kept = np.sort(first)
    attrs = cloud.attributes[kept] if cloud.attributes is not None else None
    return NoiseResult(PointCloud(out[kept], attrs), axes, new - old, kept)


def inject_noise(cloud: PointCloud, cfg: NoiseConfig) -> PointCloud:
    """Floor one coordinate per point to a multiple of ``cfg.qstep``."""
    return inject_noise_detailed(cloud, cfg).cloud


def noise_manifest(result: NoiseResult, cfg: NoiseConfig) -> str:
    """Plain-text audit record: settings, counts and per-axis displacement histograms."""
    mag = -result.displacement
    edges = np.arange(0, int(np.ceil(cfg.qstep)) + 1)
    lines = [
        f"qstep {cfg.qstep!r}",
        f"seed {cfg.seed}",
        f"axis_mode {cfg.axis_mode}",
        f"drop_duplicates {int(cfg.drop_duplicates)}",
        f"input_points {len(result.axes)}",
        f"output_points {len(result.cloud)}",
        f"max_displacement {float(mag.max()) if len(mag) else 0.0!r}",
        "# axis <name> count <n> hist <bin_lo>:<count> ...  (|displacement| in unit bins)",
    ]
    for a in range(3):
        sel = mag[result.axes == a]
        hist, _ = np.histogram(sel, bins=edges)
        bins = " ".join(f"{lo}:{c}" for lo, c in zip(edges[:-1], hist))
        lines.append(f"axis {AXES[a]} count {len(sel)} hist {bins}")
    return "\n".join(lines) + "\n"
