"""Synthetic voxelized test scenes."""

from __future__ import annotations

import numpy as np

from .cloud import PointCloud

__all__ = ["multi_plane_cloud", "plane_cloud"]


def _rectangle(rng, box: float, spacing: float):
    normal = rng.normal(size=3)
    normal /= np.linalg.norm(normal)
    u = np.cross(normal, rng.normal(size=3))
    u /= np.linalg.norm(u)
    v = np.cross(normal, u)
    w, h = rng.uniform(0.15, 0.4, size=2) * box
    center = rng.uniform(0.25, 0.75, size=3) * box
    s = np.arange(-w / 2, w / 2, spacing)
    t = np.arange(-h / 2, h / 2, spacing)
    ss, tt = np.meshgrid(s, t, indexing="ij")
    pts = center + ss.reshape(-1, 1) * u + tt.reshape(-1, 1) * v
    inside = np.all((pts >= 0) & (pts < box), axis=1)
    return pts[inside]


def multi_plane_cloud(n_points: int = 50_000, box: float = 256.0, seed: int = 0,
                      spacing: float = 0.35) -> PointCloud:
    """Union of randomly oriented voxelized rectangles, about ``n_points`` voxels.

    Rectangles are added until the number of distinct occupied voxels
    reaches ``n_points``; the last one is cropped so the total is exact.
    """
    rng = np.random.default_rng(seed)
    occupied = np.empty((0, 3))
    while len(occupied) < n_points:
        vox = np.unique(np.floor(_rectangle(rng, box, spacing) + 0.5), axis=0)
        if len(occupied):
            merged = np.vstack([occupied, vox])
            _, first = np.unique(merged, axis=0, return_index=True)
            new = merged[np.sort(first[first >= len(occupied)])]
        else:
            new = vox
        need = n_points - len(occupied)
        if len(new) > need:
            # Crop along the rectangle rather than thinning it.
            center = new.mean(axis=0)
            new = new[np.argsort(((new - center) ** 2).sum(axis=1), kind="stable")[:need]]
        occupied = np.vstack([occupied, new])
    return PointCloud(occupied[rng.permutation(len(occupied))])


def plane_cloud(size: int = 32, axis: int = 2, offset: float = 0.0, jitter: float = 0.0,
                seed: int = 0) -> PointCloud:
    """A ``size x size`` grid on the plane ``coordinate[axis] == offset``."""
    rng = np.random.default_rng(seed)
    a, b = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    cols = [a.ravel().astype(float), b.ravel().astype(float)]
    depth = np.full(size * size, float(offset)) + (rng.normal(0, jitter, size * size) if jitter else 0.0)
    cols.insert(axis, depth)
    return PointCloud(np.column_stack(cols))
