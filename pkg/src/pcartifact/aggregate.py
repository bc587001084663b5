from __future__ import annotations

import numpy as np

from .cloud import PointCloud
from .sampling import Patch

__all__ = ["Accumulator", "aggregate", "denormalize_patch"]


def denormalize_patch(patch: Patch):
    """``(source_indices, positions)`` of a patch, back in the cloud frame."""
    return patch.source_indices, patch.positions + patch.origin


class Accumulator:
    """Running per-point (sum, count) of contributed positions."""

    def __init__(self, n: int):
        self.n = n
        self.sums = np.zeros((n, 3))
        self.counts = np.zeros(n, dtype=np.int64)

    def add(self, indices, positions) -> None:
        idx = np.asarray(indices, dtype=np.int64)
        pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        if len(idx) != len(pos):
            raise ValueError("indices and positions differ in length")
        if len(idx) and (idx.min() < 0 or idx.max() >= self.n):
            raise IndexError("contribution index out of range")
        for c in range(3):
            self.sums[:, c] += np.bincount(idx, weights=pos[:, c], minlength=self.n)
        self.counts += np.bincount(idx, minlength=self.n)

    def add_patch(self, patch: Patch) -> None:
        self.add(*denormalize_patch(patch))

    def result(self, original: PointCloud) -> PointCloud:
        if len(original) != self.n:
            raise ValueError("original cloud size differs from accumulator size")
        out = np.array(original.points, copy=True)
        hit = self.counts > 0
        out[hit] = self.sums[hit] / self.counts[hit, None]
        return original.with_points(out)


def aggregate(contributions, original: PointCloud) -> PointCloud:
    """Mean of every contributed position per source point.

    ``contributions`` is an iterable of ``(source_index, position)`` pairs or
    of ``(indices, positions)`` array batches. Points with no contribution
    keep their original position; size and order are preserved.
    """
    acc = Accumulator(len(original))
    idx, pos = [], []
    for i, p in contributions:
        idx.append(np.atleast_1d(np.asarray(i, dtype=np.int64)))
        pos.append(np.asarray(p, dtype=np.float64).reshape(-1, 3))
    if idx:
        acc.add(np.concatenate(idx), np.vstack(pos))
    return acc.result(original)
