"""Sparse voxel tensors: unique integer coordinates with per-voxel features."""

from __future__ import annotations

import numpy as np

from .autograd import Tape, Var

__all__ = ["CoordMap", "SparseTensor", "build_sparse_tensor", "coord_keys"]

_BIAS = np.int64(1 << 20)
_SPAN = np.int64(1 << 21)


def coord_keys(coords: np.ndarray) -> np.ndarray:
    """Pack integer 3-tuples (|c| < 2**20) into sortable int64 keys."""
    c = np.asarray(coords, dtype=np.int64) + _BIAS
    return (c[..., 0] * _SPAN + c[..., 1]) * _SPAN + c[..., 2]


class CoordMap:
    """Coordinate -> row lookup for one coordinate set, plus a cache of
    kernel maps computed against it. Tensors that share coordinates share
    the map, so neighbor tables are built once per level."""

    def __init__(self, coords: np.ndarray, stride: int):
        self.coords = np.ascontiguousarray(coords, dtype=np.int64).reshape(-1, 3)
        self.coords.setflags(write=False)
        self.stride = int(stride)
        keys = coord_keys(self.coords)
        self._order = np.argsort(keys, kind="stable")
        self._sorted = keys[self._order]
        if len(keys) > 1 and np.any(self._sorted[1:] == self._sorted[:-1]):
            raise ValueError("duplicate coordinates")
        self.cache: dict = {}

    def __len__(self):
        return len(self.coords)

    def lookup(self, coords: np.ndarray) -> np.ndarray:
        """Row of each query coordinate, -1 where unoccupied."""
        keys = coord_keys(coords)
        if len(self._sorted) == 0:
            return np.full(keys.shape, -1, dtype=np.int64)
        pos = np.searchsorted(self._sorted, keys)
        pos = np.minimum(pos, len(self._sorted) - 1)
        hit = self._sorted[pos] == keys
        return np.where(hit, self._order[pos], -1)


class SparseTensor:
    """Features on occupied voxels at a given stride.

    Every coordinate is a multiple of ``stride``; ``features`` is a
    :class:`Var` of shape ``(len(coords), channels)``.
    """

    def __init__(self, cmap: CoordMap, features: Var):
        if features.value.ndim != 2 or features.value.shape[0] != len(cmap):
            raise ValueError("features must be (num_voxels, channels)")
        self.cmap = cmap
        self.features = features

    @classmethod
    def from_arrays(cls, coords, features, stride: int = 1) -> "SparseTensor":
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 3)
        if stride < 1 or np.any(coords % stride):
            raise ValueError("coordinates must be divisible by stride")
        feats = np.asarray(features, dtype=np.float64).reshape(len(coords), -1)
        return cls(CoordMap(coords, stride), Var(feats))

    @property
    def coords(self) -> np.ndarray:
        return self.cmap.coords

    @property
    def stride(self) -> int:
        return self.cmap.stride

    @property
    def F(self) -> np.ndarray:
        return self.features.value

    @property
    def channels(self) -> int:
        return self.features.value.shape[1]

    def __len__(self):
        return len(self.cmap)

    def __repr__(self):
        return f"SparseTensor(voxels={len(self)}, channels={self.channels}, stride={self.stride})"


def build_sparse_tensor(positions, features, tape: Tape | None = None):
    """Voxelize points; features of points sharing a voxel are averaged.

    Returns ``(tensor, merge_map)`` where ``merge_map[i]`` is the voxel row of
    point ``i``. Voxels are ordered by first occurrence, so distinct inputs
    keep their order and the merge map is the identity.
    """
    pos = np.asarray(positions)
    if pos.size == 0:
        raise ValueError("cannot build a sparse tensor from no points")
    pos = np.floor(np.asarray(pos, dtype=np.float64)).astype(np.int64).reshape(-1, 3)
    fv = features if isinstance(features, Var) else Var(np.asarray(features, dtype=np.float64).reshape(len(pos), -1))
    if fv.value.shape[0] != len(pos):
        raise ValueError("positions and features differ in length")

    keys = coord_keys(pos)
    _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    order = np.argsort(first, kind="stable")
    rank[order] = np.arange(len(first))
    merge = rank[inverse.reshape(-1)]
    nv = len(first)
    coords = pos[first[order]]

    counts = np.bincount(merge, minlength=nv).astype(np.float64)
    x = fv.value
    merged = np.empty((nv, x.shape[1]))
    for c in range(x.shape[1]):
        merged[:, c] = np.bincount(merge, weights=x[:, c], minlength=nv)
    merged /= counts[:, None]
    out = Var(merged)
    if tape is not None:
        def back(t: Tape):
            g = t.grad(out)
            if g is not None:
                t.accumulate(fv, (g / counts[:, None])[merge])

        tape.record(back, fv, out)
    return SparseTensor(CoordMap(coords, 1), out), merge
