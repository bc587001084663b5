"""Sparse 3D convolutions and pointwise ops with reverse-mode support.

Every convolution is expressed through two neighbor tables:

* ``fwd[o, k]``: input row read by output row ``o`` through kernel tap ``k``
* ``rev[i, k]``: output row that reads input row ``i`` through tap ``k``

with ``-1`` marking absent entries (they index an appended zero row). The
forward pass is one gather plus one matmul; the backward pass mirrors it
through ``rev``. Tables are cached on the :class:`CoordMap` they belong to.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .autograd import Tape, Var
from .tensor import CoordMap, SparseTensor, coord_keys

__all__ = [
    "BLOCK_OFFSETS",
    "ConvKernel",
    "SUBM_OFFSETS",
    "concat_features",
    "relu",
    "slice_features",
    "strided_conv",
    "submanifold_conv",
    "transposed_conv",
]

SUBM_OFFSETS = np.array(list(itertools.product((-1, 0, 1), repeat=3)), dtype=np.int64)
BLOCK_OFFSETS = np.array(list(itertools.product((0, 1), repeat=3)), dtype=np.int64)
_CENTER_TAP = 13


@dataclass
class ConvKernel:
    """Weights indexed ``(tap, in_channel, out_channel)`` plus a bias."""

    weight: Var
    bias: Var

    def __post_init__(self):
        w = self.weight.value
        if w.ndim != 3 or w.shape[0] not in (27, 8):
            raise ValueError("kernel weight must be (27 or 8, cin, cout)")
        if self.bias.value.shape != (w.shape[2],):
            raise ValueError("bias must have one entry per output channel")

    @property
    def taps(self) -> int:
        return self.weight.value.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weight.value.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.value.shape[2]

    @classmethod
    def from_arrays(cls, weight, bias=None) -> "ConvKernel":
        weight = np.asarray(weight, dtype=np.float64)
        if bias is None:
            bias = np.zeros(weight.shape[2])
        return cls(Var(weight), Var(bias))

    @classmethod
    def kaiming(cls, taps: int, cin: int, cout: int, rng: np.random.Generator, gain: float = 1.0):
        std = gain * np.sqrt(2.0 / (taps * cin))
        return cls(Var(rng.normal(0.0, std, size=(taps, cin, cout))), Var(np.zeros(cout)))


def _check(x: SparseTensor, kernel: ConvKernel, taps: int):
    if kernel.taps != taps:
        raise ValueError(f"expected a {taps}-tap kernel, got {kernel.taps}")
    if kernel.in_channels != x.channels:
        raise ValueError(f"channel mismatch: tensor has {x.channels}, kernel expects {kernel.in_channels}")


def _conv(x: Var, kernel: ConvKernel, fwd: np.ndarray, rev: np.ndarray, tape: Tape | None) -> Var:
    xv = x.value
    w = kernel.weight.value
    K, cin, cout = w.shape
    n_out = fwd.shape[0]
    xpad = np.vstack([xv, np.zeros((1, cin))])
    cols = xpad[fwd].reshape(n_out, K * cin)
    out = Var(cols @ w.reshape(K * cin, cout) + kernel.bias.value)
    if tape is not None:
        def back(t: Tape):
            g = t.grad(out)
            if g is None:
                return
            t.accumulate(kernel.weight, (cols.T @ g).reshape(K, cin, cout))
            t.accumulate(kernel.bias, g.sum(axis=0))
            gpad = np.vstack([g, np.zeros((1, cout))])
            gcols = gpad[rev].reshape(rev.shape[0], K * cout)
            t.accumulate(x, gcols @ w.transpose(0, 2, 1).reshape(K * cout, cin))

        tape.record(back, x, out, kernel.weight, kernel.bias)
    return out


def _subm_tables(cmap: CoordMap):
    if "subm" not in cmap.cache:
        q = cmap.coords[:, None, :] + SUBM_OFFSETS[None, :, :] * cmap.stride
        fwd = cmap.lookup(q.reshape(-1, 3)).reshape(len(cmap), 27)
        # Offsets are ordered so that tap 26 - k is the negation of tap k.
        rev = fwd[:, ::-1].copy()
        cmap.cache["subm"] = (fwd, rev)
    return cmap.cache["subm"]


def submanifold_conv(x: SparseTensor, kernel: ConvKernel, tape: Tape | None = None) -> SparseTensor:
    """3x3x3 convolution evaluated only at (and reading only from) occupied voxels."""
    _check(x, kernel, 27)
    fwd, rev = _subm_tables(x.cmap)
    return SparseTensor(x.cmap, _conv(x.features, kernel, fwd, rev, tape))


def _tap_index(off: np.ndarray) -> np.ndarray:
    return off[:, 0] * 4 + off[:, 1] * 2 + off[:, 2]


def _down_tables(cmap: CoordMap):
    if "down" not in cmap.cache:
        s2 = 2 * cmap.stride
        parent_coords = np.floor_divide(cmap.coords, s2) * s2
        _, first, inverse = np.unique(coord_keys(parent_coords), return_index=True, return_inverse=True)
        order = np.argsort(first, kind="stable")
        rank = np.empty(len(first), dtype=np.int64)
        rank[order] = np.arange(len(first))
        parent = rank[inverse.reshape(-1)]
        out_map = CoordMap(parent_coords[first[order]], s2)
        tap = _tap_index((cmap.coords - parent_coords) // cmap.stride)
        fwd = np.full((len(out_map), 8), -1, dtype=np.int64)
        fwd[parent, tap] = np.arange(len(cmap))
        rev = np.full((len(cmap), 8), -1, dtype=np.int64)
        rev[np.arange(len(cmap)), tap] = parent
        cmap.cache["down"] = (out_map, fwd, rev)
    return cmap.cache["down"]


def strided_conv(x: SparseTensor, kernel: ConvKernel, tape: Tape | None = None) -> SparseTensor:
    """2x2x2 convolution with stride 2: one output per occupied 2x2x2 block."""
    _check(x, kernel, 8)
    out_map, fwd, rev = _down_tables(x.cmap)
    return SparseTensor(out_map, _conv(x.features, kernel, fwd, rev, tape))


def _up_tables(src: CoordMap, target: CoordMap):
    key = ("up", id(src))
    hit = target.cache.get(key)
    if hit is None or hit[0] is not src:
        s2 = 2 * target.stride
        parent_coords = np.floor_divide(target.coords, s2) * s2
        parent = src.lookup(parent_coords)
        tap = _tap_index((target.coords - parent_coords) // target.stride)
        have = parent >= 0
        fwd = np.full((len(target), 8), -1, dtype=np.int64)
        fwd[np.flatnonzero(have), tap[have]] = parent[have]
        rev = np.full((len(src), 8), -1, dtype=np.int64)
        rev[parent[have], tap[have]] = np.flatnonzero(have)
        hit = (src, fwd, rev)
        target.cache[key] = hit
    return hit[1], hit[2]


def transposed_conv(x: SparseTensor, kernel: ConvKernel, target: CoordMap | SparseTensor,
                    tape: Tape | None = None) -> SparseTensor:
    """2x2x2 transposed convolution onto a recorded finer coordinate set.

    Each target voxel receives its parent block voxel through the tap given
    by its position inside the block.
    """
    if target is None:
        raise ValueError("transposed_conv needs the target coordinate set")
    _check(x, kernel, 8)
    tmap = target.cmap if isinstance(target, SparseTensor) else target
    if x.stride != 2 * tmap.stride:
        raise ValueError(f"stride mismatch: input stride {x.stride}, target stride {tmap.stride}")
    fwd, rev = _up_tables(x.cmap, tmap)
    return SparseTensor(tmap, _conv(x.features, kernel, fwd, rev, tape))


def concat_features(a: SparseTensor, b: SparseTensor, tape: Tape | None = None) -> SparseTensor:
    if a.cmap is not b.cmap and not (a.stride == b.stride and np.array_equal(a.coords, b.coords)):
        raise ValueError("concat_features needs identical coordinates and stride")
    ca = a.channels
    out = Var(np.hstack([a.F, b.F]))
    if tape is not None:
        def back(t: Tape):
            g = t.grad(out)
            if g is not None:
                t.accumulate(a.features, g[:, :ca])
                t.accumulate(b.features, g[:, ca:])

        tape.record(back, a.features, b.features, out)
    return SparseTensor(a.cmap, out)


def slice_features(x: SparseTensor, start: int, stop: int, tape: Tape | None = None) -> SparseTensor:
    out = Var(x.F[:, start:stop])
    if tape is not None:
        def back(t: Tape):
            g = t.grad(out)
            if g is not None:
                full = np.zeros_like(x.F)
                full[:, start:stop] = g
                t.accumulate(x.features, full)

        tape.record(back, x.features, out)
    return SparseTensor(x.cmap, out)


def relu(x: SparseTensor, tape: Tape | None = None) -> SparseTensor:
    mask = x.F > 0
    out = Var(np.where(mask, x.F, 0.0))
    if tape is not None:
        def back(t: Tape):
            g = t.grad(out)
            if g is not None:
                t.accumulate(x.features, g * mask)

        tape.record(back, x.features, out)
    return SparseTensor(x.cmap, out)


def instance_norm(x: SparseTensor, tape: Tape | None = None, eps: float = 1e-5) -> SparseTensor:
    """Standardize each channel over the occupied voxels of one tensor.

    No affine parameters; a single voxel maps to zeros.
    """
    F = x.F
    mu = F.mean(axis=0)
    xc = F - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=0) + eps)
    xhat = xc * inv
    out = Var(xhat)
    if tape is not None:
        def back(t: Tape):
            g = t.grad(out)
            if g is not None:
                gx = inv * (g - g.mean(axis=0) - xhat * (g * xhat).mean(axis=0))
                t.accumulate(x.features, gx)

        tape.record(back, x.features, out)
    return SparseTensor(x.cmap, out)
