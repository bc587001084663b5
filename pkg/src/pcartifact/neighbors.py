"""Exact nearest-neighbor search on a uniform grid.

Points are bucketed into cubic cells. A query scans cells in growing
Chebyshev shells around its own cell and stops once the best squared
distance found is strictly below the squared radius that the next shell is
guaranteed to exceed. Ties resolve to the lowest target index.
"""

from __future__ import annotations

import numpy as np

__all__ = ["GridIndex", "linear_scan_nn", "nearest_sq_dist"]

_BIAS = np.int64(1 << 20)
_SPAN = np.int64(1 << 21)


def _cell_keys(cells: np.ndarray) -> np.ndarray:
    c = cells.astype(np.int64) + _BIAS
    return (c[..., 0] * _SPAN + c[..., 1]) * _SPAN + c[..., 2]


def _check_finite(pts):
    if not np.isfinite(pts).all():
        raise ValueError("nearest-neighbor search needs finite coordinates")


def linear_scan_nn(queries, targets, chunk: int = 2048):
    """Brute-force nearest neighbor, returned as ``(sq_dist, index)``."""
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    targets = np.asarray(targets, dtype=np.float64).reshape(-1, 3)
    if len(targets) == 0:
        raise ValueError("empty target set")
    _check_finite(queries)
    _check_finite(targets)
    d2 = np.empty(len(queries))
    idx = np.empty(len(queries), dtype=np.int64)
    for s in range(0, len(queries), chunk):
        diff = queries[s:s + chunk, None, :] - targets[None, :, :]
        dd = np.einsum("ijk,ijk->ij", diff, diff)
        j = dd.argmin(axis=1)
        idx[s:s + chunk] = j
        d2[s:s + chunk] = dd[np.arange(len(j)), j]
    return d2, idx


class GridIndex:
    """Uniform-grid index over a fixed target point set."""

    def __init__(self, targets, cell_size: float | None = None):
        pts = np.asarray(targets, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            raise ValueError("empty target set")
        _check_finite(pts)
        self.points = pts
        self.origin = pts.min(axis=0)
        if cell_size is None:
            cell_size = self._default_cell_size(pts)
        self.cell_size = float(cell_size)
        cells = np.floor((pts - self.origin) / self.cell_size).astype(np.int64)
        self._cell_hi = cells.max(axis=0)
        keys = _cell_keys(cells)
        order = np.argsort(keys, kind="stable")
        self._order = order
        skeys = keys[order]
        self._ukeys, self._start, self._count = np.unique(skeys, return_index=True, return_counts=True)

    @staticmethod
    def _default_cell_size(pts: np.ndarray) -> float:
        # Roughly the mean spacing of a surface sample: extent / sqrt(n) per axis,
        # which keeps a handful of points per occupied cell.
        ext = pts.max(axis=0) - pts.min(axis=0)
        scale = float(ext.max())
        if scale == 0.0:
            return 1.0
        nonzero = ext[ext > 0]
        area = float(np.prod(np.sort(nonzero)[-2:])) if len(nonzero) >= 2 else scale * scale
        return max(np.sqrt(area / len(pts)) * 2.0, scale * 1e-6)

    def _cell_range(self, keys):
        pos = np.searchsorted(self._ukeys, keys)
        pos_c = np.minimum(pos, len(self._ukeys) - 1)
        hit = self._ukeys[pos_c] == keys
        start = np.where(hit, self._start[pos_c], 0)
        count = np.where(hit, self._count[pos_c], 0)
        return start, count

    def query(self, queries):
        """Nearest target for each query: ``(sq_dist, index)``."""
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        _check_finite(q)
        nq = len(q)
        best_d2 = np.full(nq, np.inf)
        best_i = np.full(nq, -1, dtype=np.int64)
        if nq == 0:
            return best_d2, best_i
        qcell = np.floor((q - self.origin) / self.cell_size).astype(np.int64)
        # Shell radius after which every occupied cell has been visited.
        reach = np.maximum(np.abs(qcell), np.abs(qcell - self._cell_hi)).max(axis=1)
        active = np.arange(nq)
        r = 0
        while len(active) and r <= _MAX_SHELL:
            offs = _shell_offsets(r)
            qa = active
            cells = qcell[qa][:, None, :] + offs[None, :, :]
            start, count = self._cell_range(_cell_keys(cells).ravel())
            owner = np.repeat(np.repeat(qa, len(offs)), count)
            total = int(count.sum())
            if total:
                first = np.repeat(start, count)
                run = np.arange(total) - np.repeat(np.cumsum(count) - count, count)
                tidx = self._order[first + run]
                diff = q[owner] - self.points[tidx]
                d2 = np.einsum("ij,ij->i", diff, diff)
                # Candidates arrive grouped by owner (ascending); per owner keep
                # the smallest d2, then the smallest target index.
                head = np.flatnonzero(np.r_[True, owner[1:] != owner[:-1]])
                o = owner[head]
                dd = np.minimum.reduceat(d2, head)
                seg = np.repeat(np.arange(len(head)), np.diff(np.r_[head, total]))
                ti = np.minimum.reduceat(np.where(d2 == dd[seg], tidx, np.iinfo(np.int64).max), head)
                better = (dd < best_d2[o]) | ((dd == best_d2[o]) & (ti < best_i[o]))
                best_d2[o[better]] = dd[better]
                best_i[o[better]] = ti[better]
            # Anything outside shell r lies at least r * cell_size away.
            bound = (r * self.cell_size) ** 2
            done = (best_d2[active] < bound) | (reach[active] <= r)
            active = active[~done]
            r += 1
        if len(active):
            # Far from the data relative to the cell size: a scan is cheaper
            # than walking many empty shells, and gives the same answer.
            best_d2[active], best_i[active] = linear_scan_nn(q[active], self.points)
        return best_d2, best_i


_MAX_SHELL = 6
_SHELLS: dict[int, np.ndarray] = {}


def _shell_offsets(r: int) -> np.ndarray:
    if r not in _SHELLS:
        rng = np.arange(-r, r + 1)
        g = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
        _SHELLS[r] = g[np.abs(g).max(axis=1) == r].astype(np.int64)
    return _SHELLS[r]


def nearest_sq_dist(query, target) -> float:
    """Exact minimum squared Euclidean distance from one query to a target set."""
    pts = target.points if hasattr(target, "points") else target
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("empty target")
    d2, _ = GridIndex(pts).query(np.asarray(query, dtype=np.float64).reshape(1, 3))
    return float(d2[0])
