"""Slow, obviously-correct reference implementations used by the tests."""

import itertools

import numpy as np

from pcartifact.sparse import Tape, Var


def dense_grid(coords, feats, size, stride=1):
    """Scatter sparse features into a dense ``(size, size, size, c)`` array
    indexed by ``coord // stride``, plus an occupancy mask."""
    grid = np.zeros((size, size, size, feats.shape[1]))
    occ = np.zeros((size, size, size), dtype=bool)
    for c, f in zip(np.asarray(coords) // stride, feats):
        grid[tuple(c)] = f
        occ[tuple(c)] = True
    return grid, occ


def dense_conv3(grid, weight, bias):
    """Zero-padded 3x3x3 convolution over every cell of a dense grid.

    ``weight[k]`` applies to offset ``itertools.product((-1, 0, 1), repeat=3)[k]``.
    """
    size = grid.shape[0]
    out = np.zeros(grid.shape[:3] + (weight.shape[2],))
    offsets = list(itertools.product((-1, 0, 1), repeat=3))
    for x, y, z in itertools.product(range(size), repeat=3):
        acc = bias.copy()
        for k, (dx, dy, dz) in enumerate(offsets):
            a, b, c = x + dx, y + dy, z + dz
            if 0 <= a < size and 0 <= b < size and 0 <= c < size:
                acc += grid[a, b, c] @ weight[k]
        out[x, y, z] = acc
    return out


def dense_down2(grid, weight, bias):
    """2x2x2 convolution with stride 2 over a dense grid of even size."""
    half = grid.shape[0] // 2
    out = np.zeros((half, half, half, weight.shape[2]))
    for x, y, z in itertools.product(range(half), repeat=3):
        acc = bias.copy()
        for ox, oy, oz in itertools.product((0, 1), repeat=3):
            acc += grid[2 * x + ox, 2 * y + oy, 2 * z + oz] @ weight[ox * 4 + oy * 2 + oz]
        out[x, y, z] = acc
    return out


def dense_up2(grid, weight, bias):
    """2x2x2 transposed convolution with stride 2 (each coarse cell writes its block)."""
    size = grid.shape[0] * 2
    out = np.zeros((size, size, size, weight.shape[2]))
    for x, y, z in itertools.product(range(size), repeat=3):
        ox, oy, oz = x % 2, y % 2, z % 2
        out[x, y, z] = grid[x // 2, y // 2, z // 2] @ weight[ox * 4 + oy * 2 + oz] + bias
    return out


def chamfer_bruteforce(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    total = 0.0
    for p in a:
        total += min(float(np.sum((p - q) ** 2)) for q in b)
    for q in b:
        total += min(float(np.sum((p - q) ** 2)) for p in a)
    return total


def one_hot_scalar(v):
    best = 0
    for i in range(1, len(v)):
        if v[i] > v[best]:
            best = i
    out = [0.0] * len(v)
    out[best] = 1.0
    return out


def numeric_grad(f, x, h=1e-5):
    """Central differences of scalar ``f`` with respect to every entry of ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gf[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    """Norm-wise relative error, robust to entries that are exactly zero."""
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def check_gradients(build, inputs, h=1e-5):
    """Compare tape gradients with central differences.

    ``build(vars, tape)`` maps a dict of :class:`Var` to a scalar Var. Returns
    the worst relative error over all inputs.
    """
    def value(name, arr):
        vs = {k: Var(arr if k == name else v) for k, v in inputs.items()}
        return float(build(vs, None).value)

    tape = Tape()
    vs = {k: Var(v) for k, v in inputs.items()}
    loss = build(vs, tape)
    analytic = tape.backward(loss, vs)
    worst = 0.0
    for name, arr in inputs.items():
        num = numeric_grad(lambda a: value(name, a), arr, h)
        worst = max(worst, rel_err(analytic[name], num))
    return worst


def weighted_sum(x, R, tape=None):
    """Scalar ``sum(x * R)``; a random ``R`` turns any op into a test loss."""
    out = Var(np.sum(x.value * R))
    if tape is not None:
        def back(t):
            g = t.grad(out)
            if g is not None:
                t.accumulate(x, float(g) * R)

        tape.record(back, x, out)
    return out
