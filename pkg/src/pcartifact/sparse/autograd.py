"""Minimal reverse-mode differentiation over numpy arrays.

Operations append a backward closure to a :class:`Tape` as they run.
Gradients live on the tape (keyed by variable identity), not on the
variables, so several tapes can share one set of parameters concurrently.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

__all__ = ["Tape", "Var", "gather_rows", "sum_all"]


class Var:
    """A value that gradients can flow to."""

    __slots__ = ("value", "__weakref__")

    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(shape={self.value.shape})"


class Tape:
    """Records backward closures in execution order; replayable once."""

    def __init__(self):
        self._ops: list[Callable[["Tape"], None]] = []
        self._grads: dict[int, np.ndarray] = {}
        self._spent = False
        # Keep every var the closures refer to alive so ids stay unique.
        self._keep: list[Var] = []

    def __len__(self):
        return len(self._ops)

    def record(self, backward: Callable[["Tape"], None], *vars_: Var) -> None:
        if self._spent:
            raise RuntimeError("tape already replayed; start a new tape")
        self._ops.append(backward)
        self._keep.extend(vars_)

    def grad(self, var: Var) -> np.ndarray | None:
        return self._grads.get(id(var))

    def accumulate(self, var: Var, g: np.ndarray) -> None:
        key = id(var)
        if key in self._grads:
            self._grads[key] = self._grads[key] + g
        else:
            self._grads[key] = np.array(g, dtype=np.float64, copy=True)

    def backward(self, loss: Var, params: Mapping[str, Var] | None = None) -> dict[str, np.ndarray]:
        """Propagate d(loss)/d(.) and return gradients for ``params``.

        Parameters the loss does not depend on get zero gradients.
        """
        if self._spent:
            raise RuntimeError("backward called twice on the same tape")
        if loss.value.size != 1:
            raise ValueError("loss must be a scalar")
        self._spent = True
        self._keep.append(loss)
        self._grads[id(loss)] = np.ones_like(loss.value)
        for op in reversed(self._ops):
            op(self)
        params = params or {}
        out = {}
        for name, v in params.items():
            g = self._grads.get(id(v))
            out[name] = np.zeros_like(v.value) if g is None else g
        return out


def gather_rows(x: Var, idx: np.ndarray, tape: Tape | None = None) -> Var:
    """``x[idx]`` along the first axis; backward scatter-adds."""
    idx = np.asarray(idx, dtype=np.int64)
    out = Var(x.value[idx])
    if tape is not None:
        n = x.value.shape[0]

        def back(t: Tape):
            g = t.grad(out)
            if g is None:
                return
            flat = g.reshape(len(idx), -1)
            gx = np.empty((n, flat.shape[1]))
            for c in range(flat.shape[1]):
                gx[:, c] = np.bincount(idx, weights=flat[:, c], minlength=n)
            t.accumulate(x, gx.reshape(x.value.shape))

        tape.record(back, x, out)
    return out


def sum_all(x: Var, tape: Tape | None = None) -> Var:
    out = Var(x.value.sum())
    if tape is not None:
        def back(t: Tape):
            g = t.grad(out)
            if g is not None:
                t.accumulate(x, np.full_like(x.value, float(g)))

        tape.record(back, x, out)
    return out
