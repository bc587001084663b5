"""Sparse 3D U-Net that predicts per-point quantization noise.

The network maps a voxelized patch to four channels per point: a projection
vector ``V`` (3) and a scalar weight ``w`` (1). The noise estimate is formed
according to ``head_mode``:

* ``one_hot``: ``one_hot(V) * w``, noise along a single axis
* ``soft``: ``V * w``
* ``direct``: ``V`` (``w`` unused)

and subtracted from the patch positions. Training minimizes the Chamfer
distance between the corrected patch and the ground-truth patch.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .neighbors import GridIndex, linear_scan_nn
from .sampling import Patch, PatchPair
from .sparse import (
    AdamState,
    ConvKernel,
    Tape,
    Var,
    adam_step,
    build_sparse_tensor,
    concat_features,
    gather_rows,
    instance_norm,
    read_checkpoint,
    relu,
    strided_conv,
    submanifold_conv,
    transposed_conv,
    write_checkpoint,
)

log = logging.getLogger(__name__)

__all__ = [
    "Checkpoint",
    "HEAD_MODES",
    "NetConfig",
    "TrainingDiverged",
    "UNet",
    "build_unet",
    "chamfer_loss",
    "chamfer_loss_node",
    "clean_patch",
    "infer",
    "one_hot",
    "quantization_noise",
    "train",
]

HEAD_MODES = ("one_hot", "soft", "direct")
ACTIVATIONS = ("relu", "identity")
NORMALIZATIONS = ("none", "instance")
LR_SCHEDULES = ("constant", "cosine")
_ARCH_KEYS = ("depth", "base_channels", "convs_per_level", "activation", "normalization")


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class NetConfig:
    depth: int = 3
    base_channels: int = 16
    convs_per_level: int = 2
    head_mode: str = "one_hot"
    activation: str = "relu"
    normalization: str = "none"
    head_init_scale: float = 0.1
    lr: float = 1e-3
    lr_schedule: str = "constant"
    steps: int = 1000
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.convs_per_level < 1:
            raise ValueError("convs_per_level must be >= 1")
        if self.head_mode not in HEAD_MODES:
            raise ValueError(f"head_mode must be one of {HEAD_MODES}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ValueError(f"lr_schedule must be one of {LR_SCHEDULES}")
        if self.steps < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("need steps >= 0, batch_size >= 1, lr > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def same_architecture(self, other: "NetConfig") -> bool:
        return all(getattr(self, k) == getattr(other, k) for k in _ARCH_KEYS)


def layer_shapes(cfg: NetConfig) -> list[tuple[str, int, int, int]]:
    """``(name, taps, in_channels, out_channels)`` for every conv, in forward order."""
    ch = [cfg.base_channels * 2 ** d for d in range(cfg.depth + 1)]
    layers = []
    for d in range(cfg.depth):
        for i in range(cfg.convs_per_level):
            cin = (1 if d == 0 else ch[d]) if i == 0 else ch[d]
            layers.append((f"enc{d}.conv{i}", 27, cin, ch[d]))
        layers.append((f"down{d}", 8, ch[d], ch[d + 1]))
    for i in range(cfg.convs_per_level):
        layers.append((f"bottom.conv{i}", 27, ch[cfg.depth], ch[cfg.depth]))
    for d in reversed(range(cfg.depth)):
        layers.append((f"up{d}", 8, ch[d + 1], ch[d]))
        for i in range(cfg.convs_per_level):
            layers.append((f"dec{d}.conv{i}", 27, 2 * ch[d] if i == 0 else ch[d], ch[d]))
    layers.append(("head", 27, ch[0], 4))
    return layers


def learning_rate(cfg: NetConfig, step: int) -> float:
    """Step size for 0-based ``step``; ``cosine`` decays from ``lr`` towards 0."""
    if cfg.lr_schedule == "cosine":
        return cfg.lr * 0.5 * (1.0 + math.cos(math.pi * step / cfg.steps))
    return cfg.lr


def init_params(cfg: NetConfig) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(cfg.seed)
    params = {}
    for name, taps, cin, cout in layer_shapes(cfg):
        gain = cfg.head_init_scale if name == "head" else 1.0
        k = ConvKernel.kaiming(taps, cin, cout, rng, gain=gain)
        params[f"{name}.weight"] = k.weight.value
        params[f"{name}.bias"] = k.bias.value
    return params


class UNet:
    """Encoder/decoder over sparse voxels with skip concatenations."""

    def __init__(self, cfg: NetConfig, params: dict[str, np.ndarray] | None = None):
        self.cfg = cfg
        if params is None:
            params = init_params(cfg)
        else:
            want = {}
            for name, taps, cin, cout in layer_shapes(cfg):
                want[f"{name}.weight"] = (taps, cin, cout)
                want[f"{name}.bias"] = (cout,)
            got = {k: tuple(v.shape) for k, v in params.items()}
            if got != want:
                raise ValueError("parameters do not match the configured architecture")
            params = {k: np.array(params[k], dtype=np.float64) for k in want}
        self.params = params

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def forward(self, positions, tape: Tape | None = None, pvars: dict[str, Var] | None = None):
        """Per-point ``(V, w)`` stacked as a ``(n, 4)`` :class:`Var`, plus the
        parameter variables used (for :meth:`Tape.backward`).

        ``pvars`` substitutes caller-owned variables for the stored parameters.
        """
        cfg = self.cfg
        pv = pvars if pvars is not None else {name: Var(arr) for name, arr in self.params.items()}

        def kernel(name):
            return ConvKernel(pv[f"{name}.weight"], pv[f"{name}.bias"])

        def act(x):
            if cfg.normalization == "instance":
                x = instance_norm(x, tape)
            return relu(x, tape) if cfg.activation == "relu" else x

        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        x, merge = build_sparse_tensor(positions, np.ones((len(positions), 1)))
        skips = []
        for d in range(cfg.depth):
            for i in range(cfg.convs_per_level):
                x = act(submanifold_conv(x, kernel(f"enc{d}.conv{i}"), tape))
            skips.append(x)
            x = act(strided_conv(x, kernel(f"down{d}"), tape))
        for i in range(cfg.convs_per_level):
            x = act(submanifold_conv(x, kernel(f"bottom.conv{i}"), tape))
        for d in reversed(range(cfg.depth)):
            up = act(transposed_conv(x, kernel(f"up{d}"), skips[d], tape))
            x = concat_features(skips[d], up, tape)
            for i in range(cfg.convs_per_level):
                x = act(submanifold_conv(x, kernel(f"dec{d}.conv{i}"), tape))
        head = submanifold_conv(x, kernel("head"), tape)
        return gather_rows(head.features, merge, tape), pv

    def noise(self, positions, tape: Tape | None = None, pvars: dict[str, Var] | None = None):
        out, pv = self.forward(positions, tape, pvars)
        return quantization_noise(out, self.cfg.head_mode, tape), pv

    def clean(self, patch: Patch) -> Patch:
        if len(patch) == 0:
            return patch
        delta, _ = self.noise(patch.positions)
        return clean_patch(patch, delta.value)


def build_unet(cfg: NetConfig) -> UNet:
    return UNet(cfg)


def one_hot(V) -> np.ndarray:
    """Indicator of the largest component (lowest axis on ties), row-wise."""
    V = np.asarray(V, dtype=np.float64)
    if np.isnan(V).any():
        raise ValueError("one_hot of NaN")
    flat = V.reshape(-1, V.shape[-1])
    Z = np.zeros_like(flat)
    Z[np.arange(len(flat)), flat.argmax(axis=1)] = 1.0
    return Z.reshape(V.shape)


def quantization_noise(out, mode: str, tape: Tape | None = None):
    """Noise per point from the network output ``[V | w]``.

    Accepts an ``(n, 4)`` array (returns an array) or a :class:`Var`
    (returns a :class:`Var`). The argmax in ``one_hot`` mode is crossed with
    a straight-through gradient: d(noise)/dV is taken as ``w`` per axis.
    """
    if mode not in HEAD_MODES:
        raise ValueError(f"unknown head mode {mode!r}")
    if not isinstance(out, Var):
        return quantization_noise(Var(np.asarray(out, dtype=np.float64).reshape(-1, 4)), mode).value
    o = out.value
    V, w = o[:, :3], o[:, 3:4]
    if mode == "one_hot":
        Z = one_hot(V)
        delta = Var(Z * w)
    elif mode == "soft":
        delta = Var(V * w)
    else:
        delta = Var(V.copy())
    if tape is not None:
        def back(t: Tape):
            g = t.grad(delta)
            if g is None:
                return
            go = np.zeros_like(o)
            if mode == "direct":
                go[:, :3] = g
            else:
                sel = Z if mode == "one_hot" else V
                go[:, :3] = g * w
                go[:, 3] = (g * sel).sum(axis=1)
            t.accumulate(out, go)

        tape.record(back, out, delta)
    return delta


def clean_patch(noisy: Patch, noise) -> Patch:
    """Subtract per-point noise; points may leave the cube (that is fine)."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != noisy.positions.shape:
        raise ValueError(f"noise shape {noise.shape} does not match patch {noisy.positions.shape}")
    return noisy.with_positions(noisy.positions - noise)


def _nn(a, b):
    if len(a) * len(b) <= 1 << 16:
        return linear_scan_nn(a, b)
    return GridIndex(b).query(a)


def _chamfer_parts(out, target):
    if len(out) == 0 or len(target) == 0:
        raise ValueError("Chamfer distance of an empty set")
    d_ab, i_ab = _nn(out, target)
    d_ba, i_ba = _nn(target, out)
    return d_ab, i_ab, d_ba, i_ba


def chamfer_loss(P_O, P_G) -> float:
    """Sum of squared nearest-neighbor distances, both directions."""
    a = np.asarray(P_O, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(P_G, dtype=np.float64).reshape(-1, 3)
    d_ab, _, d_ba, _ = _chamfer_parts(a, b)
    return float(d_ab.sum() + d_ba.sum())


def chamfer_loss_node(P_O: Var, P_G, tape: Tape | None = None) -> Var:
    """Differentiable Chamfer loss w.r.t. ``P_O`` via the selected neighbors."""
    a = P_O.value
    b = np.asarray(P_G, dtype=np.float64).reshape(-1, 3)
    d_ab, i_ab, d_ba, i_ba = _chamfer_parts(a, b)
    loss = Var(d_ab.sum() + d_ba.sum())
    if tape is not None:
        def back(t: Tape):
            g = t.grad(loss)
            if g is None:
                return
            grad = 2.0 * (a - b[i_ab])
            pull = 2.0 * (a[i_ba] - b)
            for c in range(3):
                grad[:, c] += np.bincount(i_ba, weights=pull[:, c], minlength=len(a))
            t.accumulate(P_O, float(g) * grad)

        tape.record(back, P_O, loss)
    return loss


def _subtract(positions: np.ndarray, delta: Var, tape: Tape | None) -> Var:
    out = Var(positions - delta.value)
    if tape is not None:
        def back(t: Tape):
            g = t.grad(out)
            if g is not None:
                t.accumulate(delta, -g)

        tape.record(back, delta, out)
    return out


def patch_loss(net: UNet, pair: PatchPair, tape: Tape | None = None):
    """Chamfer loss of one cleaned noisy patch against its clean partner."""
    delta, pv = net.noise(pair.noisy.positions, tape)
    if not np.isfinite(delta.value).all():
        raise TrainingDiverged("network produced non-finite noise estimates")
    cleaned = _subtract(pair.noisy.positions, delta, tape)
    return chamfer_loss_node(cleaned, pair.clean.positions, tape), pv


def _loss_and_grads(net: UNet, pair: PatchPair):
    tape = Tape()
    loss, pv = patch_loss(net, pair, tape)
    return float(loss.value), tape.backward(loss, pv)


@dataclass
class Checkpoint:
    config: NetConfig
    params: dict[str, np.ndarray]
    losses: list[float] = field(default_factory=list, compare=False, repr=False)

    def save(self, path) -> None:
        write_checkpoint(path, self.config.to_dict(), self.params)

    @classmethod
    def load(cls, path) -> "Checkpoint":
        config, params = read_checkpoint(path)
        return cls(NetConfig.from_dict(config), params)

    def network(self) -> UNet:
        return UNet(self.config, self.params)


def train(pairs: list[PatchPair], cfg: NetConfig, checkpoint_path=None, log_path=None,
          workers: int = 1, init: Checkpoint | None = None) -> Checkpoint:
    """Fit the network to ``pairs`` with Adam for ``cfg.steps`` steps.

    Each step draws ``cfg.batch_size`` pairs from a seeded shuffle; per-pair
    gradients are summed in pair order, so ``workers`` never changes the
    result. Returns the final checkpoint and optionally writes it and a
    ``step,loss`` CSV log.
    """
    if not pairs:
        raise ValueError("no training pairs")
    net = UNet(cfg, init.params if init is not None else None)
    state = AdamState()
    rng = np.random.default_rng(cfg.seed + 1)
    order = rng.permutation(len(pairs))
    cursor = 0
    losses = []
    pool = ThreadPoolExecutor(workers) if workers > 1 and cfg.batch_size > 1 else None
    try:
        for step in range(cfg.steps):
            batch = []
            for _ in range(cfg.batch_size):
                if cursor == len(order):
                    order = rng.permutation(len(pairs))
                    cursor = 0
                batch.append(pairs[order[cursor]])
                cursor += 1
            if pool is not None:
                results = list(pool.map(lambda p: _loss_and_grads(net, p), batch))
            else:
                results = [_loss_and_grads(net, p) for p in batch]
            loss = sum(r[0] for r in results)
            grads = {k: sum(r[1][k] for r in results) for k in net.params}
            if not math.isfinite(loss) or not all(np.isfinite(g).all() for g in grads.values()):
                raise TrainingDiverged(f"non-finite loss or gradient at step {step} (loss={loss})")
            adam_step(net.params, grads, state, lr=learning_rate(cfg, step))
            losses.append(loss)
            if step % 100 == 0 or step == cfg.steps - 1:
                log.info("step %d loss %.6g", step, loss)
    finally:
        if pool is not None:
            pool.shutdown()

    ckpt = Checkpoint(cfg, net.params, losses)
    if checkpoint_path is not None:
        ckpt.save(checkpoint_path)
    if log_path is not None:
        with open(log_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "loss"])
            for i, v in enumerate(losses):
                w.writerow([i, repr(v)])
    return ckpt


def infer(noisy_patch: Patch, checkpoint: Checkpoint | UNet, cfg: NetConfig | None = None) -> Patch:
    """Clean one patch with a trained network."""
    net = checkpoint if isinstance(checkpoint, UNet) else checkpoint.network()
    if cfg is not None and not (cfg.same_architecture(net.cfg) and cfg.head_mode == net.cfg.head_mode):
        raise ValueError("config does not match the checkpoint's architecture")
    return net.clean(noisy_patch)


def load_training_log(path) -> list[float]:
    with open(path, newline="") as f:
        return [float(row["loss"]) for row in csv.DictReader(f)]
