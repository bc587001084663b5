"""Geometry quality metrics in the style of MPEG's pc_error tool.

PSNR uses ``10 * log10(3 * peak**2 / mse)``; identical clouds give
``math.inf``, which CSV output spells ``inf``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields

import numpy as np

from .cloud import PointCloud, _atomic_write_bytes
from .neighbors import GridIndex, nearest_sq_dist

__all__ = [
    "METRICS_COLUMNS",
    "MetricsReport",
    "RateDistortionPoint",
    "bd_rate",
    "chamfer_distance",
    "d1_psnr",
    "evaluate",
    "hausdorff_psnr",
    "nearest_sq_dist",
    "psnr_from_mse",
    "read_metrics_csv",
    "write_metrics_csv",
]

DEFAULT_PEAK = 1023.0
METRICS_COLUMNS = ("name", "rate_bpp", "mse_ab", "mse_ba", "psnr_d1", "psnr_hausdorff", "chamfer")


@dataclass(frozen=True)
class RateDistortionPoint:
    rate: float
    psnr: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")


@dataclass(frozen=True)
class MetricsReport:
    name: str
    rate_bpp: float | None
    mse_ab: float
    mse_ba: float
    psnr_d1: float
    psnr_hausdorff: float
    chamfer: float


def _pts(cloud) -> np.ndarray:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("empty cloud")
    return pts


def psnr_from_mse(mse: float, peak: float = DEFAULT_PEAK) -> float:
    if peak <= 0:
        raise ValueError("peak must be positive")
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(3.0 * peak * peak / mse)


def _directional(test, ref):
    a, b = _pts(test), _pts(ref)
    return GridIndex(b).query(a)[0], GridIndex(a).query(b)[0]


def d1_psnr(test, ref, peak: float = DEFAULT_PEAK):
    """Point-to-point ``(mse_ab, mse_ba, psnr)`` with the symmetric max rule."""
    d_ab, d_ba = _directional(test, ref)
    mse_ab, mse_ba = float(d_ab.mean()), float(d_ba.mean())
    return mse_ab, mse_ba, psnr_from_mse(max(mse_ab, mse_ba), peak)


def hausdorff_psnr(test, ref, peak: float = DEFAULT_PEAK) -> float:
    d_ab, d_ba = _directional(test, ref)
    return psnr_from_mse(float(max(d_ab.max(), d_ba.max())), peak)


def chamfer_distance(test, ref) -> float:
    d_ab, d_ba = _directional(test, ref)
    return float(d_ab.sum() + d_ba.sum())


def evaluate(test, ref, peak: float = DEFAULT_PEAK, name: str = "", rate_bpp: float | None = None) -> MetricsReport:
    """All metrics from a single pair of nearest-neighbor passes."""
    d_ab, d_ba = _directional(test, ref)
    mse_ab, mse_ba = float(d_ab.mean()), float(d_ba.mean())
    return MetricsReport(
        name=name,
        rate_bpp=rate_bpp,
        mse_ab=mse_ab,
        mse_ba=mse_ba,
        psnr_d1=psnr_from_mse(max(mse_ab, mse_ba), peak),
        psnr_hausdorff=psnr_from_mse(float(max(d_ab.max(), d_ba.max())), peak),
        chamfer=float(d_ab.sum() + d_ba.sum()),
    )


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "inf" if v == math.inf else repr(v)
    return str(v)


def write_metrics_csv(reports, path, append: bool = False) -> None:
    """Write reports as CSV to a path or an open text stream.

    Files are replaced atomically; with ``append`` the existing rows are
    kept and the header is written only once.
    """
    buf = io.StringIO()
    if append and not hasattr(path, "write"):
        buf.write(_existing(path))
    w = csv.writer(buf, lineterminator="\n")
    if not buf.tell():
        w.writerow(METRICS_COLUMNS)
    for r in reports:
        w.writerow([_fmt(getattr(r, c)) for c in METRICS_COLUMNS])
    if hasattr(path, "write"):
        path.write(buf.getvalue())
    else:
        _atomic_write_bytes(path, [buf.getvalue().encode("utf-8")])


def _existing(path) -> str:
    try:
        with open(path, newline="") as f:
            text = f.read()
    except FileNotFoundError:
        return ""
    if text and not text.endswith("\n"):
        text += "\n"
    return text


def read_metrics_csv(path) -> list[MetricsReport]:
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            vals = {}
            for fld in fields(MetricsReport):
                raw = row[fld.name]
                if fld.name == "name":
                    vals[fld.name] = raw
                elif fld.name == "rate_bpp" and raw == "":
                    vals[fld.name] = None
                else:
                    vals[fld.name] = float(raw)
            out.append(MetricsReport(**vals))
    return out


def _curve(points):
    pts = [p if isinstance(p, RateDistortionPoint) else RateDistortionPoint(*p) for p in points]
    if len(pts) < 3:
        raise ValueError("BD-rate needs at least 3 rate-distortion points per curve")
    rate = np.array([p.rate for p in pts], dtype=np.float64)
    psnr = np.array([p.psnr for p in pts], dtype=np.float64)
    if not np.all(np.isfinite(psnr)):
        raise ValueError("BD-rate needs finite PSNR values")
    return np.log10(rate), psnr


def bd_rate(anchor, test) -> float:
    """Bjontegaard delta rate of ``test`` relative to ``anchor``, in percent.

    log10(rate) is fitted as a polynomial in PSNR (cubic, or quadratic for
    three points), each fit is integrated exactly over the shared PSNR range,
    and the mean log-rate gap is mapped back to a percentage. Negative means
    the test curve needs fewer bits for the same quality.
    """
    la, pa = _curve(anchor)
    lt, pt = _curve(test)
    lo = max(pa.min(), pt.min())
    hi = min(pa.max(), pt.max())
    if not hi > lo:
        raise ValueError("rate-distortion curves do not overlap in PSNR")
    deg_a = min(3, len(pa) - 1)
    deg_t = min(3, len(pt) - 1)
    fa = np.polynomial.Polynomial.fit(pa, la, deg_a).integ()
    ft = np.polynomial.Polynomial.fit(pt, lt, deg_t).integ()
    avg = ((ft(hi) - ft(lo)) - (fa(hi) - fa(lo))) / (hi - lo)
    return float((10.0 ** avg - 1.0) * 100.0)
