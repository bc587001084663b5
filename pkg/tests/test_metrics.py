import io
import math

import numpy as np
import pytest
from scipy.integrate import trapezoid

from pcartifact.cloud import PointCloud
from pcartifact.metrics import (
    MetricsReport,
    RateDistortionPoint,
    bd_rate,
    chamfer_distance,
    d1_psnr,
    evaluate,
    hausdorff_psnr,
    psnr_from_mse,
    read_metrics_csv,
    write_metrics_csv,
)
from oracles import chamfer_bruteforce


def test_single_point_distance_one():
    mse_ab, mse_ba, psnr = d1_psnr(PointCloud([[1, 0, 0]]), PointCloud([[0, 0, 0]]), peak=1023)
    assert mse_ab == mse_ba == 1.0
    assert abs(psnr - 10 * math.log10(3 * 1023 ** 2)) < 1e-9


def test_identical_clouds_give_inf():
    c = PointCloud(np.random.default_rng(0).normal(size=(50, 3)))
    assert d1_psnr(c, c)[2] == math.inf
    assert hausdorff_psnr(c, c) == math.inf
    assert chamfer_distance(c, c) == 0.0


def test_symmetric_max_rule():
    a = PointCloud([[0, 0, 0]])
    b = PointCloud([[0, 0, 0], [2, 0, 0]])
    mse_ab, mse_ba, psnr = d1_psnr(a, b)
    assert (mse_ab, mse_ba) == (0.0, 2.0)
    assert psnr == pytest.approx(psnr_from_mse(2.0))
    assert hausdorff_psnr(a, b) == pytest.approx(psnr_from_mse(4.0))


def test_chamfer_distance_bruteforce():
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(40, 3)), rng.normal(size=(30, 3))
    assert chamfer_distance(a, b) == pytest.approx(chamfer_bruteforce(a, b), rel=1e-12)


def test_psnr_validation():
    with pytest.raises(ValueError):
        psnr_from_mse(1.0, peak=0)
    with pytest.raises(ValueError):
        d1_psnr(np.empty((0, 3)), PointCloud([[0, 0, 0]]))


def _curve(scale=1.0):
    return [RateDistortionPoint(r * scale, p) for r, p in [(0.1, 60.0), (0.2, 63.0), (0.4, 66.5), (0.8, 69.0)]]


def test_bd_rate_half_and_same():
    assert bd_rate(_curve(), _curve(0.5)) == pytest.approx(-50.0, abs=1e-9)
    assert bd_rate(_curve(), _curve()) == pytest.approx(0.0, abs=1e-9)
    assert bd_rate(_curve(), _curve(2.0)) == pytest.approx(100.0, abs=1e-9)


def test_bd_rate_three_points_and_errors():
    three = _curve()[:3]
    assert bd_rate(three, [RateDistortionPoint(p.rate * 0.5, p.psnr) for p in three]) == pytest.approx(-50.0)
    with pytest.raises(ValueError):
        bd_rate(_curve()[:2], _curve()[:2])
    far = [RateDistortionPoint(p.rate, p.psnr + 100) for p in _curve()]
    with pytest.raises(ValueError):
        bd_rate(_curve(), far)
    with pytest.raises(ValueError):
        RateDistortionPoint(0.0, 60.0)


def test_bd_rate_against_trapezoid_oracle():
    # Smooth curves where the cubic fit is exact: log10(rate) cubic in PSNR.
    psnr = np.array([58.0, 61.0, 64.0, 67.0, 70.0])
    la = 0.002 * (psnr - 60) ** 3 - 0.01 * (psnr - 60) ** 2 + 0.1 * psnr - 7
    lt = la - 0.05 + 0.001 * (psnr - 64) ** 2
    anchor = [RateDistortionPoint(10 ** a, p) for a, p in zip(la, psnr)]
    test = [RateDistortionPoint(10 ** t, p) for t, p in zip(lt, psnr)]
    grid = np.linspace(58, 70, 200001)
    gap = -0.05 + 0.001 * (grid - 64) ** 2
    expect = (10 ** (trapezoid(gap, grid) / 12.0) - 1) * 100
    assert bd_rate(anchor, test) == pytest.approx(expect, abs=1e-6)


def test_metrics_csv_round_trip_and_append(tmp_path):
    a = evaluate(PointCloud([[0, 0, 0], [1, 1, 1]]), PointCloud([[0, 0, 1]]), name="a", rate_bpp=0.25)
    b = evaluate(PointCloud([[0, 0, 0]]), PointCloud([[0, 0, 0]]), name="same")
    path = tmp_path / "m.csv"
    write_metrics_csv([a], path)
    write_metrics_csv([b], path, append=True)
    text = path.read_text()
    assert text.count("name,rate_bpp") == 1
    assert "inf" in text
    back = read_metrics_csv(path)
    assert back == [a, b]
    buf = io.StringIO()
    write_metrics_csv([a], buf)
    assert buf.getvalue().splitlines()[0] == ",".join(MetricsReport.__dataclass_fields__)
