import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcartifact.cloud import PointCloud
from pcartifact.sampling import (
    PatchPair,
    SamplerConfig,
    derive_cube_side,
    extract_cube_patch,
    extract_patch_pair,
    farthest_point_sample,
    load_patch_pairs,
    patch_count,
    sample_patch_pairs,
    sample_patches,
    save_patch_pairs,
)


def _fps_reference(pts, N, seed):
    chosen = [seed]
    for _ in range(N - 1):
        best, best_d = None, -1.0
        for j in range(len(pts)):
            if j in chosen:
                continue
            d = min(float(np.sum((pts[j] - pts[c]) ** 2)) for c in chosen)
            if d > best_d:
                best, best_d = j, d
        chosen.append(best)
    return chosen


def test_patch_count_values():
    assert patch_count(1_000_000, 20, 10_000) == 2000
    assert patch_count(10, 1, 3) == 4
    assert patch_count(5, 1, 100) == 1
    assert patch_count(1000, 2.5, 1000) == 3
    with pytest.raises(ValueError):
        patch_count(0, 1, 1)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10**7), st.integers(1, 50), st.integers(1, 10**5))
def test_patch_count_is_ceiling(n, C, k):
    N = patch_count(n, C, k)
    assert N * k >= n * C
    assert N == 1 or (N - 1) * k < n * C


def test_fps_matches_scalar_reference():
    rng = np.random.default_rng(0)
    for trial in range(10):
        pts = rng.integers(0, 5, size=(30, 3)).astype(float)  # ties on purpose
        seed = int(rng.integers(0, 30))
        got = farthest_point_sample(pts, 12, seed)
        assert list(got) == _fps_reference(pts, 12, seed)


def test_fps_distinct_and_bounds():
    pts = np.zeros((5, 3))
    got = farthest_point_sample(pts, 5)
    assert sorted(got) == [0, 1, 2, 3, 4]
    with pytest.raises(ValueError):
        farthest_point_sample(pts, 6)
    with pytest.raises(ValueError):
        farthest_point_sample(pts, 2, seed_index=9)


def test_half_open_containment_example():
    p = extract_cube_patch(PointCloud([[0, 0, 0], [5, 5, 5]]), [0, 0, 0], 2.0)
    np.testing.assert_array_equal(p.positions, [[1, 1, 1]])


def test_cube_is_half_open_and_positions_local():
    cloud = PointCloud([[0, 0, 0], [1, 1, 1], [2, 0, 0], [-1, 0, 0], [1.999, 0, 0]])
    p = extract_cube_patch(cloud, [0, 0, 0], 4.0)
    assert list(p.source_indices) == [0, 1, 3, 4]
    np.testing.assert_array_equal(p.origin, [-2, -2, -2])
    np.testing.assert_array_equal(p.positions + p.origin, cloud.points[p.source_indices])
    assert np.all((p.positions >= 0) & (p.positions < 4))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 40))
def test_integer_clouds_round_trip_exactly(seed, side):
    rng = np.random.default_rng(seed)
    cloud = PointCloud(rng.integers(0, 64, size=(200, 3)))
    center = cloud.points[rng.integers(0, 200)]
    p = extract_cube_patch(cloud, center, float(side))
    assert len(p) >= 1
    np.testing.assert_array_equal(p.positions + p.origin, cloud.points[p.source_indices])


def test_derive_cube_side():
    cloud = PointCloud(np.random.default_rng(0).uniform(0, 100, size=(8000, 3)))
    side = derive_cube_side(cloud, 1000)
    # 8000 points in ~1e6 volume: density 8e-3, so 1000 points need ~50^3.
    assert side in (49.0, 50.0)
    a, b, c = np.meshgrid(np.arange(10), np.arange(10), np.arange(10), indexing="ij")
    grid = PointCloud(np.c_[a.ravel(), b.ravel(), c.ravel()])
    assert abs(derive_cube_side(grid, 125) - 5) <= 1
    flat = PointCloud(np.c_[np.random.default_rng(0).uniform(0, 80, size=(100, 2)), np.zeros(100)])
    assert derive_cube_side(flat, 10) == round(np.ptp(flat.points[:, :2], axis=0).max() / 8)
    assert derive_cube_side(PointCloud(np.zeros((3, 3))), 10) == 1.0
    assert derive_cube_side(PointCloud([[0, 0, 0], [3, 3, 3]]), 10**6) == 3.0


def test_sample_patches_cover_and_drop_small():
    rng = np.random.default_rng(1)
    cloud = PointCloud(rng.integers(0, 40, size=(2000, 3)))
    cfg = SamplerConfig(k=200, C=3, min_points=5)
    patches = sample_patches(cloud, cfg)
    assert 0 < len(patches) <= patch_count(2000, 3, 200)
    assert all(len(p) >= 5 for p in patches)


def test_pair_requires_shared_cube():
    cloud = PointCloud(np.zeros((3, 3)))
    a = extract_cube_patch(cloud, [0, 0, 0], 2.0)
    b = extract_cube_patch(cloud, [0, 0, 0], 3.0)
    with pytest.raises(ValueError):
        PatchPair(a, b)


def test_patch_pairs_save_load(tmp_path):
    rng = np.random.default_rng(2)
    clean = PointCloud(rng.integers(0, 30, size=(600, 3)))
    noisy = PointCloud(clean.points + rng.integers(-1, 2, size=(600, 3)))
    pairs = sample_patch_pairs(noisy, clean, SamplerConfig(k=100, C=2, cube_side=10))
    assert pairs
    save_patch_pairs(pairs, tmp_path / "set")
    back = load_patch_pairs(tmp_path / "set")
    assert len(back) == len(pairs)
    for a, b in zip(pairs, back):
        np.testing.assert_array_equal(a.noisy.positions, b.noisy.positions)
        np.testing.assert_array_equal(a.clean.positions, b.clean.positions)
        np.testing.assert_array_equal(a.noisy.source_indices, b.noisy.source_indices)
        np.testing.assert_array_equal(a.clean.center, b.clean.center)
        assert a.noisy.side == b.noisy.side
    pair = extract_patch_pair(noisy, clean, pairs[0].noisy.center, 10.0)
    np.testing.assert_array_equal(pair.noisy.positions, pairs[0].noisy.positions)


def test_malformed_manifest(tmp_path):
    (tmp_path / "manifest.txt").write_text("patch 0 1 2\n")
    with pytest.raises(ValueError, match="manifest.txt:1"):
        load_patch_pairs(tmp_path)
