import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcartifact.aggregate import Accumulator, aggregate, denormalize_patch
from pcartifact.cloud import PointCloud
from pcartifact.sampling import SamplerConfig, sample_patches


def test_mean_of_contributions_and_pass_through():
    cloud = PointCloud(np.arange(12.0).reshape(4, 3))
    out = aggregate([(0, [1, 1, 1]), (0, [3, 3, 3]), (2, [9, 9, 9])], cloud)
    np.testing.assert_array_equal(out.points[0], [2, 2, 2])
    np.testing.assert_array_equal(out.points[1], cloud.points[1])
    np.testing.assert_array_equal(out.points[2], [9, 9, 9])
    np.testing.assert_array_equal(out.points[3], cloud.points[3])
    assert len(out) == len(cloud)


def test_batches_and_attributes_survive():
    attrs = np.zeros(3, dtype=[("red", "u1")])
    attrs["red"] = [1, 2, 3]
    cloud = PointCloud(np.zeros((3, 3)), attrs)
    out = aggregate([(np.array([0, 1]), np.ones((2, 3))), (np.array([1]), np.full((1, 3), 3.0))], cloud)
    np.testing.assert_array_equal(out.points, [[1, 1, 1], [2, 2, 2], [0, 0, 0]])
    np.testing.assert_array_equal(out.attributes["red"], [1, 2, 3])


def test_bad_contributions():
    acc = Accumulator(2)
    with pytest.raises(IndexError):
        acc.add([5], [[0, 0, 0]])
    with pytest.raises(ValueError):
        acc.add([0, 1], [[0, 0, 0]])
    with pytest.raises(ValueError):
        acc.result(PointCloud(np.zeros((3, 3))))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(1.0, 4.0))
def test_unchanged_patches_reproduce_cloud(seed, C):
    rng = np.random.default_rng(seed)
    cloud = PointCloud(rng.integers(0, 30, size=(400, 3)))
    acc = Accumulator(len(cloud))
    for p in sample_patches(cloud, SamplerConfig(k=60, C=C, min_points=1)):
        idx, pos = denormalize_patch(p)
        np.testing.assert_array_equal(pos, cloud.points[idx])
        acc.add(idx, pos)
    np.testing.assert_array_equal(acc.result(cloud).points, cloud.points)
