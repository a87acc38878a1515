"""Tests for the baseline two-sample statistics."""

import math

import numpy as np
import pytest

from src.core.errors import DataError
from src.core.results import Method
from src.services.baselines import (
    EnergyStatistic,
    KnnStatistic,
    MmdStatistic,
    energy_statistic,
    knn_statistic,
    make_statistic,
    mmd_bandwidth,
    mmd_statistic,
    permutation_wrap,
)
from src.services.permutation import permuted_labels


def _clusters(n_each=10):
    rng = np.random.default_rng(0)
    first = rng.normal(size=(n_each, 2))
    second = rng.normal(size=(n_each, 2)) + 100.0
    labels = np.array([1] * n_each + [0] * n_each, dtype=np.int8)
    return np.vstack([first, second]), labels


def test_knn_separated_clusters():
    """Every nearest neighbour is within group."""
    points, labels = _clusters()
    assert knn_statistic(points, labels, k=1) == 20


def test_knn_interleaved_line():
    """Alternating labels on a line give no within-group links."""
    points = np.array([[0.0], [1.0], [2.1], [3.3], [4.6], [6.0]])
    labels = np.array([1, 0, 1, 0, 1, 0], dtype=np.int8)
    assert knn_statistic(points, labels, k=1) == 0


def test_knn_rejects_large_k():
    """k must leave room for neighbours."""
    with pytest.raises(DataError):
        knn_statistic(np.zeros((3, 1)) + np.arange(3)[:, None], np.array([1, 0, 1]), k=3)


def test_energy_identical_sets():
    """Identical groups have zero energy distance."""
    base = np.random.default_rng(1).normal(size=(8, 3))
    points = np.vstack([base, base])
    labels = np.array([1] * 8 + [0] * 8, dtype=np.int8)
    assert abs(energy_statistic(points, labels)) <= 1e-12


def test_energy_two_points():
    """Hand value on {0} versus {1}."""
    assert energy_statistic(np.array([[0.0], [1.0]]), np.array([1, 0])) == pytest.approx(2.0)


def test_energy_rigid_motion_invariance():
    """Rotation and translation leave the statistic unchanged."""
    rng = np.random.default_rng(2)
    points = rng.normal(size=(20, 2))
    labels = np.array([1] * 9 + [0] * 11, dtype=np.int8)
    angle = 0.7
    rotation = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    moved = points @ rotation.T + np.array([3.0, -1.0])
    assert energy_statistic(moved, labels) == pytest.approx(energy_statistic(points, labels))


def test_mmd_bandwidth_formula():
    """h = s n^(-1/(d + 2))."""
    rng = np.random.default_rng(3)
    points = rng.normal(size=(100, 20))
    s = math.sqrt(points.var(axis=0, ddof=1).sum())
    assert mmd_bandwidth(points, 20) == pytest.approx(s * 100 ** (-1 / 22))


def test_mmd_identical_and_nonnegative():
    """Identical groups give zero; random groups stay nonnegative."""
    base = np.random.default_rng(4).normal(size=(6, 2))
    points = np.vstack([base, base])
    labels = np.array([1] * 6 + [0] * 6, dtype=np.int8)
    assert abs(mmd_statistic(points, labels, d=2)) <= 1e-12

    rng = np.random.default_rng(5)
    points = rng.normal(size=(30, 3))
    for _ in range(5):
        labels = rng.permutation(np.array([1] * 12 + [0] * 18, dtype=np.int8))
        assert mmd_statistic(points, labels, d=3) >= -1e-12


def test_mmd_zero_variance():
    """Constant data has no bandwidth."""
    with pytest.raises(DataError):
        mmd_statistic(np.ones((4, 2)), np.array([1, 1, 0, 0]), d=2)


@pytest.mark.parametrize(
    "statistic", [KnnStatistic(3), EnergyStatistic(), MmdStatistic(2)], ids=["knn", "energy", "mmd"]
)
def test_cached_path_matches_recompute(statistic):
    """Permuted statistics from the cached matrix equal fresh evaluations."""
    rng = np.random.default_rng(6)
    points = rng.normal(size=(16, 2))
    labels = np.array([1] * 7 + [0] * 9, dtype=np.int8)
    result = permutation_wrap(statistic, points, labels, replicates=20, seed=3)
    fresh = [statistic(points, p) for p in permuted_labels(labels, 20, 3)]
    assert result.permuted_stats.tolist() == fresh


@pytest.mark.parametrize("statistic", [KnnStatistic(2), EnergyStatistic(), MmdStatistic(2)])
def test_index_permutation_invariance(statistic):
    """Reordering samples together with labels leaves the statistic unchanged."""
    rng = np.random.default_rng(7)
    points = rng.normal(size=(14, 2))
    labels = np.array([1] * 6 + [0] * 8, dtype=np.int8)
    order = rng.permutation(14)
    assert statistic(points[order], labels[order]) == pytest.approx(statistic(points, labels))


def test_permutation_wrap_grid_and_method():
    """p-values lie on the permutation grid and carry the method."""
    points, labels = _clusters()
    result = permutation_wrap(EnergyStatistic(), points, labels, replicates=200, seed=1)
    assert result.method is Method.ENERGY
    assert result.p_value == pytest.approx(1 / 201)


def test_make_statistic_uses_d_plus_one():
    """k-NN baseline takes k = d + 1."""
    statistic = make_statistic(Method.KNN, 4)
    assert isinstance(statistic, KnnStatistic)
    assert statistic.k == 5
    with pytest.raises(DataError):
        make_statistic(Method.DW, 2)
