"""Reference two-sample tests: k-NN counts, energy distance and Gaussian MMD."""

import logging
import math
from abc import ABC, abstractmethod
from typing import Any, Dict, Optional

import numpy as np
from numpy.typing import NDArray
from scipy import sparse
from scipy.spatial.distance import pdist, squareform

from src.core.config import Config
from src.core.errors import DataError
from src.core.results import Method, TestResult
from src.services.dataset import LabeledSample
from src.services.permutation import (
    LabelStatistic,
    PairMatrix,
    check_labels,
    group_sums,
    permutation_test,
)

logger = logging.getLogger(__name__)


class PairStatistic(ABC):
    """Statistic built from block sums of one cached pairwise matrix."""

    method: Method

    @abstractmethod
    def pair_matrix(self, points: NDArray[np.float64]) -> PairMatrix:
        """Pairwise quantities computed once per pooled sample."""

    @abstractmethod
    def combine(self, sxx: float, syy: float, sxy: float, n1: int, n0: int) -> float:
        """Statistic from the block sums."""

    def parameters(self) -> Dict[str, Any]:
        return {}

    def prepare(self, points: NDArray[np.float64]) -> LabelStatistic:
        """Cache the pairwise matrix and return labels -> statistic."""
        matrix = self.pair_matrix(np.asarray(points, dtype=np.float64))
        n = matrix.shape[0]

        def evaluate(labels: NDArray[np.int8]) -> float:
            n1 = int(labels.sum())
            sxx, syy, sxy = group_sums(matrix, labels)
            return self.combine(sxx, syy, sxy, n1, n - n1)

        return evaluate

    def __call__(self, points: NDArray[np.float64], labels: NDArray[np.int8]) -> float:
        points = np.asarray(points, dtype=np.float64)
        return self.prepare(points)(check_labels(labels, points.shape[0]))


class KnnStatistic(PairStatistic):
    """Count of k-nearest-neighbour links that stay within a group."""

    method = Method.KNN

    def __init__(self, k: int):
        if k < 1:
            raise DataError("k must be at least 1")
        self.k = k

    def parameters(self) -> Dict[str, Any]:
        return {"k": self.k}

    def pair_matrix(self, points: NDArray[np.float64]) -> PairMatrix:
        n = points.shape[0]
        if self.k > n - 1:
            raise DataError(f"k={self.k} needs at least {self.k + 1} points")
        dist = squareform(pdist(points))
        np.fill_diagonal(dist, np.inf)
        # ties go to the smaller index
        neighbors = np.argsort(dist, axis=1, kind="stable")[:, : self.k]
        rows = np.repeat(np.arange(n), self.k)
        return sparse.csr_matrix(
            (np.ones(n * self.k), (rows, neighbors.ravel())), shape=(n, n)
        )

    def combine(self, sxx: float, syy: float, sxy: float, n1: int, n0: int) -> float:
        return sxx + syy


class EnergyStatistic(PairStatistic):
    """Energy distance between the two empirical distributions."""

    method = Method.ENERGY

    def pair_matrix(self, points: NDArray[np.float64]) -> PairMatrix:
        return squareform(pdist(points))

    def combine(self, sxx: float, syy: float, sxy: float, n1: int, n0: int) -> float:
        return 2.0 * sxy / (n1 * n0) - sxx / n1 ** 2 - syy / n0 ** 2


def mmd_bandwidth(points: NDArray[np.float64], d: int, beta: float = 1.0) -> float:
    """h = s * n^(-1/(d + 2 beta)) with s^2 the summed coordinate variances."""
    if d < 1:
        raise DataError("dimension must be at least 1")
    points = np.asarray(points, dtype=np.float64)
    s2 = float(points.var(axis=0, ddof=1).sum())
    if s2 <= 0.0:
        raise DataError("points have zero total variance")
    return math.sqrt(s2) * points.shape[0] ** (-1.0 / (d + 2.0 * beta))


class MmdStatistic(PairStatistic):
    """Biased squared MMD with a Gaussian kernel."""

    method = Method.MMD

    def __init__(self, d: int, beta: float = 1.0):
        if d < 1:
            raise DataError("dimension must be at least 1")
        self.d = d
        self.beta = beta
        self.bandwidth: Optional[float] = None

    def parameters(self) -> Dict[str, Any]:
        return {"d_used": self.d, "beta": self.beta, "bandwidth": self.bandwidth}

    def pair_matrix(self, points: NDArray[np.float64]) -> PairMatrix:
        self.bandwidth = mmd_bandwidth(points, self.d, self.beta)
        sq = squareform(pdist(points, "sqeuclidean"))
        return np.exp(-sq / (2.0 * self.bandwidth ** 2))

    def combine(self, sxx: float, syy: float, sxy: float, n1: int, n0: int) -> float:
        return sxx / n1 ** 2 + syy / n0 ** 2 - 2.0 * sxy / (n1 * n0)


def knn_statistic(points: NDArray[np.float64], labels: NDArray[np.int8], k: int) -> float:
    return KnnStatistic(k)(points, labels)


def energy_statistic(points: NDArray[np.float64], labels: NDArray[np.int8]) -> float:
    return EnergyStatistic()(points, labels)


def mmd_statistic(
    points: NDArray[np.float64], labels: NDArray[np.int8], d: int, beta: float = 1.0
) -> float:
    return MmdStatistic(d, beta)(points, labels)


def permutation_wrap(
    statistic: PairStatistic,
    points: NDArray[np.float64],
    labels: NDArray[np.int8],
    replicates: int = Config.DEFAULT_PERMUTATIONS,
    seed: int = Config.DEFAULT_SEED,
    threads: Optional[int] = None,
) -> TestResult:
    """Permutation test of any pair statistic with its matrix computed once."""
    points = np.asarray(points, dtype=np.float64)
    labels = check_labels(labels, points.shape[0])
    evaluate = statistic.prepare(points)
    params = dict(statistic.parameters())
    params["seed"] = seed
    return permutation_test(
        evaluate, labels, replicates, seed, statistic.method, params, threads
    )


def make_statistic(method: Method, d: int, beta: float = 1.0) -> PairStatistic:
    """Baseline statistic for `method`; k = d + 1 for the k-NN count."""
    if method is Method.KNN:
        return KnnStatistic(d + 1)
    if method is Method.ENERGY:
        return EnergyStatistic()
    if method is Method.MMD:
        return MmdStatistic(d, beta)
    raise DataError(f"'{method.value}' is not a baseline method")


def run_baseline(
    method: Method,
    sample: LabeledSample,
    d: int,
    replicates: int = Config.DEFAULT_PERMUTATIONS,
    seed: int = Config.DEFAULT_SEED,
    threads: Optional[int] = None,
) -> TestResult:
    """Baseline test on the ambient coordinates of a labeled sample."""
    result = permutation_wrap(
        make_statistic(method, d), sample.points, sample.labels, replicates, seed, threads
    )
    logger.info("%s test: T=%.6g p=%.4f", method.value, result.statistic, result.p_value)
    return result
