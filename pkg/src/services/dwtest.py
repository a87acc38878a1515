"""Delaunay weighted two-sample test."""

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

import numpy as np
from numpy.typing import NDArray
from scipy.stats import norm

from src.core.config import Config
from src.core.errors import DataError, ZeroVarianceError
from src.core.results import Method, TestResult
from src.services.dataset import LabeledSample, jitter
from src.services.delaunay import WeightMatrix, weight_matrix
from src.services.manifold import EmbeddedCloud, embed
from src.services.permutation import check_labels, group_sums, permutation_test

logger = logging.getLogger(__name__)

ZERO_VARIANCE = 1e-14


@dataclass(frozen=True)
class NullMoments:
    """Conditional null mean and variance of T_DW / n given the pooled cloud."""

    mean: float
    variance: float
    v0: float
    v1: float
    v2: float


@dataclass(frozen=True)
class DegreeDiagnostic:
    """Neighbourhood sizes |N_i| of the weight graph (i counted in its own)."""

    sizes: NDArray[np.int64]
    max: int
    mean: float
    ratio: float

    def as_parameters(self) -> Dict[str, Any]:
        return {"degree_max": self.max, "degree_mean": self.mean, "degree_ratio": self.ratio}


@dataclass(frozen=True)
class DwConfig:
    """Options for one run of the Delaunay weighted test."""

    d: Optional[int] = None
    k: Optional[int] = None
    eta: float = Config.DEFAULT_ETA
    permutations: int = Config.DEFAULT_PERMUTATIONS
    seed: int = Config.DEFAULT_SEED
    jitter: bool = False
    threads: Optional[int] = None


def statistic(weights: WeightMatrix, labels: NDArray[np.int8]) -> float:
    """Total weight between points sharing a label."""
    labels = check_labels(labels, weights.n)
    sxx, syy, _ = group_sums(weights.matrix, labels)
    return sxx + syy


def permutation_test_dw(
    weights: WeightMatrix,
    labels: NDArray[np.int8],
    replicates: int = Config.DEFAULT_PERMUTATIONS,
    seed: int = Config.DEFAULT_SEED,
    parameters: Optional[Dict[str, Any]] = None,
    threads: Optional[int] = None,
) -> TestResult:
    """Permute labels with the weight matrix held fixed; reject for large T_DW."""
    labels = check_labels(labels, weights.n)
    matrix = weights.matrix

    def evaluate(permuted: NDArray[np.int8]) -> float:
        sxx, syy, _ = group_sums(matrix, permuted)
        return sxx + syy

    return permutation_test(evaluate, labels, replicates, seed, Method.DW, parameters, threads)


def _symmetric_dense(weights: WeightMatrix) -> NDArray[np.float64]:
    dense = weights.dense()
    return dense + dense.T


def null_moments(weights: WeightMatrix, n1: int, n0: int) -> NullMoments:
    """
    Exact permutation mean and variance of T_DW / n.

    Pair, triple and disjoint-pair averages of the symmetrized weights come
    from row sums, so the cost is quadratic in n.
    """
    n = n1 + n0
    if n != weights.n:
        raise DataError(f"n1 + n0 = {n} but the weight matrix has {weights.n} rows")
    if n < 4 or n1 < 1 or n0 < 1:
        raise DataError("null moments need n >= 4 and both groups nonempty")

    sym = _symmetric_dense(weights)
    s1 = sym.sum() / 2.0
    s2 = (sym ** 2).sum() / 2.0
    rows = sym.sum(axis=1)
    triples = ((rows ** 2).sum() - 2.0 * s2) / 2.0
    disjoint = (s1 ** 2 - s2) / 2.0 - triples

    v2 = s2 / math.comb(n, 2)
    v1 = triples / math.comb(n, 3)
    v0 = disjoint / math.comb(n, 4)
    mean = (n1 * (n1 - 1) + n0 * (n0 - 1)) / (n * (n - 1))
    variance = (
        n1 * (n1 - 1) * n0 * (n0 - 1) / (3 * n ** 2) * v0
        + n1 * n0 * (n - 2) / (3 * n ** 2) * v1
        + n1 * n0 / n ** 2 * v2
        - 4 * n1 ** 2 * n0 ** 2 / ((n - 1) ** 2 * n ** 2)
    )
    return NullMoments(mean=mean, variance=max(variance, 0.0), v0=v0, v1=v1, v2=v2)


def z_test(weights: WeightMatrix, labels: NDArray[np.int8]) -> TestResult:
    """Upper-tail normal p-value of the standardized statistic."""
    labels = check_labels(labels, weights.n)
    n1 = int(labels.sum())
    moments = null_moments(weights, n1, weights.n - n1)
    if moments.variance <= ZERO_VARIANCE:
        raise ZeroVarianceError("null variance of the statistic is zero")
    scaled = statistic(weights, labels) / weights.n
    z = (scaled - moments.mean) / math.sqrt(moments.variance)
    p_value = max(float(norm.sf(z)), np.finfo(np.float64).tiny)
    return TestResult(
        method=Method.DW_Z,
        statistic=scaled * weights.n,
        p_value=p_value,
        replicates=0,
        parameters={"z": z, "null_mean": moments.mean, "null_variance": moments.variance},
    )


def degree_diagnostic(weights: WeightMatrix) -> DegreeDiagnostic:
    """Sizes of the symmetrized weight neighbourhoods plus sum |N_i|^4 / n^(9/4)."""
    support = weights.matrix.copy()
    support.data = np.ones_like(support.data)
    linked = ((support + support.T) > 0).astype(np.int64)
    sizes = np.asarray(linked.sum(axis=1)).ravel() + 1
    n = weights.n
    return DegreeDiagnostic(
        sizes=sizes,
        max=int(sizes.max()),
        mean=float(sizes.mean()),
        ratio=float((sizes.astype(np.float64) ** 4).sum() / n ** 2.25),
    )


def prepare_weights(
    sample: LabeledSample, config: DwConfig
) -> Tuple[EmbeddedCloud, WeightMatrix]:
    """Embed the pooled sample and compute its Delaunay weights."""
    if sample.n < 4:
        raise DataError("the Delaunay test needs at least 4 observations")
    points = sample.points
    if config.jitter:
        points = jitter(points, config.seed, Config.JITTER_RELATIVE)
    cloud = embed(points, d=config.d, k=config.k)
    if sample.n < cloud.d + 2:
        raise DataError(f"sample too small for dimension {cloud.d}")
    return cloud, weight_matrix(cloud, eta=config.eta)


def _parameters(cloud: EmbeddedCloud, weights: WeightMatrix, config: DwConfig) -> Dict[str, Any]:
    params: Dict[str, Any] = {
        "d_used": cloud.d,
        "d_estimated": cloud.d_estimated,
        "eta": float(config.eta),
        "k": cloud.k,
        "seed": config.seed,
    }
    params.update(degree_diagnostic(weights).as_parameters())
    return params


def run_dw_test(sample: LabeledSample, config: Optional[DwConfig] = None) -> TestResult:
    """Embed, weight and permute: the full Delaunay weighted test."""
    config = config or DwConfig()
    cloud, weights = prepare_weights(sample, config)
    result = permutation_test_dw(
        weights,
        sample.labels,
        config.permutations,
        config.seed,
        _parameters(cloud, weights, config),
        config.threads,
    )
    logger.info("dw test: T=%.6g p=%.4f d=%d", result.statistic, result.p_value, cloud.d)
    return result


def run_dw_z_test(sample: LabeledSample, config: Optional[DwConfig] = None) -> TestResult:
    """Same pipeline, normal approximation instead of permutations."""
    config = config or DwConfig()
    cloud, weights = prepare_weights(sample, config)
    result = z_test(weights, sample.labels)
    result.parameters.update(_parameters(cloud, weights, config))
    return result
