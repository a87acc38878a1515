"""Label-permutation engine shared by the Delaunay test and the baselines.

Every statistic here is a quadratic form of the group indicators over a
fixed pairwise matrix, so one replicate costs a couple of matrix-vector
products and only the labels move between replicates.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Dict, Iterator, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from scipy import sparse

from src.core.config import Config
from src.core.errors import DataError
from src.core.results import Method, TestResult

logger = logging.getLogger(__name__)

PairMatrix = Union[NDArray[np.float64], sparse.spmatrix]
LabelStatistic = Callable[[NDArray[np.int8]], float]


def check_labels(labels: NDArray[np.int8], n: int) -> NDArray[np.int8]:
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise DataError(f"expected {n} labels, got {labels.shape[0] if labels.ndim else 0}")
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be 0 or 1")
    if labels.sum() == 0 or labels.sum() == n:
        raise DataError("both groups must be nonempty")
    return labels.astype(np.int8)


def group_sums(matrix: PairMatrix, labels: NDArray[np.int8]) -> Tuple[float, float, float]:
    """
    Block sums of a pairwise matrix split by group.

    Returns (sum over group-1 pairs, sum over group-0 pairs, sum over
    group-1 rows and group-0 columns). Works for dense and sparse input.
    """
    x = np.asarray(labels, dtype=np.float64)
    y = 1.0 - x
    mx = np.asarray(matrix @ x).ravel()
    my = np.asarray(matrix @ y).ravel()
    return float(x @ mx), float(y @ my), float(x @ my)


def permuted_labels(
    labels: NDArray[np.int8], replicates: int, seed: int
) -> Iterator[NDArray[np.int8]]:
    """Uniform relabelings keeping the group sizes, one RNG substream per replicate."""
    for child in np.random.SeedSequence(seed).spawn(replicates):
        yield np.random.default_rng(child).permutation(labels)


def permutation_p_value(observed: float, permuted: NDArray[np.float64]) -> float:
    """(#{T_b >= T_obs} + 1) / (B + 1); near-equal values count as exceedances."""
    permuted = np.asarray(permuted, dtype=np.float64)
    exceed = (permuted >= observed) | np.isclose(permuted, observed, rtol=1e-12, atol=1e-12)
    return (int(exceed.sum()) + 1) / (len(permuted) + 1)


def run_permutations(
    evaluate: LabelStatistic,
    labels: NDArray[np.int8],
    replicates: int,
    seed: int,
    threads: Optional[int] = None,
) -> NDArray[np.float64]:
    """Statistic of each permuted labeling, in replicate order."""
    if replicates < 1:
        raise DataError("number of permutations must be at least 1")
    draws = permuted_labels(labels, replicates, seed)
    threads = threads or Config.MAX_THREADS
    if threads <= 1:
        return np.fromiter((evaluate(p) for p in draws), dtype=np.float64, count=replicates)
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return np.fromiter(executor.map(evaluate, draws), dtype=np.float64, count=replicates)


def permutation_test(
    evaluate: LabelStatistic,
    labels: NDArray[np.int8],
    replicates: int,
    seed: int,
    method: Method,
    parameters: Optional[Dict[str, Any]] = None,
    threads: Optional[int] = None,
) -> TestResult:
    """Observed statistic, B permuted statistics and the permutation p-value."""
    observed = float(evaluate(labels))
    permuted = run_permutations(evaluate, labels, replicates, seed, threads)
    p_value = permutation_p_value(observed, permuted)
    logger.debug("%s: T=%.6g p=%.4f (B=%d)", method.value, observed, p_value, replicates)
    return TestResult(
        method=method,
        statistic=observed,
        p_value=p_value,
        replicates=replicates,
        parameters=dict(parameters or {}),
        permuted_stats=permuted,
    )
