"""Low-dimensional Euclidean representation of a pooled sample.

Geodesic distances come from shortest paths on the union of the symmetric
k-NN graph and the Euclidean minimum spanning tree, so the graph is connected
for every input. Classical MDS of those distances gives the representation.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from scipy import linalg, sparse
from scipy.sparse import csgraph
from scipy.spatial.distance import pdist, squareform
from sklearn.neighbors import NearestNeighbors

from src.core.errors import DataError, DegenerateNeighborRatiosError, DisconnectedGraphError

logger = logging.getLogger(__name__)

EIGEN_RELATIVE_TOL = 1e-10


@dataclass(frozen=True)
class GeodesicGraph:
    """Undirected proximity graph; adjacency holds Euclidean edge lengths."""

    n: int
    adjacency: sparse.csr_matrix

    @property
    def edges(self) -> List[Tuple[int, int, float]]:
        upper = sparse.triu(self.adjacency, k=1).tocoo()
        return sorted(
            (int(i), int(j), float(w)) for i, j, w in zip(upper.row, upper.col, upper.data)
        )

    @property
    def n_components(self) -> int:
        count, _ = csgraph.connected_components(self.adjacency, directed=False)
        return int(count)


@dataclass(frozen=True)
class GeodesicDistances:
    """Symmetric all-pairs shortest-path matrix."""

    dist: NDArray[np.float64]

    @property
    def n(self) -> int:
        return int(self.dist.shape[0])


@dataclass(frozen=True)
class EmbeddedCloud:
    """Centered n x d coordinates plus how they were obtained."""

    coords: NDArray[np.float64]
    d_estimated: Optional[int] = None
    k: Optional[int] = None

    def __post_init__(self) -> None:
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2:
            raise DataError("embedding must be an n x d matrix")
        n, d = coords.shape
        if d < 1 or d > n - 1:
            raise DataError(f"embedding dimension {d} invalid for n={n}")
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return int(self.coords.shape[0])

    @property
    def d(self) -> int:
        return int(self.coords.shape[1])

    @classmethod
    def from_points(cls, points: NDArray[np.float64]) -> "EmbeddedCloud":
        """Use Euclidean coordinates directly, after centering."""
        points = np.asarray(points, dtype=np.float64)
        return cls(points - points.mean(axis=0))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.coords, columns=[f"z{j + 1}" for j in range(self.d)])


def _pairwise(points: NDArray[np.float64]) -> NDArray[np.float64]:
    return squareform(pdist(points))


def build_geodesic_graph(points: NDArray[np.float64], k: int) -> GeodesicGraph:
    """
    Union of the symmetric k-NN graph and the Euclidean MST.

    Neighbor ties go to the smaller index; duplicate points are joined by
    zero-length edges.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < 2:
        raise DataError("need at least 2 points to build a graph")
    if k < 1:
        raise DataError("k must be at least 1")
    k = min(k, n - 1)

    dist = _pairwise(points)
    ranked = dist.copy()
    np.fill_diagonal(ranked, np.inf)
    neighbors = np.argsort(ranked, axis=1, kind="stable")[:, :k]
    mask = np.zeros((n, n), dtype=bool)
    mask[np.repeat(np.arange(n), k), neighbors.ravel()] = True

    # zero entries are absent edges for the MST routine
    mst_input = np.where(dist > 0, dist, np.nextafter(0.0, 1.0))
    np.fill_diagonal(mst_input, 0.0)
    tree = csgraph.minimum_spanning_tree(mst_input).tocoo()
    mask[tree.row, tree.col] = True

    mask |= mask.T
    np.fill_diagonal(mask, False)
    adjacency = csgraph.csgraph_from_dense(np.where(mask, dist, np.inf), null_value=np.inf)
    graph = GeodesicGraph(n=n, adjacency=adjacency.tocsr())
    logger.debug("geodesic graph: n=%d k=%d edges=%d", n, k, len(graph.edges))
    return graph


def geodesic_distances(graph: GeodesicGraph) -> GeodesicDistances:
    """All-pairs shortest paths (Dijkstra)."""
    dist = csgraph.shortest_path(graph.adjacency, method="D", directed=False)
    if not np.isfinite(dist).all():
        raise DisconnectedGraphError(
            f"graph has {graph.n_components} connected components"
        )
    dist = np.minimum(dist, dist.T)
    np.fill_diagonal(dist, 0.0)
    return GeodesicDistances(dist)


def estimate_intrinsic_dimension(points: NDArray[np.float64]) -> int:
    """Two-NN maximum likelihood estimate, rounded and clamped to [1, min(D, n-2)]."""
    points = np.asarray(points, dtype=np.float64)
    n, ambient = points.shape
    if n < 3:
        raise DataError("need at least 3 points to estimate the dimension")

    distances, _ = NearestNeighbors(n_neighbors=3).fit(points).kneighbors(points)
    r1, r2 = distances[:, 1], distances[:, 2]
    valid = r1 > 0
    if not valid.any():
        raise DegenerateNeighborRatiosError("degenerate neighbor ratios")
    log_mu = np.log(r2[valid] / r1[valid])
    total = float(log_mu.sum())
    if total <= 0.0:
        raise DegenerateNeighborRatiosError("degenerate neighbor ratios")

    raw = valid.sum() / total
    d_hat = int(np.clip(round(raw), 1, max(1, min(ambient, n - 2))))
    logger.info("two-NN dimension estimate %.3f -> %d", raw, d_hat)
    return d_hat


def classical_mds(dist: GeodesicDistances, d: int) -> EmbeddedCloud:
    """Top-d eigenvectors of the double-centered squared distances."""
    n = dist.n
    if not 1 <= d <= n - 1:
        raise DataError(f"target dimension {d} outside [1, {n - 1}]")

    squared = dist.dist ** 2
    row_means = squared.mean(axis=1, keepdims=True)
    gram = -0.5 * (squared - row_means - row_means.T + squared.mean())
    gram = 0.5 * (gram + gram.T)

    values, vectors = linalg.eigh(gram, subset_by_index=[n - d, n - 1])
    values, vectors = values[::-1], vectors[:, ::-1]
    cutoff = EIGEN_RELATIVE_TOL * max(float(values[0]), 0.0)
    keep = values > cutoff
    if not keep.all():
        warnings.warn(
            f"only {int(keep.sum())} of {d} eigenvalues are positive; "
            "trailing coordinates set to zero",
            RuntimeWarning,
            stacklevel=2,
        )
    coords = vectors * np.sqrt(np.where(keep, values, 0.0))

    # orientation: largest-magnitude entry of each axis is positive
    pivots = np.abs(coords).argmax(axis=0)
    signs = np.where(coords[pivots, np.arange(d)] < 0, -1.0, 1.0)
    coords = coords * signs
    return EmbeddedCloud(coords - coords.mean(axis=0))


def default_k(d: int, n: int) -> int:
    return max(d + 1, math.ceil(math.log2(n)))


def embed(
    points: NDArray[np.float64], d: Optional[int] = None, k: Optional[int] = None
) -> EmbeddedCloud:
    """Graph, shortest paths and MDS in one call."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    d_estimated = None
    if d is None:
        d_estimated = estimate_intrinsic_dimension(points)
        d = d_estimated
    if d < 1:
        raise DataError("dimension must be at least 1")
    if n <= d + 1:
        raise DataError(f"sample too small for dimension {d}")
    if k is None:
        k = default_k(d, n)

    graph = build_geodesic_graph(points, k)
    cloud = classical_mds(geodesic_distances(graph), d)
    logger.info("embedded n=%d into d=%d (k=%d)", n, d, k)
    return EmbeddedCloud(cloud.coords, d_estimated=d_estimated, k=k)
