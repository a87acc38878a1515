"""Delaunay weight matrix of an embedded cloud.

Each point is located in the Delaunay triangulation of the remaining points.
The cloud is lifted onto a sphere by inverse stereographic projection with a
north pole added as reference point. Facets of the lifted hull are Delaunay
simplices, and those holding the pole are hull faces of the flat cloud.
Containment is decided on the lifted points. Facets are completed in the
plane with the empty circumball pivot, which is the same operation.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from scipy import sparse

from src.core.config import Config
from src.core.errors import DataError, DegenerateSimplexError, NonGenericInputError
from src.services.manifold import EmbeddedCloud

logger = logging.getLogger(__name__)

CONTAINMENT_TOL = 1e-9
EMPTY_BALL_SLACK = 1e-8
TIE_RELATIVE = 1e-12
BARYCENTRIC_TOL = 1e-12
MAX_BRUTE_FORCE = 1_000_000
MAX_CONDITION = 1e12
HULL_TOL = 1e-12
HULL_STEP_FACTOR = 50


def inverse_stereographic(z: NDArray[np.float64], eta_r: float) -> NDArray[np.float64]:
    """
    Map points of R^d onto the sphere of diameter eta_r resting on the origin.

    Works on a single point or on the rows of a matrix.
    """
    if eta_r <= 0:
        raise DataError("eta * r_max must be positive")
    z = np.asarray(z, dtype=np.float64)
    sq = np.sum(z ** 2, axis=-1, keepdims=True)
    s = eta_r ** 2
    return np.concatenate([s * z / (s + sq), eta_r * sq / (s + sq)], axis=-1)


def stereographic(x: NDArray[np.float64], eta_r: float) -> NDArray[np.float64]:
    """Project sphere points from the north pole back to R^d."""
    x = np.asarray(x, dtype=np.float64)
    return eta_r * x[..., :-1] / (eta_r - x[..., -1:])


@dataclass(frozen=True)
class SphereCloud:
    """Lifted cloud; row 0 is the north pole, row j + 1 is point j."""

    lifted: NDArray[np.float64]
    eta: float
    r_max: float
    origin: NDArray[np.float64]

    @property
    def eta_r(self) -> float:
        return self.eta * self.r_max

    @property
    def pole(self) -> NDArray[np.float64]:
        return self.lifted[0]

    @property
    def center(self) -> NDArray[np.float64]:
        c = np.zeros(self.lifted.shape[1])
        c[-1] = self.eta_r / 2.0
        return c

    @property
    def radius(self) -> float:
        return self.eta_r / 2.0


def lift_cloud(cloud: EmbeddedCloud, eta: Optional[float] = None) -> SphereCloud:
    """Center the cloud and lift it with eta_r = eta * r_max."""
    eta = Config.DEFAULT_ETA if eta is None else float(eta)
    if eta <= 0:
        raise DataError("eta must be positive")
    origin = cloud.coords.mean(axis=0)
    centered = cloud.coords - origin
    r_max = float(np.sqrt((centered ** 2).sum(axis=1)).max())
    if r_max == 0.0:
        raise DataError("embedded cloud has zero radius")
    eta_r = eta * r_max
    pole = np.zeros(cloud.d + 1)
    pole[-1] = eta_r
    lifted = np.vstack([pole, inverse_stereographic(centered, eta_r)])
    return SphereCloud(lifted=lifted, eta=eta, r_max=r_max, origin=origin)


@dataclass(frozen=True)
class SimplexHandle:
    """Sorted vertex indices of a d-simplex."""

    vertices: Tuple[int, ...]

    def __post_init__(self) -> None:
        vertices = tuple(int(v) for v in self.vertices)
        if list(vertices) != sorted(set(vertices)):
            raise DataError(f"simplex vertices must be sorted and distinct: {vertices}")
        object.__setattr__(self, "vertices", vertices)

    def __contains__(self, index: object) -> bool:
        return index in self.vertices

    def __len__(self) -> int:
        return len(self.vertices)


def barycentric(vertices: NDArray[np.float64], point: NDArray[np.float64]) -> NDArray[np.float64]:
    """Affine coordinates of `point` relative to d + 1 vertices in R^d."""
    vertices = np.asarray(vertices, dtype=np.float64)
    base = vertices[0]
    offsets = vertices - base
    scale = float(np.abs(offsets).max())
    if scale == 0.0:
        raise DegenerateSimplexError("degenerate simplex: coincident vertices")
    system = np.vstack([offsets.T / scale, np.ones(len(vertices))])
    rhs = np.append((np.asarray(point) - base) / scale, 1.0)
    if system.shape[0] != system.shape[1] or np.linalg.cond(system) > MAX_CONDITION:
        raise DegenerateSimplexError("degenerate simplex: vertices affinely dependent")
    return np.linalg.solve(system, rhs)


def _affine_minimizer(points: NDArray[np.float64]) -> NDArray[np.float64]:
    """Affine weights of the minimum-norm point in the affine hull of `points`."""
    if len(points) == 1:
        return np.ones(1)
    base = points[0]
    beta, *_ = np.linalg.lstsq((points[1:] - base).T, -base, rcond=None)
    return np.concatenate([[1.0 - beta.sum()], beta])


def project_onto_hull(
    vertices: NDArray[np.float64], query: NDArray[np.float64]
) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Euclidean projection of `query` onto the convex hull of `vertices`.

    Returns (weights, projection). Minimum-norm-point iteration on the
    vertices shifted by the query: each major step adds the vertex most
    opposed to the current point, minor steps move to the affine minimizer
    of the active set and drop vertices whose weight reaches zero. On exit
    (query - p) . (v - p) <= HULL_TOL * max|v - query|^2 for every vertex v.
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    shifted = vertices - query
    sq = (shifted ** 2).sum(axis=1)
    tol = HULL_TOL * max(float(sq.max()), np.finfo(np.float64).tiny)

    active = [int(np.argmin(sq))]
    lam = np.ones(1)
    for _ in range(HULL_STEP_FACTOR * (len(vertices) + 1)):
        x = lam @ shifted[active]
        dots = shifted @ x
        j = int(np.argmin(dots))
        if x @ x - dots[j] <= tol or j in active:
            break

        trial = active + [j]
        trial_lam = np.append(lam, 0.0)
        while True:
            alpha = _affine_minimizer(shifted[trial])
            if alpha.min() > 0.0:
                trial_lam = alpha
                break
            blocked = alpha <= 0.0
            if np.any(blocked & (trial_lam <= 0.0)):
                # entering vertex gets no weight: no further descent in floating point
                trial = []
                break
            ratios = trial_lam[blocked] / (trial_lam[blocked] - alpha[blocked])
            theta = float(ratios.min())
            trial_lam = theta * alpha + (1.0 - theta) * trial_lam
            drop = int(np.flatnonzero(blocked)[np.argmin(ratios)])
            keep = [t for t in range(len(trial)) if t != drop and trial_lam[t] > 0.0]
            trial = [trial[t] for t in keep]
            trial_lam = trial_lam[keep] / trial_lam[keep].sum()
        if not trial:
            break
        active, lam = trial, trial_lam
    else:
        raise DegenerateSimplexError("hull projection did not converge")

    weights = np.zeros(len(vertices))
    weights[active] = lam
    return weights, weights @ vertices


def circumball(vertices: NDArray[np.float64]) -> Tuple[NDArray[np.float64], float]:
    """Circumcenter and squared circumradius of d + 1 points in R^d."""
    vertices = np.asarray(vertices, dtype=np.float64)
    base = vertices[0]
    offsets = vertices[1:] - base
    scale = float(np.abs(offsets).max()) if offsets.size else 0.0
    if scale == 0.0:
        raise DegenerateSimplexError("degenerate simplex: coincident vertices")
    system = 2.0 * offsets / scale
    if system.shape[0] != system.shape[1] or np.linalg.cond(system) > MAX_CONDITION:
        raise DegenerateSimplexError("degenerate simplex: no circumball")
    rel = np.linalg.solve(system, (offsets ** 2).sum(axis=1) / scale)
    return base + rel, float(rel @ rel)


class SimplexLocator:
    """Finds S(z_i; Z minus z_i) for each query index of one cloud."""

    def __init__(
        self,
        sphere: SphereCloud,
        embedded: EmbeddedCloud,
        visit_factor: Optional[int] = None,
    ):
        self.sphere = sphere
        self.coords = embedded.coords - sphere.origin
        self.n, self.d = self.coords.shape
        self.scale = sphere.r_max
        self.max_visits = (visit_factor or Config.VISIT_FACTOR) * self.n
        self._side_tol = TIE_RELATIVE * self.scale

    def locate(self, i: int) -> SimplexHandle:
        if not 0 <= i < self.n:
            raise DataError(f"query index {i} out of range")
        if self.n - 1 < self.d + 1:
            raise DataError(f"sample too small for dimension {self.d}")
        others = np.ones(self.n, dtype=bool)
        others[i] = False
        simplex = self._seed(i, others, self.coords[i])
        simplex = self._walk(i, others, simplex)
        return SimplexHandle(tuple(sorted(simplex)))

    # -- seed ---------------------------------------------------------------

    def _seed(self, i: int, others: NDArray[np.bool_], target: NDArray[np.float64]) -> List[int]:
        """Grow an empty ball from the lifted nearest neighbour until d + 1 points lie on it."""
        lifted = self.sphere.lifted[1:]
        gap = ((lifted - inverse_stereographic(target, self.sphere.eta_r)) ** 2).sum(axis=1)
        gap[~others] = np.inf
        f0 = int(np.argmin(gap))

        face = [f0]
        anchor = self.coords[f0]
        center, rho2 = anchor.copy(), 0.0
        basis = np.zeros((self.d, 0))
        for _ in range(self.d):
            u = self._complement(basis, target - self.coords[face].mean(axis=0))
            pool = others.copy()
            pool[face] = False
            idx = np.flatnonzero(pool)
            for direction in (u, -u):
                side = (self.coords[idx] - anchor) @ direction
                ok = side > self._side_tol
                if ok.any():
                    break
            else:
                raise NonGenericInputError(f"query {i}: remaining points lie in a flat")
            gaps = ((self.coords[idx[ok]] - center) ** 2).sum(axis=1) - rho2
            t = gaps / (2.0 * side[ok])
            pos = self._pick(i, t)
            c = int(idx[ok][pos])
            center = center + t[pos] * direction
            rho2 = float(((center - anchor) ** 2).sum())

            new = self.coords[c] - anchor
            new = new - basis @ (basis.T @ new)
            basis = np.column_stack([basis, new / np.linalg.norm(new)])
            face.append(c)
        return face

    def _complement(self, basis: NDArray[np.float64], hint: NDArray[np.float64]) -> NDArray[np.float64]:
        """Unit vector orthogonal to `basis`, following `hint` when possible."""
        u = hint - basis @ (basis.T @ hint)
        if np.linalg.norm(u) <= self._side_tol:
            eye = np.eye(self.d)
            residual = eye - basis @ (basis.T @ eye)
            u = residual[:, int(np.argmax(np.linalg.norm(residual, axis=0)))]
        return u / np.linalg.norm(u)

    # -- walk ---------------------------------------------------------------

    def _walk(self, i: int, others: NDArray[np.bool_], simplex: List[int]) -> List[int]:
        target = self.coords[i]
        projecting = False
        visited = set()
        visits = 0
        while True:
            visits += 1
            key = frozenset(simplex)
            if visits > self.max_visits or key in visited:
                raise NonGenericInputError(f"query {i}: facet walk did not settle")
            visited.add(key)

            mu = self._pole_barycentric(i, simplex, target)
            k = int(np.argmin(mu))
            if mu[k] >= -CONTAINMENT_TOL:
                return simplex
            apex = self._pivot(i, others, simplex, k)
            if apex is None:
                if projecting:
                    return simplex
                # the ridge faces the pole: query lies outside the hull of the others
                _, target = project_onto_hull(self.coords[others], self.coords[i])
                projecting = True
                visited.clear()
                continue
            simplex = simplex[:k] + [apex] + simplex[k + 1:]

    def _pole_barycentric(
        self, i: int, simplex: Sequence[int], target: NDArray[np.float64]
    ) -> NDArray[np.float64]:
        """
        Affine coordinates of `target` in the simplex, read off the lifted facet.

        The line from the pole through the lifted target meets the facet
        hyperplane; its lifted coordinates are rescaled to planar ones.
        """
        eta_r = self.sphere.eta_r
        facet = self.sphere.lifted[np.asarray(simplex) + 1]
        pole = self.sphere.pole
        lifted_target = inverse_stereographic(target, eta_r)
        m = self.d + 1
        system = np.zeros((m + 1, m + 1))
        system[:m, :m] = facet.T
        system[:m, m] = -(lifted_target - pole)
        system[m, :m] = 1.0
        rhs = np.append(pole, 1.0)
        try:
            solution = np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError:
            raise NonGenericInputError(f"query {i}: singular containment solve")
        lam = solution[:m]
        depth = eta_r - lam @ facet[:, -1]
        if not np.isfinite(solution).all() or abs(depth) <= 1e-15 * eta_r:
            raise NonGenericInputError(f"query {i}: singular containment solve")
        return lam * (eta_r - facet[:, -1]) / depth

    def _pivot(
        self, i: int, others: NDArray[np.bool_], simplex: List[int], k: int
    ) -> Optional[int]:
        """Apex of the neighbour across the ridge opposite vertex k, or None on the hull."""
        vertices = self.coords[simplex]
        ridge = np.delete(vertices, k, axis=0)
        r0 = ridge[0]
        if self.d > 1:
            basis, _ = np.linalg.qr((ridge[1:] - r0).T)
        else:
            basis = np.zeros((self.d, 0))
        normal = (vertices[k] - r0) - basis @ (basis.T @ (vertices[k] - r0))
        length = np.linalg.norm(normal)
        if length <= self._side_tol:
            raise NonGenericInputError(f"query {i}: flat simplex {sorted(simplex)}")
        u = -normal / length

        try:
            center, rho2 = circumball(vertices)
        except DegenerateSimplexError:
            raise NonGenericInputError(f"query {i}: flat simplex {sorted(simplex)}")
        pool = others.copy()
        pool[simplex] = False
        idx = np.flatnonzero(pool)
        side = (self.coords[idx] - r0) @ u
        ok = side > self._side_tol
        if not ok.any():
            return None
        gaps = ((self.coords[idx[ok]] - center) ** 2).sum(axis=1) - rho2
        t = gaps / (2.0 * side[ok])
        return int(idx[ok][self._pick(i, t)])

    def _pick(self, i: int, t: NDArray[np.float64]) -> int:
        """Index of the smallest t; a near tie means cospherical points."""
        order = np.argsort(t, kind="stable")
        if len(order) > 1:
            t0, t1 = t[order[0]], t[order[1]]
            if t1 - t0 <= TIE_RELATIVE * max(abs(t0), abs(t1), self.scale):
                raise NonGenericInputError(f"query {i}: cospherical pivot candidates")
        return int(order[0])


def locate_simplex(sphere: SphereCloud, embedded: EmbeddedCloud, i: int) -> SimplexHandle:
    return SimplexLocator(sphere, embedded).locate(i)


@dataclass(frozen=True)
class WeightRow:
    """Weights of one query on its located simplex."""

    index: int
    simplex: SimplexHandle
    weights: NDArray[np.float64]
    projection: NDArray[np.float64]

    @property
    def entries(self) -> Dict[int, float]:
        return {j: float(w) for j, w in zip(self.simplex.vertices, self.weights) if w > 0}

    @property
    def interior(self) -> bool:
        return bool(self.weights.size and self.weights.min() > 0)


def weight_row(embedded: EmbeddedCloud, i: int, simplex: SimplexHandle) -> WeightRow:
    """Barycentric weights of z_i, or of its projection onto the simplex when outside."""
    if i in simplex:
        raise DataError(f"query {i} is a vertex of its own simplex")
    vertices = embedded.coords[list(simplex.vertices)]
    query = embedded.coords[i]
    try:
        lam = barycentric(vertices, query)
    except DegenerateSimplexError as e:
        raise DegenerateSimplexError(f"{e} (query {i}, simplex {simplex.vertices})")
    if lam.min() < -BARYCENTRIC_TOL:
        lam, _ = project_onto_hull(vertices, query)
    lam = np.where(lam < BARYCENTRIC_TOL, 0.0, lam)
    lam = lam / lam.sum()
    return WeightRow(index=i, simplex=simplex, weights=lam, projection=lam @ vertices)


@dataclass
class WeightMatrix:
    """Row-stochastic Delaunay weights with a zero diagonal."""

    matrix: sparse.csr_matrix = field(repr=False)
    d: int
    rows: Tuple[WeightRow, ...] = ()

    @property
    def n(self) -> int:
        return int(self.matrix.shape[0])

    @classmethod
    def from_rows(cls, rows: Sequence[WeightRow], n: int, d: int) -> "WeightMatrix":
        row_idx, col_idx, data = [], [], []
        for row in rows:
            for j, w in row.entries.items():
                row_idx.append(row.index)
                col_idx.append(j)
                data.append(w)
        matrix = sparse.csr_matrix((data, (row_idx, col_idx)), shape=(n, n))
        return cls(matrix=matrix, d=d, rows=tuple(rows))

    @classmethod
    def from_dense(cls, dense: NDArray[np.float64], d: int) -> "WeightMatrix":
        """Wrap an explicit n x n weight array (no located simplices attached)."""
        dense = np.asarray(dense, dtype=np.float64)
        if dense.ndim != 2 or dense.shape[0] != dense.shape[1]:
            raise DataError("weight matrix must be square")
        return cls(matrix=sparse.csr_matrix(dense), d=d)

    def dense(self) -> NDArray[np.float64]:
        return self.matrix.toarray()

    def to_frame(self) -> pd.DataFrame:
        """Nonzero entries as i, j, gamma triples."""
        coo = self.matrix.tocoo()
        frame = pd.DataFrame({"i": coo.row, "j": coo.col, "gamma": coo.data})
        return frame.sort_values(["i", "j"], kind="stable").reset_index(drop=True)


def weight_matrix(
    embedded: EmbeddedCloud,
    eta: Optional[float] = None,
    visit_factor: Optional[int] = None,
) -> WeightMatrix:
    """Locate every point among the others and collect its weight row."""
    n, d = embedded.n, embedded.d
    if n < d + 2:
        raise DataError(f"sample too small for dimension {d}")
    sphere = lift_cloud(embedded, eta)
    locator = SimplexLocator(sphere, embedded, visit_factor)
    rows = tuple(weight_row(embedded, i, locator.locate(i)) for i in range(n))
    exterior = sum(not np.allclose(r.projection, embedded.coords[i]) for i, r in enumerate(rows))
    logger.info("weight matrix: n=%d d=%d eta=%g exterior=%d", n, d, sphere.eta, exterior)
    return WeightMatrix.from_rows(rows, n=n, d=d)


def verify_empty_ball(
    embedded: EmbeddedCloud, simplex: SimplexHandle, exclude: Optional[int] = None
) -> bool:
    """True iff no other point lies strictly inside the simplex circumball."""
    vertices = embedded.coords[list(simplex.vertices)]
    center, rho2 = circumball(vertices)
    radius = math.sqrt(rho2)
    mask = np.ones(embedded.n, dtype=bool)
    mask[list(simplex.vertices)] = False
    if exclude is not None:
        mask[exclude] = False
    dist = np.sqrt(((embedded.coords[mask] - center) ** 2).sum(axis=1))
    return bool(np.all(dist >= radius - EMPTY_BALL_SLACK * radius))


def brute_force_delaunay(
    embedded: EmbeddedCloud, exclude: Optional[int] = None, batch: int = 20_000
) -> List[SimplexHandle]:
    """Every (d+1)-subset with an empty circumball; small clouds only."""
    pool = [j for j in range(embedded.n) if j != exclude]
    d = embedded.d
    if math.comb(len(pool), d + 1) > MAX_BRUTE_FORCE:
        raise DataError(f"C({len(pool)}, {d + 1}) subsets exceed the brute-force guard")
    coords = embedded.coords[pool]
    scale = max(float(np.abs(coords - coords.mean(axis=0)).max()), 1e-300)

    found: List[SimplexHandle] = []
    subsets = combinations(range(len(pool)), d + 1)
    while True:
        chunk = np.array([s for _, s in zip(range(batch), subsets)], dtype=np.intp)
        if chunk.size == 0:
            break
        vertices = coords[chunk]
        offsets = vertices[:, 1:] - vertices[:, :1]
        system = 2.0 * offsets / scale
        flat = np.abs(np.linalg.det(system)) <= 1e-12
        system[flat] = np.eye(d)
        rhs = (offsets ** 2).sum(axis=2) / scale
        rel = np.linalg.solve(system, rhs[..., None])[..., 0]
        centers = vertices[:, 0] + rel
        radius = np.sqrt((rel ** 2).sum(axis=1))
        dist = np.sqrt(((coords[None, :, :] - centers[:, None, :]) ** 2).sum(axis=2))
        inside = dist < (radius * (1 - EMPTY_BALL_SLACK))[:, None]
        inside[np.arange(len(chunk))[:, None], chunk] = False
        keep = ~flat & ~inside.any(axis=1)
        for row in chunk[keep]:
            found.append(SimplexHandle(tuple(sorted(pool[j] for j in row))))
    return found
