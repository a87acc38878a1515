"""Tests for the lifted Delaunay location and weight matrix."""

import numpy as np
import pytest

from src.core.errors import DataError, DegenerateSimplexError, NonGenericInputError
from src.services.delaunay import (
    SimplexHandle,
    SimplexLocator,
    barycentric,
    brute_force_delaunay,
    inverse_stereographic,
    lift_cloud,
    locate_simplex,
    project_onto_hull,
    stereographic,
    verify_empty_ball,
    weight_matrix,
    weight_row,
)
from src.services.manifold import EmbeddedCloud


def _cloud(n, d, seed):
    return EmbeddedCloud.from_points(np.random.default_rng(seed).normal(size=(n, d)))


def _line():
    return EmbeddedCloud(np.array([[0.0], [1.0], [3.0]]))


def test_inverse_stereographic_south_pole():
    """The origin lifts to the south pole."""
    assert inverse_stereographic(np.zeros(3), 5.0).tolist() == [0.0, 0.0, 0.0, 0.0]


def test_inverse_stereographic_equator():
    """A point at radius eta_r lands on the equator at half its coordinates."""
    z = np.array([3.0, 4.0])
    lifted = inverse_stereographic(z, 5.0)
    assert lifted == pytest.approx([1.5, 2.0, 2.5])


def test_stereographic_round_trip():
    """Forward projection undoes the lift."""
    z = np.random.default_rng(0).normal(size=(20, 3))
    back = stereographic(inverse_stereographic(z, 7.0), 7.0)
    assert np.allclose(back, z, rtol=1e-10, atol=1e-12)


def test_lift_cloud_on_sphere():
    """Every lifted row lies on the sphere; row 0 is the pole."""
    sphere = lift_cloud(_cloud(30, 3, 1), eta=10)
    offsets = np.linalg.norm(sphere.lifted - sphere.center, axis=1)
    assert np.allclose(offsets, sphere.radius, atol=1e-9 * sphere.eta_r)
    assert sphere.lifted[0].tolist() == [0.0, 0.0, 0.0, sphere.eta_r]


def test_lift_cloud_farthest_point_below_equator():
    """With eta > 1 the farthest point stays in the lower hemisphere."""
    cloud = _cloud(20, 2, 2)
    sphere = lift_cloud(cloud, eta=10)
    far = int(np.argmax(np.linalg.norm(cloud.coords, axis=1)))
    assert sphere.lifted[far + 1, -1] < sphere.radius


def test_lift_cloud_zero_radius():
    """An all-zero cloud cannot be lifted."""
    with pytest.raises(DataError):
        lift_cloud(EmbeddedCloud(np.zeros((4, 2))), eta=10)


def test_locate_exterior_line_point():
    """Query 0 on {0, 1, 3} lands on the segment of the others."""
    cloud = _line()
    handle = locate_simplex(lift_cloud(cloud, 10), cloud, 0)
    assert handle.vertices == (1, 2)


def test_line_weight_matrix():
    """Hand-solved 1-D weight matrix."""
    gamma = weight_matrix(_line(), eta=10).dense()
    expected = np.array([[0, 1, 0], [2 / 3, 0, 1 / 3], [0, 1, 0]])
    assert np.allclose(gamma, expected, atol=1e-12)


def test_weight_row_exterior_projection():
    """Exterior query projects to the nearest endpoint."""
    row = weight_row(_line(), 0, SimplexHandle((1, 2)))
    assert row.entries == {1: pytest.approx(1.0)}
    assert row.projection == pytest.approx([1.0])


def test_weight_row_at_vertex():
    """A query sitting on a vertex puts all weight there."""
    cloud = EmbeddedCloud(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]))
    row = weight_row(cloud, 3, SimplexHandle((0, 1, 2)))
    assert row.entries == {1: pytest.approx(1.0)}


def test_weight_row_degenerate_simplex():
    """Collinear vertices cannot carry barycentric weights."""
    cloud = EmbeddedCloud(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [0.5, 1.0]]))
    with pytest.raises(DegenerateSimplexError, match="degenerate simplex"):
        weight_row(cloud, 3, SimplexHandle((0, 1, 2)))


def _assert_weight_invariants(cloud):
    weights = weight_matrix(cloud, eta=10)
    gamma = weights.matrix
    assert np.allclose(np.asarray(gamma.sum(axis=1)).ravel(), 1.0, atol=1e-9)
    assert np.all(gamma.diagonal() == 0)
    assert gamma.data.min() >= 0 and gamma.data.max() <= 1
    assert np.all(np.diff(gamma.indptr) <= cloud.d + 1)
    for row in weights.rows:
        recon = gamma[row.index].toarray().ravel() @ cloud.coords
        z = cloud.coords[row.index]
        assert np.linalg.norm(recon - row.projection) <= 1e-8 * (1 + np.linalg.norm(z))


def _hull_gap(points, query, projection):
    """Largest (query - p) . (v - p) over the points; <= 0 at the projection."""
    return float(((points - projection) @ (query - projection)).max())


@pytest.mark.parametrize("d", [2, 3, 4, 6])
def test_weight_matrix_rows_are_stochastic(d):
    """Rows sum to one with at most d + 1 nonnegative entries off the diagonal."""
    _assert_weight_invariants(_cloud(30 + 5 * d, d, 3 + d))


@pytest.mark.slow
@pytest.mark.parametrize("d,n", [(10, 200), (20, 300), (50, 500)])
def test_weight_matrix_invariants_high_dimension(d, n):
    """Row invariants hold for large clouds in high dimension."""
    _assert_weight_invariants(_cloud(n, d, d))


def _assert_matches_brute_force(cloud):
    locator = SimplexLocator(lift_cloud(cloud, 10), cloud)
    for i in range(cloud.n):
        handle = locator.locate(i)
        row = weight_row(cloud, i, handle)
        assert verify_empty_ball(cloud, handle, exclude=i)
        holders = [
            s.vertices
            for s in brute_force_delaunay(cloud, exclude=i)
            if barycentric(cloud.coords[list(s.vertices)], row.projection).min() >= -1e-9
        ]
        assert handle.vertices in holders


@pytest.mark.parametrize("d", [1, 2, 3])
def test_locate_matches_brute_force(d):
    """Located simplices are Delaunay simplices holding the projection."""
    _assert_matches_brute_force(_cloud(14, d, 10 + d))


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(50))
def test_locate_matches_brute_force_many_clouds(seed):
    """Brute-force agreement over fifty clouds of up to forty points."""
    d = 1 + seed % 3
    n = 15 + seed % 26
    _assert_matches_brute_force(_cloud(n, d, 100 + seed))


@pytest.mark.parametrize("n,d,seed", [(40, 3, 10), (60, 4, 12), (60, 5, 12), (80, 6, 12)])
def test_row_projection_is_nearest_hull_point(n, d, seed):
    """Every row projection is the nearest point of the hull of the other points."""
    cloud = _cloud(n, d, seed)
    weights = weight_matrix(cloud, eta=10)
    for row in weights.rows:
        others = np.delete(cloud.coords, row.index, axis=0)
        z = cloud.coords[row.index]
        assert _hull_gap(others, z, row.projection) <= 1e-8


def test_interior_query_contained():
    """A query inside the hull of the others is its own projection."""
    cloud = EmbeddedCloud.from_points(
        np.array([[0.0, 0.0], [4.0, 0.1], [0.2, 4.0], [4.1, 3.9], [2.0, 2.1]])
    )
    handle = locate_simplex(lift_cloud(cloud, 10), cloud, 4)
    lam = barycentric(cloud.coords[list(handle.vertices)], cloud.coords[4])
    assert lam.min() >= -1e-9


def test_exterior_projection_optimality():
    """Exterior projections satisfy the first-order condition against every other point."""
    cloud = _cloud(25, 2, 20)
    weights = weight_matrix(cloud, eta=10)
    exterior = 0
    for row in weights.rows:
        z = cloud.coords[row.index]
        if np.allclose(row.projection, z):
            continue
        exterior += 1
        others = np.delete(cloud.coords, row.index, axis=0)
        assert _hull_gap(others, z, row.projection) <= 1e-8
    assert exterior > 0


@pytest.mark.parametrize("seed", range(20))
def test_eta_stability(seed):
    """The located simplices do not depend on eta."""
    cloud = _cloud(25, 2 + seed % 2, 30 + seed)
    located = [
        [r.simplex.vertices for r in weight_matrix(cloud, eta=eta).rows] for eta in (5, 10, 20)
    ]
    assert located[0] == located[1] == located[2]


def test_similarity_equivariance():
    """Translating and scaling the cloud keeps the weights."""
    cloud = _cloud(20, 2, 40)
    moved = EmbeddedCloud(3.0 * cloud.coords + np.array([5.0, -2.0]))
    assert np.allclose(weight_matrix(cloud).dense(), weight_matrix(moved).dense(), atol=1e-9)


def test_duplicated_points_are_non_generic():
    """Coincident copies make the pivot ambiguous."""
    base = np.random.default_rng(5).normal(size=(6, 2))
    cloud = EmbeddedCloud.from_points(np.vstack([base, base]))
    with pytest.raises(NonGenericInputError, match="non-generic input; perturb"):
        weight_matrix(cloud, eta=10)


def test_verify_empty_ball_cases():
    """Far points, cocircular points and violators."""
    triangle = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2], [10.0, 10.0]])
    assert verify_empty_ball(EmbeddedCloud(triangle), SimplexHandle((0, 1, 2)))

    square = EmbeddedCloud(np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]))
    assert verify_empty_ball(square, SimplexHandle((0, 1, 2)))

    fat = EmbeddedCloud(np.array([[0.0, 0.0], [4.0, 0.0], [2.0, 0.2], [2.0, -0.1]]))
    assert not verify_empty_ball(fat, SimplexHandle((0, 1, 2)))


def test_brute_force_small_cases():
    """Quadrilateral gives two triangles; a triangle gives one."""
    quad = EmbeddedCloud(np.array([[0.0, 0.0], [3.0, 0.0], [3.2, 1.0], [0.1, 1.1]]))
    simplices = brute_force_delaunay(quad)
    assert len(simplices) == 2
    shared = set(simplices[0].vertices) & set(simplices[1].vertices)
    assert len(shared) == 2

    tri = EmbeddedCloud(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    assert [s.vertices for s in brute_force_delaunay(tri)] == [(0, 1, 2)]


def test_brute_force_covers_hull():
    """Random convex combinations fall in some Delaunay triangle."""
    cloud = _cloud(12, 2, 50)
    simplices = brute_force_delaunay(cloud)
    rng = np.random.default_rng(51)
    for _ in range(50):
        mix = rng.dirichlet(np.ones(cloud.n))
        point = mix @ cloud.coords
        assert any(
            barycentric(cloud.coords[list(s.vertices)], point).min() >= -1e-9 for s in simplices
        )


def test_brute_force_guard():
    """Large subset counts are refused."""
    with pytest.raises(DataError):
        brute_force_delaunay(_cloud(200, 4, 0))


def test_project_onto_hull_square():
    """Projection onto the unit square clamps to an edge."""
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    weights, point = project_onto_hull(square, np.array([2.0, 0.25]))
    assert point == pytest.approx([1.0, 0.25])
    assert weights.sum() == pytest.approx(1.0)
    assert weights.min() >= 0


def test_project_onto_hull_interior_point():
    """A point inside the hull is its own projection."""
    vertices = np.random.default_rng(7).normal(size=(30, 5))
    query = np.random.default_rng(8).dirichlet(np.ones(30)) @ vertices
    weights, point = project_onto_hull(vertices, query)
    assert np.allclose(point, query, atol=1e-10)
    assert weights @ vertices == pytest.approx(point)


def test_project_onto_hull_cube_clamps_coordinates():
    """Projection onto a cube clamps each coordinate to [0, 1]."""
    corners = np.array(np.meshgrid(*[[0.0, 1.0]] * 5)).reshape(5, -1).T
    query = np.array([2.0, 0.5, 0.3, 1.5, -1.0])
    _, point = project_onto_hull(corners, query)
    assert np.allclose(point, [1.0, 0.5, 0.3, 1.0, 0.0], atol=1e-10)


def test_project_onto_hull_is_optimal_for_every_point():
    """Leave-one-out projections satisfy the first-order condition over all other points."""
    coords = np.random.default_rng(12).normal(size=(60, 5))
    for i in range(len(coords)):
        others = np.delete(coords, i, axis=0)
        weights, point = project_onto_hull(others, coords[i])
        assert weights.min() >= 0 and weights.sum() == pytest.approx(1.0)
        assert _hull_gap(others, coords[i], point) <= 1e-10


def test_verify_empty_ball_near_flat_simplex():
    """A nearly collinear triangle has no meaningful circumball."""
    cloud = EmbeddedCloud(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 1e-14], [0.5, 3.0]]))
    with pytest.raises(DegenerateSimplexError, match="degenerate simplex"):
        verify_empty_ball(cloud, SimplexHandle((0, 1, 2)))


def test_weight_matrix_export_frame():
    """Sparse export lists i, j, gamma triples."""
    frame = weight_matrix(_line()).to_frame()
    assert list(frame.columns) == ["i", "j", "gamma"]
    assert frame.groupby("i")["gamma"].sum().tolist() == pytest.approx([1.0, 1.0, 1.0])
