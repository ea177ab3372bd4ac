import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog, minimize

from outerapprox.errors import CapabilityError, Infeasible, NotNested, Unbounded
from outerapprox.polytope import (
    Halfspace,
    Polytope,
    enumerate_vertices,
    hausdorff_nested,
    intersect,
    is_bounded,
    lp_max,
)

SQUARE = Polytope.box([0, 0], [1, 1])
SIMPLEX = Polytope.from_inequalities([[-1, 0], [0, -1], [1, 1]], [0, 0, 1])


def same_points(a, b, tol=1e-8):
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.shape != b.shape:
        return False
    return all(np.min(np.max(np.abs(b - p), axis=1)) <= tol for p in a)


# --- worked examples ----------------------------------------------------------


def test_square_cut_by_diagonal():
    cut = intersect(SQUARE, Halfspace([1, 1], 0.5))
    expected = [(0, 0.5), (0, 1), (0.5, 0), (1, 0), (1, 1)]
    assert np.allclose(cut.vertices, expected)
    # the incremental update agrees with a from-scratch enumeration
    assert np.allclose(enumerate_vertices(Polytope(cut.halfspaces)), expected)


def test_redundant_cut_keeps_square():
    cut = intersect(SQUARE, Halfspace([1, 0], 0.0))
    assert cut.n_halfspaces == SQUARE.n_halfspaces + 1
    assert np.allclose(cut.vertices, [(0, 0), (0, 1), (1, 0), (1, 1)])


def test_infeasible_cut_gives_no_vertices():
    assert len(intersect(SQUARE, Halfspace([1, 0], 2.0)).vertices) == 0


def test_simplex_vertices():
    assert np.allclose(enumerate_vertices(SIMPLEX), [(0, 0), (0, 1), (1, 0)])


def test_square_vertices():
    assert np.allclose(enumerate_vertices(SQUARE), [(0, 0), (0, 1), (1, 0), (1, 1)])


def test_initial_ball_triangle():
    gamma = 2 + math.sqrt(2) + 1
    poly = Polytope([Halfspace([1, 0], 0), Halfspace([0, 1], 0), Halfspace.upper([1, 1], gamma)])
    assert np.allclose(poly.vertices, [(0, 0), (0, gamma), (gamma, 0)])


def test_dimension_guard():
    with pytest.raises(CapabilityError):
        enumerate_vertices(Polytope.box(np.zeros(5), np.ones(5)))


def test_zero_normal_rejected():
    with pytest.raises(ValueError):
        Halfspace([0, 0], 1.0)


def test_lp_examples():
    y, val = lp_max(SQUARE, [1, 1])
    assert np.allclose(y, [1, 1]) and val == pytest.approx(2)
    y, val = lp_max(SIMPLEX, [2, 1])
    assert np.allclose(y, [1, 0]) and val == pytest.approx(2)
    # (1,0) and (1,1) both optimal; the lexicographically smaller one wins
    y, val = lp_max(SQUARE, [1, 0])
    assert np.allclose(y, [1, 0]) and val == pytest.approx(1)


def test_lp_errors():
    halfplane = Polytope([Halfspace([1, 0], 0.0)])
    with pytest.raises(Unbounded):
        lp_max(halfplane, [1, 0])
    assert not is_bounded(halfplane)
    empty = Polytope([Halfspace([1, 0], 1.0), Halfspace([-1, 0], 0.0)])
    with pytest.raises(Infeasible):
        lp_max(empty, [1, 0])


def test_hausdorff_examples():
    inner = Polytope.box([0.25, 0.25], [0.75, 0.75])
    assert hausdorff_nested(SQUARE, inner) == pytest.approx(0.25 * math.sqrt(2), abs=1e-7)
    assert hausdorff_nested(SQUARE, SQUARE) == 0.0
    half = Polytope.from_inequalities([[-1, 0], [0, -1], [1, 1]], [0, 0, 0.5])
    # the far corners (1,0) and (0,1) project onto the vertices (0.5,0) and (0,0.5)
    assert hausdorff_nested(SIMPLEX, half) == pytest.approx(0.5, abs=1e-7)


def test_hausdorff_requires_nesting():
    with pytest.raises(NotNested):
        hausdorff_nested(Polytope.box([0, 0], [0.5, 0.5]), SQUARE)


# --- independent oracles ------------------------------------------------------


def random_polytope(rng, q, m):
    """Box-bounded polytope with ``m`` random extra cuts through a ball around the origin."""
    normals = rng.normal(size=(m, q))
    normals /= np.linalg.norm(normals, axis=1)[:, None]
    offsets = rng.uniform(0.2, 1.0, size=m)
    A = np.vstack([normals, np.eye(q), -np.eye(q)])
    b = np.concatenate([offsets, np.full(2 * q, 1.5)])
    return A, b


def brute_force_vertices(A, b):
    q = A.shape[1]
    pts = []
    for rows in itertools.combinations(range(len(A)), q):
        sub = A[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        y = np.linalg.solve(sub, b[list(rows)])
        if np.all(A @ y <= b + 1e-9):
            if not any(np.max(np.abs(y - p)) <= 1e-8 for p in pts):
                pts.append(y)
    return np.array(pts)


@pytest.mark.parametrize("q", [2, 3])
def test_enumeration_matches_bruteforce(q):
    rng = np.random.default_rng(100 + q)
    for _ in range(50):
        A, b = random_polytope(rng, q, rng.integers(1, 10 - 2 * q + 1))
        ours = Polytope.from_inequalities(A, b).vertices
        assert same_points(ours, brute_force_vertices(A, b))


@pytest.mark.parametrize("q", [2, 3, 4])
def test_lp_matches_scipy_and_vertices(q):
    rng = np.random.default_rng(7 * q)
    for _ in range(10):
        A, b = random_polytope(rng, q, 6)
        poly = Polytope.from_inequalities(A, b)
        verts = poly.vertices
        for c in rng.normal(size=(5, q)):
            y, val = lp_max(poly, c)
            ref = linprog(-c, A_ub=A, b_ub=b, bounds=[(None, None)] * q, method="highs")
            assert val == pytest.approx(-ref.fun, abs=1e-8)
            assert val == pytest.approx(np.max(verts @ c), abs=1e-8)
            assert np.all(A @ y <= b + 1e-9)


def test_hausdorff_matches_generic_projection():
    rng = np.random.default_rng(3)
    for _ in range(5):
        A, b = random_polytope(rng, 2, 3)
        outer = Polytope.from_inequalities(A, b)
        cut = Halfspace(rng.normal(size=2), -0.1)
        inner = intersect(outer, cut)
        if len(inner.vertices) == 0:
            continue
        best = 0.0
        for v in outer.vertices:
            res = minimize(
                lambda y: np.sum((y - v) ** 2),
                inner.vertices.mean(axis=0),
                constraints=[{"type": "ineq", "fun": lambda y: inner.b - inner.A @ y}],
                method="SLSQP",
                options={"ftol": 1e-14, "maxiter": 500},
            )
            best = max(best, math.sqrt(res.fun))
        assert hausdorff_nested(outer, inner) == pytest.approx(best, abs=1e-6)


# --- properties ---------------------------------------------------------------

cut_strategy = st.tuples(
    st.floats(-1, 1, allow_nan=False), st.floats(-1, 1, allow_nan=False), st.floats(-1, 1, allow_nan=False)
).filter(lambda t: abs(t[0]) + abs(t[1]) > 1e-3)


@settings(max_examples=60, deadline=None)
@given(st.lists(cut_strategy, min_size=1, max_size=5))
def test_cut_sequence_is_nested_and_matches_scratch(cuts):
    poly = SQUARE
    poly.vertices
    for a1, a2, off in cuts:
        new = intersect(poly, Halfspace([a1, a2], off))
        if len(new.vertices):
            assert np.all(poly.contains(new.vertices, tol=1e-9))
        assert same_points(new.vertices, enumerate_vertices(Polytope(new.halfspaces)))
        poly = new


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_redundant_halfspace_does_not_change_vertices(seed):
    rng = np.random.default_rng(seed)
    A, b = random_polytope(rng, 3, 3)
    poly = Polytope.from_inequalities(A, b)
    d = rng.normal(size=3)
    _, top = lp_max(poly, d)
    # {d.y <= top + slack} is implied by the polytope
    bigger = intersect(poly, Halfspace.upper(d, top + rng.uniform(0, 1)))
    assert same_points(bigger.vertices, poly.vertices)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_vertices_are_sorted_feasible_and_extreme(seed):
    rng = np.random.default_rng(seed)
    q = int(rng.integers(2, 5))
    A, b = random_polytope(rng, q, 4)
    poly = Polytope.from_inequalities(A, b)
    V = poly.vertices
    assert np.all(A @ V.T <= b[:, None] + 1e-9)
    assert [tuple(v) for v in V] == sorted(tuple(v) for v in V)
    for v in V:
        active = A[np.abs(A @ v - b) <= 1e-9]
        assert np.linalg.matrix_rank(active) == q


@pytest.mark.parametrize("q, m, seed", [(3, 70, 1), (4, 40, 2)])
def test_large_enumeration_matches_bruteforce(q, m, seed):
    # enough rows that the box replay path is taken instead of subset solves
    assert math.comb(m + 2 * q, q) > 50_000
    rng = np.random.default_rng(seed)
    A, b = random_polytope(rng, q, m)
    # half of the rows tangent to the unit sphere, as the outer approximation builds them
    b[: m // 2] = 1.0
    ours = Polytope.from_inequalities(A, b).vertices
    assert same_points(ours, brute_force_vertices(A, b))
