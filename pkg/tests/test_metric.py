import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from outerapprox.errors import NoNormalsYet, NotSpd, ZeroNormal
from outerapprox.metric import (
    MetricState,
    SpdMatrix,
    jacobi_eigh,
    m_norm,
    materialize,
    push_normal,
    sigma_stats,
    spectral,
    sqrt_factor,
)


def pushed(q, normals, eps0=0.1):
    state = MetricState(q, eps0=eps0)
    for w in normals:
        state = push_normal(state, w)
    return state


def test_push_scales_to_unit():
    state = pushed(2, [(3, 0)])
    assert state.k == 1
    assert np.allclose(state.sigma, [[1, 0], [0, 0]])


def test_orthogonal_pushes_are_isotropic():
    state = pushed(2, [(1, 0), (0, 1)])
    assert np.allclose(state.sigma, 0.5 * np.eye(2))
    M = materialize(state)
    assert np.allclose(np.asarray(M), 0.6 * np.eye(2))
    assert spectral(M)[2] == pytest.approx(1.0)


def test_repeated_normal_conditioning():
    M = materialize(pushed(2, [(1, 0), (1, 0)]))
    assert np.allclose(np.asarray(M), np.diag([1.1, 0.1]))
    assert spectral(M)[2] == pytest.approx(math.sqrt(0.1 / 1.1), abs=1e-6)
    assert spectral(M)[2] == pytest.approx(0.301511, abs=1e-6)


def test_prior_before_first_cut():
    assert np.allclose(np.asarray(materialize(MetricState(2))), 0.6 * np.eye(2))
    M = materialize(pushed(2, [(1, 0), (-1, 0), (0, 1), (0, -1)]))
    assert np.allclose(np.asarray(M), 0.6 * np.eye(2))


def test_zero_normal():
    with pytest.raises(ZeroNormal):
        push_normal(MetricState(2), [0, 0])


@pytest.mark.parametrize(
    "entries, expected",
    [(np.eye(2), (1, 1, 1)), (np.diag([1.1, 0.1]), (0.1, 1.1, 0.301511)), (np.diag([4, 1]), (1, 4, 0.5))],
)
def test_spectral_examples(entries, expected):
    assert spectral(SpdMatrix(entries)) == pytest.approx(expected, abs=1e-6)


def test_sqrt_factor_examples():
    assert np.allclose(np.asarray(sqrt_factor(SpdMatrix(np.diag([4, 1])))), np.diag([2, 1]))
    assert np.allclose(np.asarray(sqrt_factor(SpdMatrix(np.eye(3)))), np.eye(3))
    M = np.array([[2.0, 1.0], [1.0, 2.0]])
    T = np.asarray(sqrt_factor(SpdMatrix(M)))
    assert np.max(np.abs(T @ T - M)) <= 1e-10
    assert np.allclose(np.linalg.eigvalsh(T), [1, math.sqrt(3)])


def test_m_norm_examples():
    assert m_norm(np.diag([4, 1]), [1, 1]) == pytest.approx(math.sqrt(5))
    assert m_norm(np.eye(3), [1, 2, 2]) == pytest.approx(3)
    assert m_norm(np.diag([4, 1]), [0, 0]) == 0


def test_sigma_stats_examples():
    assert sigma_stats(pushed(2, [(1, 0), (0, 1)])) == pytest.approx((0.5, 0.5))
    assert sigma_stats(pushed(2, [(1, 0), (1, 0)])) == pytest.approx((0, 1), abs=1e-12)
    s = 1 / math.sqrt(2)
    assert sigma_stats(pushed(2, [(1, 0), (0, 1), (s, s)])) == pytest.approx((1 / 3, 2 / 3))
    with pytest.raises(NoNormalsYet):
        sigma_stats(MetricState(2))


def test_not_spd():
    with pytest.raises(NotSpd):
        SpdMatrix([[1, 2], [2, 1]])
    with pytest.raises(NotSpd):
        SpdMatrix([[1, 0.5], [0.4, 1]])
    with pytest.raises(NotSpd):
        SpdMatrix(np.ones(3))


@pytest.mark.parametrize("q", [2, 3, 4])
def test_jacobi_matches_lapack(q):
    rng = np.random.default_rng(q)
    for _ in range(50):
        B = rng.normal(size=(q, q))
        A = B @ B.T
        w, V = jacobi_eigh(A)
        assert np.allclose(w, np.linalg.eigvalsh(A), atol=1e-12 * np.abs(w).max())
        assert np.allclose(V.T @ V, np.eye(q), atol=1e-12)
        assert np.allclose(V @ np.diag(w) @ V.T, A, atol=1e-11 * np.abs(A).max())


normal_lists = st.lists(
    st.lists(st.floats(-10, 10, allow_nan=False), min_size=3, max_size=3).filter(
        lambda v: np.linalg.norm(v) > 1e-3
    ),
    min_size=1,
    max_size=25,
)


@settings(max_examples=80, deadline=None)
@given(normal_lists, st.floats(0.01, 1.0))
def test_spectral_sandwich_and_trace(normals, eps0):
    state = pushed(3, normals, eps0)
    assert np.trace(state.sigma) == pytest.approx(1.0, abs=1e-10)
    lo, hi, theta = spectral(materialize(state))
    assert lo >= eps0 - 1e-10
    assert hi <= eps0 + 1 + 1e-10
    assert 0 < theta <= 1
    eta, _ = sigma_stats(state)
    assert theta >= math.sqrt((eps0 + max(eta, 0.0)) / (eps0 + 1)) - 1e-10


@settings(max_examples=40, deadline=None)
@given(normal_lists, st.integers(0, 1000))
def test_norm_equivalence(normals, seed):
    eps0 = 0.1
    M = materialize(pushed(3, normals, eps0))
    rng = np.random.default_rng(seed)
    for y in rng.normal(size=(100, 3)):
        n2 = np.linalg.norm(y)
        nm = m_norm(M, y)
        assert math.sqrt(eps0) * n2 <= nm + 1e-12
        assert nm <= math.sqrt(eps0 + 1) * n2 + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000))
def test_isometry_through_square_root(seed):
    rng = np.random.default_rng(seed)
    q = int(rng.integers(2, 5))
    B = rng.normal(size=(q, q))
    M = SpdMatrix(B @ B.T + 0.1 * np.eye(q))
    T = np.asarray(sqrt_factor(M))
    y = rng.normal(size=q)
    assert m_norm(M, y) == pytest.approx(np.linalg.norm(T @ y), rel=1e-10)
