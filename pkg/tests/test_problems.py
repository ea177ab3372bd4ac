import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from outerapprox.errors import CapabilityError, NotSpd
from outerapprox.problems import (
    get_problem,
    make_ball,
    make_example2,
    make_jahn,
    oracle_distance,
    sample_feasible,
    sample_upper_image_slice,
    transform_problem,
)

NAMES = ["ball2", "ball3", "ball4", "example2", "jahn"]


def test_ball_levels():
    assert make_ball(2).slice_level == pytest.approx(3 + math.sqrt(2), abs=1e-12)
    assert make_ball(3).slice_level == pytest.approx(3 + math.sqrt(3) + 1, abs=1e-12)
    ball = make_ball(2)
    assert np.allclose(ball.gamma(ball.x0), [1, 1])
    assert ball.slice_direction @ ball.gamma(ball.x0) == pytest.approx(2)


@pytest.mark.parametrize("q", [1, 5])
def test_ball_dimension_guard(q):
    with pytest.raises(CapabilityError):
        make_ball(q)


def test_example2_images_and_level():
    prob = make_example2()
    assert np.allclose(prob.gamma([1, 1]), [0, 5, 10])
    assert np.allclose(prob.gamma([2, 3]), [5, 0, 5])
    # X has vertices (0,0), (10,0), (0,4), (2,4); the sums of squared
    # distances there are 35, 195, 35 and 19
    assert prob.slice_level == pytest.approx(196)


def test_jahn_images_feasibility_and_level():
    prob = make_jahn()
    assert np.allclose(prob.gamma([1, 1]), [-1, 2])
    assert np.allclose(prob.gamma([0, 0]), [0, 0])
    assert prob.x_feasible([[1, 1], [0, 0], [-1.5, 2.25]], tol=1e-12).all()
    assert not prob.x_feasible([[2, 0]]).any()
    # w.Gamma = x2^2 peaks at the corner x2 = 2.25
    assert prob.slice_level == pytest.approx(2.25**2 + 1, abs=1e-6)


def test_unknown_problem():
    with pytest.raises(CapabilityError):
        get_problem("ball9")
    with pytest.raises(CapabilityError):
        get_problem("rosenbrock")


@pytest.mark.parametrize("name", NAMES)
def test_slice_contains_image_of_x(name):
    prob = get_problem(name)
    X = sample_feasible(prob, 1000, np.random.default_rng(1))
    assert np.all(prob.gamma_map.batch(X) @ prob.slice_direction < prob.slice_level)


@pytest.mark.parametrize("name", NAMES)
def test_cone_representation(name):
    prob = get_problem(name)
    assert np.all(prob.cone_matrix @ prob.interior_cone_dir > 0)
    Y = np.random.default_rng(2).normal(size=(200, prob.q))
    assert np.array_equal(prob.in_cone(Y), np.all(Y >= 0, axis=1))


@pytest.mark.parametrize("name", NAMES)
def test_objective_is_cone_convex(name):
    prob = get_problem(name)
    rng = np.random.default_rng(3)
    X = sample_feasible(prob, 400, rng)
    for a, b in zip(X[::2], X[1::2]):
        lam = rng.uniform()
        gap = lam * prob.gamma(a) + (1 - lam) * prob.gamma(b) - prob.gamma(lam * a + (1 - lam) * b)
        assert np.all(prob.cone_matrix @ gap >= -1e-9)


@pytest.mark.parametrize("name", NAMES)
def test_slice_samples_lie_in_upper_image(name):
    prob = get_problem(name)
    Y = sample_upper_image_slice(prob, 300, np.random.default_rng(4))
    assert np.all(Y @ prob.slice_direction <= prob.slice_level + 1e-9)


def test_transform_examples():
    ball = make_ball(2)
    assert transform_problem(ball, np.eye(2)) is ball
    moved = transform_problem(ball, np.diag([2.0, 1.0]))
    assert np.allclose(moved.gamma(np.ones(2)), [2, 1])
    assert np.allclose(moved.cone_matrix, np.diag([0.5, 1]))
    assert np.allclose(moved.slice_direction, [0.5, 1])
    assert moved.slice_level == ball.slice_level
    with pytest.raises(NotSpd):
        transform_problem(ball, [[1.0, 2.0], [2.0, 1.0]])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_transform_preserves_slice_functional(seed):
    rng = np.random.default_rng(seed)
    B = rng.normal(size=(3, 3))
    T = B @ B.T + 0.5 * np.eye(3)
    prob = make_example2()
    moved = transform_problem(prob, T)
    for x in sample_feasible(prob, 10, rng):
        assert moved.slice_direction @ moved.gamma(x) == pytest.approx(prob.slice_direction @ prob.gamma(x), rel=1e-10)


def test_transform_round_trip():
    rng = np.random.default_rng(5)
    prob = make_jahn()
    T = np.array([[2.0, 0.3], [0.3, 1.0]])
    back = transform_problem(transform_problem(prob, T), np.linalg.inv(T))
    for x in sample_feasible(prob, 50, rng):
        assert np.allclose(back.gamma(x), prob.gamma(x), atol=1e-9)
    assert np.allclose(back.cone_matrix, prob.cone_matrix, atol=1e-9)
    assert np.allclose(back.slice_direction, prob.slice_direction, atol=1e-9)
    for v in rng.uniform(-2, 3, size=(5, 2)):
        assert oracle_distance(back, v) == pytest.approx(oracle_distance(prob, v), abs=1e-9)


def test_oracle_examples():
    ball = make_ball(2)
    assert oracle_distance(ball, [0, 0]) == pytest.approx(math.sqrt(2) - 1, abs=1e-3)
    assert oracle_distance(ball, [1, 1]) == 0.0
    # straight below the ball: the nearest point is the bottom (1, 0)
    assert oracle_distance(ball, [1, -1]) == pytest.approx(1.0, abs=1e-3)


def test_oracle_against_ball_closed_form():
    ball = make_ball(3)
    rng = np.random.default_rng(6)
    for _ in range(20):
        u = -np.abs(rng.normal(size=3))
        u /= np.linalg.norm(u)
        v = np.ones(3) + (1 + rng.uniform(0.05, 1.0)) * u
        assert oracle_distance(ball, v) == pytest.approx(np.linalg.norm(v - 1) - 1, abs=1e-3)


def test_oracle_requires_benchmark():
    from dataclasses import replace

    custom = replace(make_ball(2), family=None)
    with pytest.raises(CapabilityError):
        oracle_distance(custom, [0, 0])
