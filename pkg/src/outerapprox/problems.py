"""Benchmark convex vector optimization problems and a brute-force distance oracle."""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .barrier import Constraint, FunctionConstraint, LinearConstraints, SmoothFunction
from .errors import CapabilityError, NotSpd
from .metric import SpdMatrix
from .polytope import Polytope, enumerate_vertices

PROBLEM_NAMES = ("ball2", "ball3", "ball4", "example2", "jahn")
ORACLE_TOL = 1e-3


# --- objective maps -----------------------------------------------------------


class ObjectiveMap:
    """Smooth map ``x -> Gamma(x)`` from R^n to R^q with derivative oracles."""

    q: int
    n: int

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x: np.ndarray) -> np.ndarray:
        """Stacked Hessians, shape ``(q, n, n)``."""
        raise NotImplementedError

    def batch(self, X: np.ndarray) -> np.ndarray:
        """Evaluate on the rows of ``X``."""
        return np.array([self.value(x) for x in X])

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))


class IdentityMap(ObjectiveMap):
    def __init__(self, q: int):
        self.q = self.n = q
        self._eye = np.eye(q)
        self._zero = np.zeros((q, q, q))

    def value(self, x):
        return np.array(x, dtype=float)

    def jacobian(self, x):
        return self._eye

    def hessian(self, x):
        return self._zero

    def batch(self, X):
        return np.array(X, dtype=float)


class SquaredDistances(ObjectiveMap):
    """``Gamma_i(x) = ||x - a_i||^2``."""

    def __init__(self, anchors):
        self.anchors = np.asarray(anchors, dtype=float)
        self.q, self.n = self.anchors.shape
        self._hess = np.broadcast_to(2.0 * np.eye(self.n), (self.q, self.n, self.n)).copy()

    def value(self, x):
        d = x - self.anchors
        return np.einsum("ij,ij->i", d, d)

    def jacobian(self, x):
        return 2.0 * (x - self.anchors)

    def hessian(self, x):
        return self._hess

    def batch(self, X):
        X = np.asarray(X, dtype=float)
        return np.stack([np.sum((X - a) ** 2, axis=1) for a in self.anchors], axis=1)


class JahnMap(ObjectiveMap):
    """``Gamma(x) = (-x1, x1 + x2^2)``."""

    q = 2
    n = 2

    def value(self, x):
        return np.array([-x[0], x[0] + x[1] ** 2])

    def jacobian(self, x):
        return np.array([[-1.0, 0.0], [1.0, 2.0 * x[1]]])

    def hessian(self, x):
        return np.array([[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 2.0]]])

    def batch(self, X):
        X = np.asarray(X, dtype=float)
        return np.stack([-X[:, 0], X[:, 0] + X[:, 1] ** 2], axis=1)


class TransformedMap(ObjectiveMap):
    """``x -> T Gamma(x)``."""

    def __init__(self, T: np.ndarray, inner: ObjectiveMap):
        self.T = np.asarray(T, dtype=float)
        self.inner = inner
        self.q, self.n = inner.q, inner.n

    def value(self, x):
        return self.T @ self.inner.value(x)

    def jacobian(self, x):
        return self.T @ self.inner.jacobian(x)

    def hessian(self, x):
        return np.einsum("ij,jab->iab", self.T, self.inner.hessian(x))

    def batch(self, X):
        return self.inner.batch(X) @ self.T.T


# --- problem container --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A bounded convex vector optimization problem together with its slice.

    The ordering cone is ``{y : G y >= 0}`` for the invertible ``cone_matrix``
    ``G``; the slice keeps ``slice_direction . y <= slice_level``.
    """

    name: str
    gamma_map: ObjectiveMap
    feasible_set: tuple
    x0: np.ndarray
    cone_matrix: np.ndarray
    slice_direction: np.ndarray
    slice_level: float
    interior_cone_dir: np.ndarray
    box: tuple
    family: Optional[str] = None
    transform: Optional[np.ndarray] = None

    @property
    def q(self) -> int:
        return self.gamma_map.q

    @property
    def n(self) -> int:
        return self.gamma_map.n

    def gamma(self, x) -> np.ndarray:
        return self.gamma_map.value(np.asarray(x, dtype=float))

    def in_cone(self, c, tol: float = 0.0):
        return np.all(np.asarray(c) @ self.cone_matrix.T >= -tol, axis=-1)

    def dual_generators(self) -> np.ndarray:
        """Rows generate the dual cone: for ``C = {y : G y >= 0}`` these are the rows of ``G``."""
        return self.cone_matrix.copy()

    def x_feasible(self, X, tol: float = 0.0) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        ok = np.ones(len(X), dtype=bool)
        for c in self.feasible_set:
            ok &= np.array([np.all(c.values(x) <= tol) for x in X])
        return ok

    def check(self):
        """Assert the structural invariants; returns self for chaining."""
        G = self.cone_matrix
        if abs(np.linalg.det(G)) < 1e-12:
            raise ValueError("cone matrix must be invertible")
        if not np.all(np.linalg.solve(G.T, self.slice_direction) > 0):
            raise ValueError("slice direction is not in the interior of the dual cone")
        if not np.all(G @ self.interior_cone_dir > 0):
            raise ValueError("interior cone direction is not interior")
        if not self.slice_direction @ self.gamma(self.x0) < self.slice_level:
            raise ValueError("Gamma(x0) is not strictly inside the slice")
        return self


def _ball_constraint(q: int) -> Constraint:
    e = np.ones(q)
    eye2 = 2.0 * np.eye(q)
    return FunctionConstraint(SmoothFunction(
        value=lambda x: float((x - e) @ (x - e)) - 1.0,
        grad=lambda x: 2.0 * (x - e),
        hess=lambda x: eye2,
    ))


def make_ball(q: int) -> ProblemSpec:
    """Identity objective over the unit ball centred at ``(1, ..., 1)``."""
    if q not in (2, 3, 4):
        raise CapabilityError(f"ball problem supports q in {{2, 3, 4}}, got {q}")
    ones = np.ones(q)
    beta = q + math.sqrt(q)  # support of the ball in direction (1,...,1)
    return ProblemSpec(
        name=f"ball{q}",
        gamma_map=IdentityMap(q),
        feasible_set=(_ball_constraint(q),),
        x0=ones.copy(),
        cone_matrix=np.eye(q),
        slice_direction=ones.copy(),
        slice_level=beta + 1.0,
        interior_cone_dir=ones.copy(),
        box=(np.zeros(q), 2.0 * ones),
        family=f"ball{q}",
    ).check()


EX2_ANCHORS = np.array([[1.0, 1.0], [2.0, 3.0], [4.0, 2.0]])
EX2_A = np.array([[1.0, 2.0], [-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
EX2_B = np.array([10.0, 0.0, 10.0, 0.0, 4.0])


def make_example2() -> ProblemSpec:
    """Three squared distances over a polygon in the plane (q = 3, n = 2)."""
    gm = SquaredDistances(EX2_ANCHORS)
    ones = np.ones(3)
    # a convex function attains its maximum over a polytope at a vertex
    verts = enumerate_vertices(Polytope.from_inequalities(EX2_A, EX2_B))
    beta = max(float(ones @ gm.value(v)) for v in verts)
    return ProblemSpec(
        name="example2",
        gamma_map=gm,
        feasible_set=(LinearConstraints(EX2_A, EX2_B),),
        x0=np.array([2.0, 2.0]),
        cone_matrix=np.eye(3),
        slice_direction=ones,
        slice_level=beta + 1.0,
        interior_cone_dir=ones.copy(),
        box=(np.array([0.0, 0.0]), np.array([10.0, 4.0])),
        family="example2",
    ).check()


_JAHN_BOX = (np.array([-1.5, 0.0]), np.array([1.0, 2.25]))


def _jahn_constraints():
    return (
        FunctionConstraint(SmoothFunction(
            value=lambda x: float(x[0] ** 2 - x[1]),
            grad=lambda x: np.array([2.0 * x[0], -1.0]),
            hess=lambda x: np.array([[2.0, 0.0], [0.0, 0.0]]),
        )),
        LinearConstraints([[1.0, 2.0]], [3.0]),
    )


def _jahn_feasible(X):
    return (X[:, 0] ** 2 - X[:, 1] <= 0.0) & (X[:, 0] + 2.0 * X[:, 1] <= 3.0)


@functools.lru_cache(maxsize=None)
def _jahn_beta() -> float:
    """max of (1,1).Gamma over X by a 1e-3 grid followed by zoomed grids."""
    lo, hi = _JAHN_BOX
    f = lambda X: X[:, 1] ** 2  # (1,1).Gamma(x) = x2^2
    step = 1e-3
    g1 = np.arange(lo[0], hi[0] + step / 2, step)
    g2 = np.arange(lo[1], hi[1] + step / 2, step)
    X = np.stack(np.meshgrid(g1, g2, indexing="ij"), axis=-1).reshape(-1, 2)
    X = X[_jahn_feasible(X)]
    best = X[np.argmax(f(X))]
    for _ in range(6):
        offs = np.linspace(-2 * step, 2 * step, 41)
        Z = best + np.stack(np.meshgrid(offs, offs, indexing="ij"), axis=-1).reshape(-1, 2)
        Z = Z[_jahn_feasible(Z)]
        best = Z[np.argmax(f(Z))]
        step /= 10.0
    return float(f(best[None])[0])


def make_jahn() -> ProblemSpec:
    """``(-x1, x1 + x2^2)`` over ``{x1^2 <= x2, x1 + 2 x2 <= 3}``."""
    ones = np.ones(2)
    return ProblemSpec(
        name="jahn",
        gamma_map=JahnMap(),
        feasible_set=_jahn_constraints(),
        x0=np.array([0.0, 0.5]),
        cone_matrix=np.eye(2),
        slice_direction=ones,
        slice_level=_jahn_beta() + 1.0,
        interior_cone_dir=ones.copy(),
        box=_JAHN_BOX,
        family="jahn",
    ).check()


def get_problem(name: str) -> ProblemSpec:
    makers = {
        "ball2": lambda: make_ball(2),
        "ball3": lambda: make_ball(3),
        "ball4": lambda: make_ball(4),
        "example2": make_example2,
        "jahn": make_jahn,
    }
    if name not in makers:
        if name.startswith("ball") and name[4:].isdigit():
            return make_ball(int(name[4:]))
        raise CapabilityError(f"unknown problem {name!r}; choose from {', '.join(PROBLEM_NAMES)}")
    return makers[name]()


def transform_problem(problem: ProblemSpec, T) -> ProblemSpec:
    """Image of ``problem`` under the symmetric positive definite map ``T``.

    Objective becomes ``T Gamma``, the cone ``T C`` (matrix ``G T^-1``), the
    slice direction ``T^-1 w`` and the level is unchanged.
    """
    T = SpdMatrix(T) if not isinstance(T, SpdMatrix) else T
    Tm = T.entries
    Tinv = np.linalg.inv(Tm)
    if np.allclose(Tm, np.eye(Tm.shape[0]), rtol=0, atol=0):
        return problem
    prev = np.eye(problem.q) if problem.transform is None else problem.transform
    return replace(
        problem,
        name=f"{problem.name}@T",
        gamma_map=TransformedMap(Tm, problem.gamma_map),
        cone_matrix=problem.cone_matrix @ Tinv,
        slice_direction=Tinv @ problem.slice_direction,
        interior_cone_dir=Tm @ problem.interior_cone_dir,
        transform=Tm @ prev,
    )


# --- sampling -----------------------------------------------------------------


def sample_feasible(problem: ProblemSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples from X by rejection from the bounding box."""
    lo, hi = problem.box
    out = []
    got = 0
    while got < count:
        X = rng.uniform(lo, hi, size=(4 * count, len(lo)))
        X = X[problem.x_feasible(X)]
        out.append(X)
        got += len(X)
    return np.vstack(out)[:count]


def sample_upper_image_slice(problem: ProblemSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    """Points ``Gamma(x) + c`` of the slice: random feasible ``x`` and cone offsets ``c``.

    A third of the samples use ``c = 0`` and half of the rest sit close to the
    boundary so the checks are not all deep in the interior.
    """
    X = sample_feasible(problem, count, rng)
    Y = problem.gamma_map.batch(X)
    Ginv = np.linalg.inv(problem.cone_matrix)
    w = problem.slice_direction
    room = problem.slice_level - Y @ w
    S = rng.exponential(size=(count, problem.q))
    C = S @ Ginv.T
    frac = rng.uniform(0.0, 1.0, size=count)
    frac[: count // 3] = 0.0
    frac[count // 3: 2 * count // 3] *= 1e-3
    scale = frac * room / (C @ w)
    return Y + scale[:, None] * C


# --- brute-force oracle -------------------------------------------------------


def _face_systems(K, w_row, M, q):
    """Precompute the per-face linear maps for the cone-plus-slice projection QP."""
    systems = []
    for r in range(q + 1):
        for F in itertools.combinations(range(q), r):
            F = list(F)
            KF = K[:, F]
            H = KF.T @ M @ KF
            for active in (False, True):
                if r == 0 and active:
                    continue
                if not active:
                    Hinv = np.linalg.inv(H) if r else np.zeros((0, 0))
                    systems.append((F, active, Hinv, None))
                else:
                    a = w_row[F]
                    KKT = np.zeros((r + 1, r + 1))
                    KKT[:r, :r] = H
                    KKT[:r, r] = a
                    KKT[r, :r] = a
                    systems.append((F, active, np.linalg.inv(KKT), a))
    return systems


def _cone_slice_distance(P, v, M, K, w, gamma, systems):
    """Exact ``min ||p + K s - v||_M`` over ``s >= 0`` and ``w.(p + K s) <= gamma``, per row of P.

    Each face (support of ``s`` and whether the slice binds) is solved in closed
    form; the smallest feasible face value is the optimum.
    """
    R = P - v
    N = len(P)
    room = gamma - P @ w
    w_row = w @ K
    MKR = R @ (M @ K)  # column j: (K^T M r)_j
    base = np.einsum("ij,jk,ik->i", R, M, R)
    KMK = K.T @ M @ K
    best = np.where(room >= -1e-10 * max(1.0, abs(gamma)), base, np.inf)
    tol = 1e-10 * max(1.0, abs(gamma))
    for F, active, Hinv, a in systems:
        r = len(F)
        if r == 0:
            continue
        rhs = -MKR[:, F]
        if not active:
            S = rhs @ Hinv.T
        else:
            S = (np.hstack([rhs, room[:, None]]) @ Hinv.T)[:, :r]
        ok = np.all(S >= -1e-12, axis=1)
        ok &= room - S @ w_row[F] >= -tol
        H = KMK[np.ix_(F, F)]
        val = base - 2.0 * np.einsum("ij,ij->i", S, rhs) + np.einsum("ij,jk,ik->i", S, H, S)
        best = np.where(ok & (val < best), val, best)
    return np.sqrt(np.maximum(best, 0.0))


def _sphere(q, angles):
    """Points ``e + u(angles)`` on the unit sphere centred at the all-ones vector."""
    A = np.atleast_2d(angles)
    if q == 2:
        U = np.stack([np.cos(A[:, 0]), np.sin(A[:, 0])], axis=1)
    elif q == 3:
        p, t = A[:, 0], A[:, 1]
        U = np.stack([np.sin(p) * np.cos(t), np.sin(p) * np.sin(t), np.cos(p)], axis=1)
    else:
        a, b, c = A[:, 0], A[:, 1], A[:, 2]
        U = np.stack([
            np.cos(a),
            np.sin(a) * np.cos(b),
            np.sin(a) * np.sin(b) * np.cos(c),
            np.sin(a) * np.sin(b) * np.sin(c),
        ], axis=1)
    return 1.0 + U


def _grid(lo, hi, counts):
    axes = [np.linspace(l, h, c) for l, h, c in zip(lo, hi, counts)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(lo))


@functools.lru_cache(maxsize=None)
def _oracle_family(family: str):
    """(parameter sampler, parameter->x map, feasibility test, base problem)."""
    if family.startswith("ball"):
        q = int(family[4:])
        lo = np.zeros(q - 1)
        hi = np.full(q - 1, math.pi)
        hi[-1] = 2.0 * math.pi
        counts = {2: (200_000,), 3: (600, 600), 4: (60, 60, 60)}[q]
        coarse = _grid(lo, hi, counts)
        return coarse, functools.partial(_sphere, q), None, make_ball(q)
    if family == "example2":
        coarse = _grid([0.0, 0.0], [10.0, 4.0], (2001, 801))
        feas = lambda X: np.all(X @ EX2_A.T <= EX2_B + 1e-12, axis=1)
        return coarse[feas(coarse)], (lambda X: X), feas, make_example2()
    if family == "jahn":
        lo, hi = _JAHN_BOX
        coarse = _grid(lo, hi, (1301, 1201))
        return coarse[_jahn_feasible(coarse)], (lambda X: X), _jahn_feasible, make_jahn()
    raise CapabilityError(f"no oracle for family {family!r}")


@functools.lru_cache(maxsize=None)
def _family_images(family: str):
    coarse, to_x, _, base = _oracle_family(family)
    return base.gamma_map.batch(to_x(coarse))


def oracle_distance(problem: ProblemSpec, v, M=None) -> float:
    """Brute-force ``d_M(v, A)`` for the benchmark problems (and their T-images).

    X is sampled on a dense grid (angle grid on the sphere for the ball, which
    suffices because ball + C = sphere + C); the inner projection onto
    ``Gamma(x) + C`` within the slice is solved exactly face by face, and the
    best sample is refined by five zoomed grids.  Accurate to about 1e-3 or
    better.
    """
    if problem.family is None:
        raise CapabilityError("oracle only covers the built-in benchmark problems")
    coarse, to_x, feas, base = _oracle_family(problem.family)
    q = problem.q
    M = np.eye(q) if M is None else np.asarray(M, dtype=float)
    v = np.asarray(v, dtype=float)
    if problem.transform is not None:
        # d_M(v, T A) = d_{T M T}(T^-1 v, A)
        T = problem.transform
        v = np.linalg.solve(T, v)
        M = T.T @ M @ T
    K = np.linalg.inv(base.cone_matrix)
    w = base.slice_direction
    gamma = base.slice_level
    systems = _face_systems(K, w @ K, M, q)
    Y = _family_images(problem.family)
    d = _cone_slice_distance(Y, v, M, K, w, gamma, systems)
    i = int(np.argmin(d))
    best_val = float(d[i])
    if best_val == 0.0:
        return 0.0
    center = coarse[i]
    dim = coarse.shape[1]
    # initial spacing of the coarse grid along each axis
    step = np.array([np.ptp(coarse[:, j]) / max(len(np.unique(coarse[:, j])) - 1, 1) for j in range(dim)])
    per_axis = {1: 401, 2: 41, 3: 15}[dim]
    for _ in range(5):
        offs = _grid(-2 * step, 2 * step, (per_axis,) * dim)
        Z = center + offs
        if feas is not None:
            Z = Z[feas(Z)]
        if len(Z) == 0:
            break
        dz = _cone_slice_distance(base.gamma_map.batch(to_x(Z)), v, M, K, w, gamma, systems)
        j = int(np.argmin(dz))
        if dz[j] < best_val:
            best_val = float(dz[j])
            center = Z[j]
        step = step / 10.0
    return best_val
