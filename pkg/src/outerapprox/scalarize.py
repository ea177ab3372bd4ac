"""Norm-minimising and weighted-sum scalarizations, and the cuts they produce.

The norm-minimising problem at a reference point ``v`` is::

    min ||z||_M   s.t.  G (Gamma(x) - z - v) <= 0,  w.(v + z) <= gamma,  x in X

It is solved through the smooth surrogate ``0.5 z^T M z`` (same minimiser).
The cut normal ``g = M z / ||z||_M`` has unit dual norm and defines the
supporting halfspace ``{y : g.y >= g.(v + z)}`` of the slice.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .barrier import (
    Constraint,
    ConvexProgram,
    LinearConstraints,
    SmoothFunction,
    barrier_solve,
)
from .errors import DegenerateCut
from .metric import m_norm
from .polytope import Halfspace
from .problems import ProblemSpec

SEPARATION_TOL = 1e-8
GAP_TOL = 1e-18
REL_GAP_TOL = 1e-9


class CutPoint(str, enum.Enum):
    IMAGE = "image"
    BOUNDARY = "boundary"


@dataclass
class ScalarizationResult:
    v: np.ndarray
    x_star: np.ndarray
    z_star: np.ndarray
    value: float
    cut_normal: Optional[np.ndarray]
    y_boundary: np.ndarray
    y_image: np.ndarray
    slice_multiplier: float  # normalised like cut_normal
    gamma: float
    slice_direction: np.ndarray
    status: str = "optimal"

    @property
    def degenerate(self) -> bool:
        return self.cut_normal is None


class _Lifted(Constraint):
    """An x-space constraint block viewed in the joint ``(x, z)`` space."""

    def __init__(self, inner: Constraint, n: int, total: int):
        self.inner = inner
        self.n = n
        self.total = total
        self.size = inner.size

    def values(self, u):
        return self.inner.values(u[: self.n])

    def jacobian(self, u):
        J = self.inner.jacobian(u[: self.n])
        out = np.zeros((J.shape[0], self.total))
        out[:, : self.n] = J
        return out

    def weighted_hessian(self, u, weights):
        H = self.inner.weighted_hessian(u[: self.n], weights)
        if H is None:
            return None
        out = np.zeros((self.total, self.total))
        out[: self.n, : self.n] = H
        return out


class _ConeBlock(Constraint):
    """Rows ``G (Gamma(x) - z - v) <= 0``."""

    def __init__(self, problem: ProblemSpec, v: np.ndarray):
        self.G = problem.cone_matrix
        self.gm = problem.gamma_map
        self.v = v
        self.n = problem.n
        self.size = problem.q

    def values(self, u):
        n = self.n
        return self.G @ (self.gm.value(u[:n]) - u[n:] - self.v)

    def jacobian(self, u):
        n = self.n
        return np.hstack([self.G @ self.gm.jacobian(u[:n]), -self.G])

    def weighted_hessian(self, u, weights):
        n = self.n
        Hx = np.einsum("j,jab->ab", self.G.T @ weights, self.gm.hessian(u[:n]))
        if not np.any(Hx):
            return None
        out = np.zeros((n + len(self.v), n + len(self.v)))
        out[:n, :n] = Hx
        return out


def _lift(problem: ProblemSpec, total: int):
    return [_Lifted(c, problem.n, total) for c in problem.feasible_set]


def _interior_start(problem: ProblemSpec, v: np.ndarray) -> np.ndarray:
    y0 = problem.gamma(problem.x0)
    c = problem.interior_cone_dir
    w = problem.slice_direction
    room = problem.slice_level - w @ y0
    delta = min(1.0, 0.5 * room / float(w @ c))
    return np.concatenate([problem.x0, y0 + delta * c - v])


def _slice_multiplier(problem: ProblemSpec, g: np.ndarray, cone_duals: np.ndarray, slice_dual: float) -> float:
    """Normalised slice multiplier ``lam`` in ``g = G^T mu - lam w``.

    Barrier duals of nearly active rows carry the rounding error of tiny
    slacks, so when the active cone rows leave the system determined ``lam``
    is recomputed from this stationarity identity with the exact ``g``.
    """
    scale = float(np.sum(cone_duals)) + slice_dual
    if not slice_dual > 1e-6 * scale:
        return slice_dual
    active = cone_duals > 1e-6 * scale
    if np.count_nonzero(active) + 1 > problem.q:
        return slice_dual
    w = problem.slice_direction
    K = np.column_stack([problem.cone_matrix[active].T, -w])
    sol, *_ = np.linalg.lstsq(K, g, rcond=None)
    if np.linalg.norm(K @ sol - g) > 1e-8 or sol[-1] < 0 or np.any(sol[:-1] < 0):
        return slice_dual
    return float(sol[-1])


def solve_norm_min(
    problem: ProblemSpec,
    v,
    M=None,
    tol: float = GAP_TOL,
    rel_tol: float = REL_GAP_TOL,
) -> ScalarizationResult:
    """``d_M(v, A)`` and its supporting data by the norm-minimising scalarization."""
    v = np.asarray(v, dtype=float)
    q, n = problem.q, problem.n
    Mm = np.eye(q) if M is None else np.asarray(M, dtype=float)
    total = n + q
    Hobj = np.zeros((total, total))
    Hobj[n:, n:] = Mm
    w = problem.slice_direction
    slice_row = np.concatenate([np.zeros(n), w])[None, :]
    gamma = problem.slice_level

    def f(u):
        z = u[n:]
        return 0.5 * float(z @ Mm @ z)

    def grad(u):
        g = np.zeros(total)
        g[n:] = Mm @ u[n:]
        return g

    cons = _lift(problem, total) + [
        _ConeBlock(problem, v),
        LinearConstraints(slice_row, [gamma - w @ v]),
    ]
    prog = ConvexProgram(
        n_vars=total,
        objective=SmoothFunction(value=f, grad=grad, hess=lambda u: Hobj),
        constraints=cons,
        x0=_interior_start(problem, v),
    )
    res = barrier_solve(prog, tol=tol, rel_tol=rel_tol)
    x, z = res.x[:n], res.x[n:]
    value = m_norm(Mm, z)
    if value > SEPARATION_TOL:
        g = Mm @ z / value
        lam_hat = _slice_multiplier(problem, g, res.duals[-2] / value, float(res.duals[-1][0]) / value)
    else:
        g = None
        lam_hat = 0.0
    return ScalarizationResult(
        v=v,
        x_star=x,
        z_star=z,
        value=value,
        cut_normal=g,
        y_boundary=v + z,
        y_image=problem.gamma(x),
        slice_multiplier=lam_hat,
        gamma=gamma,
        slice_direction=w,
    )


def extract_cut(result: ScalarizationResult, mode=CutPoint.IMAGE) -> Halfspace:
    """Supporting halfspace ``{y : g.y >= offset}`` from a scalarization.

    ``BOUNDARY`` anchors the hyperplane at ``v + z``.  ``IMAGE`` anchors it at
    ``Gamma(x)``, lowered by ``lam * (gamma - w.Gamma(x))`` where ``lam`` is the
    normalised slice multiplier; the correction vanishes unless the slice
    constraint binds, and without it the image-point cut would slice into the
    set whenever it does.
    """
    mode = CutPoint(mode)
    if result.cut_normal is None or result.value <= SEPARATION_TOL:
        raise DegenerateCut(f"scalarization value {result.value:.3e} gives no cut")
    g = result.cut_normal
    if mode is CutPoint.BOUNDARY:
        offset = float(g @ result.y_boundary)
    else:
        y = result.y_image
        offset = float(g @ y) - result.slice_multiplier * (result.gamma - float(result.slice_direction @ y))
    return Halfspace(g, offset)


def weighted_sum(problem: ProblemSpec, omega, tol: float = 1e-11) -> tuple[np.ndarray, float]:
    """Minimise ``omega . Gamma(x)`` over X.

    Returns the minimiser and a certified lower bound on the optimal value
    (objective minus the barrier duality gap), so ``{y : omega.y >= support}``
    is guaranteed to contain the upper image.
    """
    omega = np.asarray(omega, dtype=float)
    gm = problem.gamma_map
    # omega must lie in the dual cone: omega = G^T mu with mu >= 0
    mu = np.linalg.solve(problem.cone_matrix.T, omega)
    if np.any(mu < -1e-12) or not np.any(omega):
        raise ValueError("omega is not a nonzero element of the dual cone")
    prog = ConvexProgram(
        n_vars=problem.n,
        objective=SmoothFunction(
            value=lambda x: float(omega @ gm.value(x)),
            grad=lambda x: gm.jacobian(x).T @ omega,
            hess=lambda x: np.einsum("j,jab->ab", omega, gm.hessian(x)),
        ),
        constraints=list(problem.feasible_set),
        x0=problem.x0,
    )
    res = barrier_solve(prog, tol=tol)
    return res.x, res.obj - res.gap


def dual_norm(M, g) -> float:
    """``||g||_{M^-1}``."""
    g = np.asarray(g, dtype=float)
    return math.sqrt(float(g @ np.linalg.solve(np.asarray(M, dtype=float), g)))
