"""Log-barrier path-following for small smooth convex programs.

Programs have the form ``min f0(x)  s.t.  f_i(x) <= 0``.  Inequalities come in
blocks so that linear rows and nonlinear functions can be evaluated in one
vectorised call each.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import Infeasible, MaxIter

MU = 20.0
T0 = 1.0
NEWTON_TOL = 1e-10
MAX_NEWTON = 200
MAX_OUTER = 60
PHASE1_TOL = 1e-8

_ALPHA = 0.01
_BETA = 0.5
_PURE_NEWTON = 0.05


@dataclass(frozen=True)
class SmoothFunction:
    """Scalar function with first and second derivative oracles."""

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]


class Constraint:
    """A block of inequalities ``f(x) <= 0``."""

    size: int

    def values(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def weighted_hessian(self, x: np.ndarray, weights: np.ndarray) -> Optional[np.ndarray]:
        """Return ``sum_i weights[i] * hess f_i(x)``, or None when every row is affine."""
        raise NotImplementedError


class LinearConstraints(Constraint):
    """Rows ``A x <= b``."""

    def __init__(self, A, b):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.asarray(b, dtype=float).reshape(-1)
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError("A and b disagree on the number of rows")
        self.size = self.A.shape[0]

    def values(self, x):
        return self.A @ x - self.b

    def jacobian(self, x):
        return self.A

    def weighted_hessian(self, x, weights):
        return None


class FunctionConstraint(Constraint):
    """A single smooth convex function ``f(x) <= 0``."""

    def __init__(self, fn: SmoothFunction):
        self.fn = fn
        self.size = 1

    def values(self, x):
        return np.array([self.fn.value(x)], dtype=float)

    def jacobian(self, x):
        return np.asarray(self.fn.grad(x), dtype=float).reshape(1, -1)

    def weighted_hessian(self, x, weights):
        return weights[0] * np.asarray(self.fn.hess(x), dtype=float)


@dataclass
class ConvexProgram:
    n_vars: int
    objective: SmoothFunction
    constraints: Sequence[Constraint] = field(default_factory=list)
    x0: Optional[np.ndarray] = None

    @property
    def n_constraints(self) -> int:
        return sum(c.size for c in self.constraints)

    def constraint_values(self, x: np.ndarray) -> np.ndarray:
        if not self.constraints:
            return np.zeros(0)
        return np.concatenate([c.values(x) for c in self.constraints])

    def strictly_feasible(self, x: np.ndarray) -> bool:
        v = self.constraint_values(x)
        return bool(np.all(v < 0.0)) and bool(np.all(np.isfinite(v)))


@dataclass
class BarrierResult:
    x: np.ndarray
    obj: float
    duals: list
    t: float
    gap: float
    newton_steps: int
    outer_iterations: int
    stalled: bool = False

    def __iter__(self):
        # allows ``x, obj = barrier_solve(...)``
        return iter((self.x, self.obj))


def _barrier_value(prog, x, t):
    vals = prog.constraint_values(x)
    if vals.size and not np.all(vals < 0.0):
        return np.inf
    return t * prog.objective.value(x) - np.sum(np.log(-vals))


def _center(prog, x, t, newton_tol, max_newton, stop):
    steps = 0
    n = prog.n_vars
    best = np.inf
    stalled = 0
    for _ in range(max_newton):
        grad = t * np.asarray(prog.objective.grad(x), dtype=float)
        H = t * np.asarray(prog.objective.hess(x), dtype=float)
        for c in prog.constraints:
            vals = c.values(x)
            w = 1.0 / (-vals)
            J = c.jacobian(x)
            grad = grad + J.T @ w
            H = H + J.T @ (J * (w * w)[:, None])
            Hc = c.weighted_hessian(x, w)
            if Hc is not None:
                H = H + Hc
        try:
            dx = np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError:
            dx = np.linalg.lstsq(H + 1e-14 * np.eye(n), -grad, rcond=None)[0]
        lam2 = float(-grad @ dx)
        if lam2 / 2.0 <= newton_tol:
            return x, steps
        # rounding in tiny slacks puts a floor under the decrement
        if lam2 < 0.5 * best:
            best = lam2
            stalled = 0
        else:
            stalled += 1
            if stalled >= 4 and best / 2.0 <= 1e-5:
                return x, steps
        s = 1.0
        while s > 1e-18 and not prog.strictly_feasible(x + s * dx):
            s *= _BETA
        if lam2 > _PURE_NEWTON:
            # damped phase; once the decrement is small a full step is safe and
            # the Armijo test would only be measuring rounding noise
            psi0 = _barrier_value(prog, x, t)
            while s > 1e-18 and _barrier_value(prog, x + s * dx, t) > psi0 - _ALPHA * s * lam2:
                s *= _BETA
        if s <= 1e-18:
            # numerical floor reached; the point is as centred as doubles allow
            return x, steps
        x = x + s * dx
        steps += 1
        if stop is not None and stop(x):
            return x, steps
    raise MaxIter(f"Newton centering exceeded {max_newton} steps at t={t:.3g}")


def barrier_solve(
    prog: ConvexProgram,
    tol: float = 1e-10,
    *,
    rel_tol: float = 0.0,
    mu: float = MU,
    t0: float = T0,
    newton_tol: float = NEWTON_TOL,
    max_newton: int = MAX_NEWTON,
    max_outer: int = MAX_OUTER,
    x0: Optional[np.ndarray] = None,
    stop: Optional[Callable[[np.ndarray], bool]] = None,
) -> BarrierResult:
    """Minimise ``prog`` by log-barrier path following.

    Terminates once the duality-gap estimate ``m / t`` drops below
    ``max(tol, rel_tol * |f0(x)|)``.  A strictly feasible start is taken from
    ``x0``, then ``prog.x0``, and otherwise found by a phase-I solve.

    If centering fails after the first outer iteration (rounding in tiny
    slacks), the last centred point is returned with its own gap and
    ``stalled`` set.  Raises ``Infeasible`` if phase I cannot find an
    interior point and ``MaxIter`` if the first centering or the outer
    iteration cap fails.
    """
    start = x0 if x0 is not None else prog.x0
    if start is None or not prog.strictly_feasible(np.asarray(start, dtype=float)):
        start = phase_one(prog, start)
    x = np.array(start, dtype=float)
    m = prog.n_constraints
    t = t0
    newton_total = 0
    stalled = False
    for outer in range(1, max_outer + 1):
        try:
            x, steps = _center(prog, x, t, newton_tol, max_newton, stop)
        except MaxIter:
            if outer == 1:
                raise
            t /= mu
            stalled = True
            break
        newton_total += steps
        if stop is not None and stop(x):
            break
        obj = float(prog.objective.value(x))
        if m == 0 or m / t <= max(tol, rel_tol * abs(obj)):
            break
        t *= mu
    else:
        raise MaxIter(f"barrier exceeded {max_outer} outer iterations")
    duals = [1.0 / (-t * c.values(x)) for c in prog.constraints]
    return BarrierResult(
        x=x,
        obj=float(prog.objective.value(x)),
        duals=duals,
        t=t,
        gap=m / t,
        newton_steps=newton_total,
        outer_iterations=outer,
        stalled=stalled,
    )


class _Shifted(Constraint):
    """``f(x) - s <= 0`` over the augmented variable ``(x, s)``."""

    def __init__(self, inner: Constraint):
        self.inner = inner
        self.size = inner.size

    def values(self, xs):
        return self.inner.values(xs[:-1]) - xs[-1]

    def jacobian(self, xs):
        J = self.inner.jacobian(xs[:-1])
        return np.hstack([J, -np.ones((J.shape[0], 1))])

    def weighted_hessian(self, xs, weights):
        H = self.inner.weighted_hessian(xs[:-1], weights)
        if H is None:
            return None
        n = H.shape[0]
        out = np.zeros((n + 1, n + 1))
        out[:n, :n] = H
        return out


def phase_one(prog: ConvexProgram, guess=None) -> np.ndarray:
    """Find a strictly feasible point by minimising the maximum violation."""
    n = prog.n_vars
    x = np.zeros(n) if guess is None else np.asarray(guess, dtype=float)
    if not prog.constraints:
        return x
    s0 = float(np.max(prog.constraint_values(x))) + 1.0
    s0 = max(s0, 1.0)
    cons = [_Shifted(c) for c in prog.constraints]
    # keeps the auxiliary problem bounded below
    floor = np.zeros((1, n + 1))
    floor[0, -1] = -1.0
    cons.append(LinearConstraints(floor, [1.0]))
    e = np.zeros(n + 1)
    e[-1] = 1.0
    aux = ConvexProgram(
        n_vars=n + 1,
        objective=SmoothFunction(
            value=lambda xs: float(xs[-1]),
            grad=lambda xs: e,
            hess=lambda xs: np.zeros((n + 1, n + 1)),
        ),
        constraints=cons,
        x0=np.append(x, s0),
    )
    res = barrier_solve(aux, tol=1e-10, stop=lambda xs: xs[-1] < -1e-6)
    xs = res.x
    if xs[-1] < 0.0 and prog.strictly_feasible(xs[:-1]):
        return xs[:-1]
    if xs[-1] > PHASE1_TOL:
        raise Infeasible(f"phase-I optimum {xs[-1]:.3e} > {PHASE1_TOL:g}")
    raise Infeasible("feasible set has empty interior")
