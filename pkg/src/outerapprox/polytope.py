"""Exact polyhedral kernel for dimensions 2 to 4.

A :class:`Polytope` is stored as a list of :class:`Halfspace` objects
``{y : normal . y >= offset}``; internally rows are normalised and flipped to
``A y <= b``.  Small vertex problems are solved by exhaustive q-subset
solves.  Cuts update a known vertex list by walking the edges that cross the
new hyperplane, and large H-representations are enumerated by replaying
their rows as cuts of a bounding box.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .barrier import ConvexProgram, LinearConstraints, SmoothFunction, barrier_solve
from .errors import CapabilityError, Infeasible, MaxIter, NotNested, Unbounded

FEAS_TOL = 1e-9
DEDUP_TOL = 1e-8
NEST_TOL = 1e-7
MAX_DIM = 4

_CHUNK = 20000
_BRUTE_FORCE_LIMIT = 50_000
_ACTIVE_TOL = 1e-8
_DET_TOL = 1e-12
_PIVOT_TOL = 1e-11
_COST_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Halfspace:
    """``{y : normal . y >= offset}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        normal = np.asarray(self.normal, dtype=float).reshape(-1)
        if not np.linalg.norm(normal) > 1e-12:
            raise ValueError("halfspace normal must be nonzero")
        normal.setflags(write=False)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def upper(cls, direction, level) -> "Halfspace":
        """``{y : direction . y <= level}`` stored with the sign flipped."""
        return cls(-np.asarray(direction, dtype=float), -float(level))

    @property
    def dim(self) -> int:
        return self.normal.shape[0]

    def slack(self, y) -> np.ndarray:
        """Signed Euclidean distance inside the halfspace (negative = violated)."""
        y = np.asarray(y, dtype=float)
        return (y @ self.normal - self.offset) / np.linalg.norm(self.normal)

    def contains(self, y, tol: float = FEAS_TOL):
        return self.slack(y) >= -tol

    def __repr__(self):
        return f"Halfspace(normal={self.normal.tolist()}, offset={self.offset!r})"


def _rows(halfspaces: Sequence[Halfspace]):
    N = np.array([h.normal for h in halfspaces], dtype=float)
    off = np.array([h.offset for h in halfspaces], dtype=float)
    scale = np.linalg.norm(N, axis=1)
    return -N / scale[:, None], -off / scale


class Polytope:
    """Intersection of finitely many halfspaces with a lazily computed vertex list."""

    def __init__(self, halfspaces: Iterable[Halfspace], vertices: Optional[np.ndarray] = None):
        self.halfspaces = tuple(halfspaces)
        if not self.halfspaces:
            raise ValueError("a polytope needs at least one halfspace")
        dims = {h.dim for h in self.halfspaces}
        if len(dims) != 1:
            raise ValueError(f"mixed dimensions {sorted(dims)}")
        self.dim = dims.pop()
        self.A, self.b = _rows(self.halfspaces)
        self._vertices = None if vertices is None else np.asarray(vertices, dtype=float)

    @classmethod
    def from_inequalities(cls, A, b) -> "Polytope":
        """Build from ``A y <= b``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float)
        return cls(Halfspace(-a, -bi) for a, bi in zip(A, b))

    @classmethod
    def box(cls, lower, upper) -> "Polytope":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        q = lower.shape[0]
        eye = np.eye(q)
        hs = [Halfspace(eye[i], lower[i]) for i in range(q)]
        hs += [Halfspace.upper(eye[i], upper[i]) for i in range(q)]
        return cls(hs)

    @property
    def n_halfspaces(self) -> int:
        return len(self.halfspaces)

    @property
    def vertices_valid(self) -> bool:
        return self._vertices is not None

    @property
    def vertices(self) -> np.ndarray:
        if self._vertices is None:
            self._vertices = enumerate_vertices(self)
        return self._vertices

    def contains(self, y, tol: float = FEAS_TOL):
        y = np.asarray(y, dtype=float)
        return np.all(y @ self.A.T <= self.b + tol, axis=-1)

    def max_violation(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.max(y @ self.A.T - self.b, axis=-1)

    def __repr__(self):
        nv = len(self._vertices) if self._vertices is not None else "?"
        return f"Polytope(dim={self.dim}, halfspaces={self.n_halfspaces}, vertices={nv})"


def _check_dim(q: int):
    if q > MAX_DIM:
        raise CapabilityError(f"vertex enumeration supports q <= {MAX_DIM}, got q={q}")


def _solve_subsets(A, b, subsets: np.ndarray):
    """Solve every square system indexed by ``subsets``; singular ones are skipped."""
    M = A[subsets]
    r = b[subsets]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        det = np.linalg.det(M)
    ok = np.abs(det) > _DET_TOL
    if not np.any(ok):
        return np.zeros((0, A.shape[1]))
    return np.linalg.solve(M[ok], r[ok][..., None])[..., 0]


def _feasible(A, b, pts):
    if len(pts) == 0:
        return pts
    keep = np.all(pts @ A.T <= b + FEAS_TOL, axis=1)
    return pts[keep]


def _lexsort(pts: np.ndarray) -> np.ndarray:
    if len(pts) == 0:
        return pts
    order = np.lexsort(pts.T[::-1])
    return pts[order]


def unique_points(pts: np.ndarray) -> np.ndarray:
    """Drop near-duplicates (max-norm within DEDUP_TOL) and sort lexicographically."""
    pts = _lexsort(pts)
    kept: list = []
    for p in pts:
        if kept:
            K = np.asarray(kept)
            if np.any(np.max(np.abs(K - p), axis=1) <= DEDUP_TOL):
                continue
        kept.append(p)
    if not kept:
        return np.zeros((0, pts.shape[1] if pts.ndim == 2 else 0))
    # normalise signed zeros so output is stable
    return _lexsort(np.asarray(kept)) + 0.0


def _enumerate(A, b, fixed: Sequence[int], pool: Sequence[int], k: int) -> np.ndarray:
    q = A.shape[1]
    found = []
    combos = itertools.combinations(pool, k)
    fixed = list(fixed)
    while True:
        chunk = list(itertools.islice(combos, _CHUNK))
        if not chunk:
            break
        idx = np.array(chunk, dtype=int).reshape(len(chunk), k)
        if fixed:
            idx = np.hstack([np.tile(fixed, (len(idx), 1)), idx])
        pts = _feasible(A, b, _solve_subsets(A, b, idx))
        if len(pts):
            found.append(pts)
    if not found:
        return np.zeros((0, q))
    return np.vstack(found)


def _active(A, b, pts) -> np.ndarray:
    return np.abs(pts @ A.T - b) <= _ACTIVE_TOL * (1.0 + np.abs(b))


def _cut_vertices(A, b, verts: np.ndarray, a: np.ndarray, beta: float) -> np.ndarray:
    """Vertices of ``{A y <= b, a.y <= beta}`` given the vertices of ``{A y <= b}``.

    New vertices sit where the hyperplane crosses an edge from a removed
    vertex to a kept one.  Two vertices span an edge exactly when the rows
    active at both have rank ``q - 1``.  Each crossing is re-solved from its
    active rows so errors do not accumulate over long cut sequences.
    """
    q = A.shape[1]
    if len(verts) == 0:
        return verts
    slack = verts @ a - beta
    keep = slack <= FEAS_TOL
    removed, kept = verts[~keep], verts[keep]
    if len(removed) == 0:
        return verts
    if len(kept) == 0:
        return np.zeros((0, q))
    act_r, act_k = _active(A, b, removed), _active(A, b, kept)
    shared = act_r.astype(np.int32) @ act_k.T.astype(np.int32)
    fresh = []
    for i, j in zip(*np.nonzero(shared >= q - 1)):
        common = act_r[i] & act_k[j]
        rows = A[common]
        if np.linalg.matrix_rank(rows, tol=1e-9) != q - 1:
            continue
        su, sw = slack[~keep][i], slack[keep][j]
        guess = removed[i] + su / (su - sw) * (kept[j] - removed[i])
        K = np.vstack([rows, a])
        rhs = np.append(b[common], beta)
        exact, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        fresh.append(exact if np.max(np.abs(exact - guess)) <= 1e-6 * (1 + np.max(np.abs(guess))) else guess)
    pts = np.vstack([kept, np.array(fresh)]) if fresh else kept
    return unique_points(pts)


def _replay(poly: Polytope) -> np.ndarray:
    """Vertices of a bounded polytope by cutting a padded bounding box with every row."""
    q = poly.dim
    eye = np.eye(q)
    hi = np.array([lp_max(poly, e)[1] for e in eye])
    lo = np.array([-lp_max(poly, -e)[1] for e in eye])
    pad = 1.0 + float(np.max(hi - lo))
    box = Polytope.box(lo - pad, hi + pad)
    verts = np.array(list(itertools.product(*zip(lo - pad, hi + pad))), dtype=float)
    A, b = box.A, box.b
    for a, beta in zip(poly.A, poly.b):
        verts = _cut_vertices(A, b, verts, a, beta)
        A, b = np.vstack([A, a]), np.append(b, beta)
    return unique_points(verts) if len(verts) else np.zeros((0, q))


def enumerate_vertices(poly: Polytope) -> np.ndarray:
    """All extreme points of ``poly`` as a lexicographically sorted ``(k, q)`` array.

    Up to ``_BRUTE_FORCE_LIMIT`` subsets, every q-subset of constraints is
    solved and a solution kept when it is feasible for the whole
    H-representation (a nonsingular active subset has rank q, so each kept
    point is extreme).  Larger bounded polytopes are enumerated by replaying
    their rows as cuts of a bounding box.
    """
    q = poly.dim
    _check_dim(q)
    m = poly.n_halfspaces
    if m < q:
        return np.zeros((0, q))
    if math.comb(m, q) > _BRUTE_FORCE_LIMIT:
        try:
            return _replay(poly)
        except Infeasible:
            return np.zeros((0, q))
        except Unbounded:
            pass
    pts = _enumerate(poly.A, poly.b, [], range(m), q)
    return unique_points(pts)


def intersect(poly: Polytope, h: Halfspace, incremental: bool = True) -> Polytope:
    """``poly`` cut by ``h``.

    With ``incremental`` set and a valid vertex cache on ``poly``, the new
    vertex list is built from the survivors plus the crossings of the new
    hyperplane with edges of ``poly``.  Otherwise the result starts with an
    empty cache.
    """
    out = Polytope(poly.halfspaces + (h,))
    if incremental and poly.vertices_valid and poly.dim <= MAX_DIM:
        j = out.n_halfspaces - 1
        out._vertices = _cut_vertices(poly.A, poly.b, poly.vertices, out.A[j], out.b[j])
    return out


# --- linear programming -------------------------------------------------------


class _Tableau:
    """Dense tableau carrying several objective rows (all maximised).

    Objectives are handled one at a time; after each is optimal, columns with
    a strictly negative reduced cost are frozen at zero so later objectives
    only move within the optimal face.
    """

    def __init__(self, T, rhs, basis, costs):
        self.T = T
        self.rhs = rhs
        self.basis = list(basis)
        self.R = costs - costs[:, self.basis] @ T  # reduced costs
        self.pivots = 0

    def entering(self, row: int, allowed: np.ndarray) -> Optional[int]:
        hits = np.flatnonzero(allowed & (self.R[row] > _COST_TOL))
        return int(hits[0]) if hits.size else None  # Bland: smallest improving index

    def leaving(self, j: int) -> Optional[int]:
        col = self.T[:, j]
        best = None
        for i in np.flatnonzero(col > _PIVOT_TOL):
            ratio = max(self.rhs[i], 0.0) / col[i]
            if best is None or ratio < best[0] - 1e-13 or (
                abs(ratio - best[0]) <= 1e-13 and self.basis[i] < self.basis[best[1]]
            ):
                best = (ratio, i)
        return None if best is None else best[1]

    def pivot(self, i: int, j: int):
        p = self.T[i, j]
        self.T[i] /= p
        self.rhs[i] /= p
        col = self.T[:, j].copy()
        col[i] = 0.0
        self.T -= np.outer(col, self.T[i])
        self.rhs -= col * self.rhs[i]
        self.R -= np.outer(self.R[:, j], self.T[i])
        self.basis[i] = j
        self.pivots += 1

    def run(self, allowed_cols: int, cap: int):
        allowed = np.zeros(self.T.shape[1], dtype=bool)
        allowed[:allowed_cols] = True
        for row in range(self.R.shape[0]):
            while True:
                j = self.entering(row, allowed)
                if j is None:
                    break
                i = self.leaving(j)
                if i is None:
                    if row == 0:
                        raise Unbounded("LP objective unbounded over the polytope")
                    allowed[j] = False  # tie-break direction unbounded on the face
                    continue
                self.pivot(i, j)
                if self.pivots > cap:
                    raise MaxIter("simplex pivot cap exceeded")
            allowed &= self.R[row] >= -_COST_TOL


def _lex_max(A, b, objectives):
    """Lexicographic maximisation of ``objectives @ y`` over ``A y <= b`` with ``y`` free."""
    m, q = A.shape
    neg = b < 0
    n_art = int(np.count_nonzero(neg))
    n_cols = 2 * q + m + n_art
    T = np.zeros((m, n_cols))
    sign = np.where(neg, -1.0, 1.0)
    T[:, :q] = A * sign[:, None]
    T[:, q:2 * q] = -A * sign[:, None]
    T[np.arange(m), 2 * q + np.arange(m)] = sign
    rhs = b * sign
    basis = 2 * q + np.arange(m)
    art_rows = np.flatnonzero(neg)
    for k, i in enumerate(art_rows):
        T[i, 2 * q + m + k] = 1.0
        basis[i] = 2 * q + m + k
    cap = 50 * (m + n_cols) + 1000

    n_real = 2 * q + m
    if n_art:
        phase1 = np.zeros((1, n_cols))
        phase1[0, n_real:] = -1.0
        tab = _Tableau(T, rhs, basis, phase1)
        tab.run(n_cols, cap)
        if -float(phase1[0, tab.basis] @ tab.rhs) > 1e-9 * max(1.0, np.abs(b).max()):
            raise Infeasible("polytope is empty")
        # drive zero-level artificials out of the basis
        drop = []
        for i, var in enumerate(tab.basis):
            if var >= n_real:
                cand = np.flatnonzero(np.abs(tab.T[i, :n_real]) > 1e-9)
                if cand.size:
                    tab.pivot(i, int(cand[0]))
                else:
                    drop.append(i)
        keep = [i for i in range(m) if i not in drop]
        T = tab.T[keep][:, :n_real]
        rhs = tab.rhs[keep]
        basis = [tab.basis[i] for i in keep]
    else:
        T = T[:, :n_real]
    costs = np.zeros((objectives.shape[0], n_real))
    costs[:, :q] = objectives
    costs[:, q:2 * q] = -objectives
    tab = _Tableau(T, rhs, basis, costs)
    tab.run(n_real, cap)
    x = np.zeros(n_real)
    x[tab.basis] = tab.rhs
    return x[:q] - x[q:2 * q] + 0.0


def lp_max(poly: Polytope, direction) -> tuple[np.ndarray, float]:
    """Maximise ``direction . y`` over ``poly`` by dense simplex with Bland's rule.

    Among several optimal vertices the lexicographically smallest is returned.
    Raises ``Infeasible`` for an empty polytope and ``Unbounded`` if the
    direction is not bounded above.
    """
    c = np.asarray(direction, dtype=float).reshape(-1)
    q = poly.dim
    if c.shape[0] != q:
        raise ValueError("direction has the wrong dimension")
    objectives = np.vstack([c, -np.eye(q)])
    y = _lex_max(poly.A, poly.b, objectives)
    return y, float(c @ y)


def is_bounded(poly: Polytope) -> bool:
    try:
        for d in np.vstack([np.eye(poly.dim), -np.eye(poly.dim)]):
            lp_max(poly, d)
    except Unbounded:
        return False
    return True


# --- distances ----------------------------------------------------------------


def project(poly: Polytope, v, start=None) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``poly`` via the barrier solver."""
    v = np.asarray(v, dtype=float)
    q = poly.dim
    eye = np.eye(q)
    prog = ConvexProgram(
        n_vars=q,
        objective=SmoothFunction(
            value=lambda y: 0.5 * float((y - v) @ (y - v)),
            grad=lambda y: y - v,
            hess=lambda y: eye,
        ),
        constraints=[LinearConstraints(poly.A, poly.b)],
        x0=start,
    )
    return barrier_solve(prog, tol=1e-20, rel_tol=1e-10).x


def hausdorff_nested(outer: Polytope, inner: Polytope) -> float:
    """Euclidean Hausdorff distance between nested polytopes ``inner <= outer``.

    Equals the largest distance from a vertex of ``outer`` to ``inner``.
    """
    vin = inner.vertices
    if len(vin) and not np.all(outer.contains(vin, tol=NEST_TOL)):
        raise NotNested("inner polytope is not contained in outer")
    vout = outer.vertices
    if len(vout) == 0:
        return 0.0
    if len(vin) == 0:
        raise NotNested("inner polytope is empty")
    start = vin.mean(axis=0)
    if not np.all(inner.max_violation(start) < 0):
        start = None
    best = 0.0
    for v in vout:
        if inner.contains(v):
            continue
        y = project(inner, v, start)
        best = max(best, float(np.linalg.norm(y - v)))
    return best
