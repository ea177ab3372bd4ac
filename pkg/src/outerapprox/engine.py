"""The outer-approximation loop.

Each iteration looks at the candidate vertices of the current outer polytope
``A_k``, measures their Euclidean distance to the slice ``A`` (the reference
stopping test) and their ``M_k``-distance (the selection rule), cuts off the
farthest vertex under ``M_k`` and records a trace row.
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .errors import DegenerateCut, MaxIterReached, NoVertices, UnboundedInit
from .metric import (
    DEFAULT_EPS0,
    MetricState,
    jacobi_eigh,
    SpdMatrix,
    materialize,
    m_norm,
    push_normal,
    sigma_stats,
    spectral,
)
from .polytope import (
    Halfspace,
    Polytope,
    enumerate_vertices,
    hausdorff_nested,
    intersect,
    is_bounded,
    lp_max,
    unique_points,
)
from .problems import ProblemSpec, get_problem
from .scalarize import (
    SEPARATION_TOL,
    CutPoint,
    ScalarizationResult,
    extract_cut,
    solve_norm_min,
    weighted_sum,
)
from .trace import RunTrace, TraceRow, emit_csv

TIE_RTOL = 1e-9
HYBRID_PERIOD = 50


class NormMode(str, enum.Enum):
    EUCLID = "euclid"
    ADAPTIVE = "adaptive"
    FIXED = "fixed"


class Strategy(str, enum.Enum):
    FULL = "full"
    LP = "lp"
    HYBRID = "hybrid"


class StopStatus(enum.Enum):
    CONTINUE = "continue"
    CONVERGED_SURROGATE = "converged_surrogate"
    CONVERGED_EUCLIDEAN = "converged_euclidean"

    @property
    def converged(self) -> bool:
        return self is not StopStatus.CONTINUE


@dataclass(frozen=True)
class RunConfig:
    problem: str = "ball2"
    norm: NormMode = NormMode.EUCLID
    eps: float = 1e-3
    eps0: float = DEFAULT_EPS0
    fixed_matrix: Optional[np.ndarray] = None
    max_iter: int = 500
    strategy: Strategy = Strategy.FULL
    hybrid_period: int = HYBRID_PERIOD
    cut_point: CutPoint = CutPoint.IMAGE
    trace_path: Optional[str] = None
    fit_window: str = "second-half"

    def __post_init__(self):
        object.__setattr__(self, "norm", NormMode(self.norm))
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "cut_point", CutPoint(self.cut_point))
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not self.eps0 > 0:
            raise ValueError("eps0 must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.hybrid_period < 1:
            raise ValueError("hybrid period must be at least 1")
        if self.norm is NormMode.FIXED:
            if self.fixed_matrix is None:
                raise ValueError("fixed norm needs a matrix")
            SpdMatrix(self.fixed_matrix)
        if self.fit_window != "second-half":
            raise ValueError("only the second-half fit window is supported")

    def as_header(self) -> dict:
        out = {
            "problem": self.problem,
            "norm": self.norm.value,
            "eps": repr(float(self.eps)),
            "eps0": repr(float(self.eps0)),
            "max_iter": str(self.max_iter),
            "strategy": self.strategy.value,
            "hybrid_period": str(self.hybrid_period),
            "cut_point": self.cut_point.value,
            "fit_window": self.fit_window,
        }
        if self.fixed_matrix is not None:
            out["fixed_matrix"] = repr(np.asarray(self.fixed_matrix, dtype=float).tolist())
        return out


@dataclass
class VertexRecord:
    """Cached scalarization data for one vertex of the outer polytope.

    ``feasible_z`` collects every optimal ``z`` found for this vertex under any
    metric.  Each is feasible for every metric, so ``||z||_M`` over these is an
    upper bound on the ``M``-distance and lets most re-solves be skipped.
    """

    point: np.ndarray
    euclid: ScalarizationResult
    feasible_z: list = field(default_factory=list)
    metric_result: Optional[ScalarizationResult] = None
    metric_stamp: int = -1


@dataclass
class Evaluation:
    """Distances of the current candidate vertices and the selection they induce."""

    k: int
    candidates: np.ndarray
    euclid_max: float
    surrogate_max: float
    selected: Optional[np.ndarray]
    result: Optional[ScalarizationResult]
    metric: np.ndarray
    full_set: bool


@dataclass
class EngineState:
    problem: ProblemSpec
    config: RunConfig
    polytope: Polytope
    metric_state: MetricState
    probes: list
    k: int = 0
    cache: dict = field(default_factory=dict)
    trace: RunTrace = field(default_factory=RunTrace)
    solves: int = 0

    @property
    def metric_stamp(self) -> int:
        # metric only changes between iterations in adaptive mode
        return self.k if self.config.norm is NormMode.ADAPTIVE else 0


def _key(v: np.ndarray) -> tuple:
    return tuple(np.round(v, 9) + 0.0)


def initial_polytope(problem: ProblemSpec) -> Polytope:
    """Weighted-sum supports along the dual generators, capped by the slice."""
    cuts = []
    for omega in problem.dual_generators():
        _, support = weighted_sum(problem, omega)
        cuts.append(Halfspace(omega, support))
    cuts.append(Halfspace.upper(problem.slice_direction, problem.slice_level))
    poly = Polytope(cuts)
    if not is_bounded(poly):
        raise UnboundedInit("initial outer polytope is unbounded; check slice direction and level")
    verts = enumerate_vertices(poly)
    if len(verts) < problem.q + 1:
        raise UnboundedInit(f"initial outer polytope has only {len(verts)} vertices")
    return Polytope(cuts, verts)


def initial_probes(problem: ProblemSpec) -> list:
    eye = np.eye(problem.q)
    w = np.asarray(problem.slice_direction, dtype=float)
    out = []
    for j in range(problem.q):
        out += [eye[j], -eye[j]]
    return out + [w, -w]


def initialize(problem: ProblemSpec, config: Optional[RunConfig] = None) -> EngineState:
    config = config or RunConfig(problem=problem.name)
    state = EngineState(
        problem=problem,
        config=config,
        polytope=initial_polytope(problem),
        metric_state=MetricState(problem.q, eps0=config.eps0),
        probes=initial_probes(problem),
    )
    state.trace.config = config.as_header()
    return state


def probe_directions(poly: Polytope, directions) -> np.ndarray:
    pts = [lp_max(poly, w)[0] for w in directions]
    return unique_points(np.array(pts))


def probe_vertices(state: EngineState) -> np.ndarray:
    """Vertices reached by maximising each stored direction over ``A_k``."""
    return probe_directions(state.polytope, state.probes)


def _uses_full_enumeration(state: EngineState) -> bool:
    s = state.config.strategy
    if s is Strategy.FULL:
        return True
    if s is Strategy.HYBRID:
        return state.k % state.config.hybrid_period == 0
    return False


def candidate_vertices(state: EngineState) -> tuple[np.ndarray, bool]:
    if _uses_full_enumeration(state):
        return state.polytope.vertices, True
    return probe_vertices(state), False


def current_metric(state: EngineState) -> np.ndarray:
    cfg = state.config
    if cfg.norm is NormMode.ADAPTIVE:
        return np.asarray(materialize(state.metric_state))
    if cfg.norm is NormMode.FIXED:
        return np.asarray(cfg.fixed_matrix, dtype=float)
    return np.eye(state.problem.q)


def _record(state: EngineState, v: np.ndarray) -> VertexRecord:
    key = _key(v)
    rec = state.cache.get(key)
    if rec is None:
        res = solve_norm_min(state.problem, v)
        state.solves += 1
        rec = VertexRecord(point=np.array(v), euclid=res, feasible_z=[res.z_star])
        state.cache[key] = rec
    return rec


def _metric_result(state: EngineState, rec: VertexRecord, M: np.ndarray) -> ScalarizationResult:
    if state.config.norm is NormMode.EUCLID:
        return rec.euclid
    stamp = state.metric_stamp
    if rec.metric_stamp != stamp:
        res = solve_norm_min(state.problem, rec.point, M)
        state.solves += 1
        rec.metric_result = res
        rec.metric_stamp = stamp
        rec.feasible_z.append(res.z_star)
    return rec.metric_result


def _upper_bound(state: EngineState, rec: VertexRecord, M: np.ndarray) -> float:
    if state.config.norm is NormMode.EUCLID:
        return rec.euclid.value
    if rec.metric_stamp == state.metric_stamp:
        return rec.metric_result.value
    return min(m_norm(M, z) for z in rec.feasible_z)


def _lex_less(a: np.ndarray, b: np.ndarray) -> bool:
    for x, y in zip(a, b):
        if x != y:
            return bool(x < y)
    return False


def _ties(a: float, b: float) -> bool:
    return abs(a - b) <= TIE_RTOL * max(abs(a), abs(b), 1e-300)


def select_vertex(state: EngineState, M, candidates: np.ndarray, exclude=()):
    """``argmax_v ||z^v||_M`` over the candidates, ties going to the lexicographically smaller vertex.

    Vertices are visited in decreasing order of a cached upper bound and only
    solved exactly until no remaining bound can reach the best exact value,
    so the result equals the brute-force argmax.
    Returns ``(vertex, result, value)``.
    """
    M = np.asarray(M, dtype=float)
    pool = [
        _record(state, v)
        for v in candidates
        if _key(v) not in exclude
    ]
    if not pool:
        raise NoVertices("no candidate vertices to select from")
    bounds = [(_upper_bound(state, r, M), r) for r in pool]
    bounds.sort(key=lambda t: -t[0])
    best: Optional[tuple] = None
    for ub, rec in bounds:
        if best is not None and ub < best[0] and not _ties(ub, best[0]):
            break
        res = _metric_result(state, rec, M)
        val = res.value
        if best is None or (val > best[0] and not _ties(val, best[0])):
            best = (val, rec, res)
        elif _ties(val, best[0]) and _lex_less(rec.point, best[1].point):
            best = (val, rec, res)
    val, rec, res = best
    return rec.point, res, val


def stopping_test(euclid_max: float, surrogate_max: float, config: RunConfig) -> StopStatus:
    """Euclidean test ``max d_2 <= eps``; in adaptive mode also the surrogate ``max d_M <= sqrt(eps0) eps``."""
    euclid_ok = euclid_max <= config.eps
    if config.norm is NormMode.ADAPTIVE and surrogate_max <= math.sqrt(config.eps0) * config.eps:
        if not euclid_max <= config.eps * (1 + 1e-6) + SEPARATION_TOL:
            raise AssertionError(
                f"surrogate {surrogate_max:.6e} passed but Euclidean distance {euclid_max:.6e} > {config.eps:g}"
            )
        return StopStatus.CONVERGED_SURROGATE
    return StopStatus.CONVERGED_EUCLIDEAN if euclid_ok else StopStatus.CONTINUE


def evaluate(state: EngineState, candidates=None, full_set=None, exclude=()) -> Evaluation:
    if candidates is None:
        candidates, full_set = candidate_vertices(state)
    if len(candidates) == 0:
        raise NoVertices("outer polytope has no vertices")
    M = current_metric(state)
    euclid_max = max(_record(state, v).euclid.value for v in candidates)
    v, res, val = select_vertex(state, M, candidates, exclude)
    return Evaluation(state.k, candidates, euclid_max, val, v, res, M, bool(full_set))


def _sigma_diagnostics(state: EngineState) -> tuple[float, float]:
    if state.metric_state.k == 0:
        w, _ = jacobi_eigh(state.metric_state.sigma)
        return float(w[0]), float(w[-1])
    return sigma_stats(state.metric_state)


def _trace_row(state: EngineState, ev: Evaluation, wall_ms: float) -> TraceRow:
    _, _, theta = spectral(SpdMatrix(ev.metric))
    lo, hi = _sigma_diagnostics(state)
    return TraceRow(
        iter=state.k,
        hausdorff_err=float(ev.euclid_max),
        surrogate_err=float(ev.surrogate_max),
        n_vertices=int(len(ev.candidates)),
        n_halfspaces=state.polytope.n_halfspaces,
        theta_k=float(theta),
        lambda_min_sigma=lo,
        lambda_max_sigma=hi,
        selected_vertex_dist=float(ev.surrogate_max),
        cut_ratio=None,
        wall_ms=wall_ms,
    )


@dataclass
class CutEvent:
    """Everything an observer may want to check about one cut."""

    k: int
    before: Polytope
    after: Polytope
    cut: Halfspace
    vertex: np.ndarray
    result: ScalarizationResult
    metric: np.ndarray
    evaluation: Evaluation


def _prune(state: EngineState):
    A, b = state.polytope.A, state.polytope.b
    state.cache = {
        key: rec
        for key, rec in state.cache.items()
        if np.all(A @ rec.point <= b + 1e-7)
    }


def step(state: EngineState, ev: Evaluation) -> CutEvent:
    """Cut off the selected vertex of ``ev`` and update polytope, metric and probes.

    A selected vertex that turns out to be inside ``A`` is excluded and the
    selection repeated.
    """
    cfg = state.config
    exclude = set()
    while True:
        try:
            cut = extract_cut(ev.result, cfg.cut_point)
            break
        except DegenerateCut:
            exclude.add(_key(ev.selected))
            ev = evaluate(state, ev.candidates, ev.full_set, exclude)
    before = state.polytope
    # hybrid keeps vertex lists right after a full enumeration (so the cut
    # ratio is measurable there) and right before the next one
    period = cfg.hybrid_period
    incremental = cfg.strategy is Strategy.FULL or (
        cfg.strategy is Strategy.HYBRID and (state.k % period == 0 or (state.k + 1) % period == 0)
    )
    after = intersect(before, cut, incremental=incremental and before.vertices_valid)
    state.polytope = after
    state.metric_state = push_normal(state.metric_state, cut.normal)
    state.probes.append(np.array(cut.normal))
    event = CutEvent(state.k, before, after, cut, ev.selected, ev.result, ev.metric, ev)
    state.k += 1
    _prune(state)
    return event


def cut_ratio(event: CutEvent, error: float) -> Optional[float]:
    """``delta_H(A_k, A_{k+1}) / E_k`` when both vertex lists are at hand."""
    if not (event.before.vertices_valid and event.after.vertices_valid) or not error > 0:
        return None
    return hausdorff_nested(event.before, event.after) / error


Observer = Callable[[EngineState, CutEvent], None]


def execute(
    config: RunConfig,
    problem: Optional[ProblemSpec] = None,
    observer: Optional[Observer] = None,
) -> EngineState:
    """Iterate until the Euclidean test passes or ``max_iter`` cuts have been made.

    Returns the final engine state; its trace has status ``"max_iter"`` in the
    latter case.
    """
    problem = problem or get_problem(config.problem)
    state = initialize(problem, config)
    trace = state.trace
    while True:
        t0 = time.perf_counter()
        ev = evaluate(state)
        status = stopping_test(ev.euclid_max, ev.surrogate_max, config)
        if status.converged and not ev.full_set:
            # probes can miss vertices; confirm on the full vertex list
            ev = evaluate(state, state.polytope.vertices, True)
            status = stopping_test(ev.euclid_max, ev.surrogate_max, config)
        row = _trace_row(state, ev, 0.0)
        trace.rows.append(row)
        if status.converged or state.k >= config.max_iter:
            trace.status = "converged" if status.converged else "max_iter"
            row.wall_ms = (time.perf_counter() - t0) * 1e3
            break
        event = step(state, ev)
        row.cut_ratio = cut_ratio(event, ev.euclid_max)
        row.wall_ms = (time.perf_counter() - t0) * 1e3
        if observer is not None:
            observer(state, event)
    if config.trace_path:
        emit_csv(trace, config.trace_path)
    return state


def run(
    config: RunConfig,
    problem: Optional[ProblemSpec] = None,
    observer: Optional[Observer] = None,
    raise_on_max_iter: bool = False,
) -> RunTrace:
    """Run the loop and return its trace.

    ``raise_on_max_iter`` turns a run that hits ``max_iter`` into
    :class:`MaxIterReached` instead of a flagged trace.
    """
    trace = execute(config, problem, observer).trace
    if raise_on_max_iter and trace.status == "max_iter":
        raise MaxIterReached(f"no convergence within {config.max_iter} iterations")
    return trace
