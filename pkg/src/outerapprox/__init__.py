"""Polyhedral outer approximation of convex upper images with adaptive metrics."""
from .engine import (
    CutEvent,
    EngineState,
    NormMode,
    RunConfig,
    StopStatus,
    Strategy,
    execute,
    initialize,
    probe_vertices,
    run,
    select_vertex,
    step,
    stopping_test,
)
from .errors import (
    CapabilityError,
    DegenerateCut,
    Infeasible,
    MaxIterReached,
    NotNested,
    NotSpd,
    OuterApproxError,
    TooFewPoints,
    Unbounded,
    UnboundedInit,
)
from .metric import MetricState, SpdMatrix, materialize, push_normal, sigma_stats, spectral
from .polytope import Halfspace, Polytope, enumerate_vertices, hausdorff_nested, intersect, lp_max
from .problems import ProblemSpec, get_problem, oracle_distance, transform_problem
from .scalarize import CutPoint, ScalarizationResult, extract_cut, solve_norm_min, weighted_sum
from .suite import run_suite
from .trace import RateFit, RunTrace, TraceRow, emit_csv, fit_rate, parse_csv
