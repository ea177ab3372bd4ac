"""Batch experiments and the comparison report.

Suite files use INI syntax read by :mod:`configparser`::

    [defaults]
    max_iter = 500
    eps0 = 0.1
    output_dir = traces

    [run ball2-euclid]
    problem = ball2
    norm = euclid
    eps = 1e-5

Every ``[run <label>]`` section becomes one run.  Keys are ``problem``,
``norm`` (``euclid``, ``adaptive`` or ``fixed:<matrix file>``), ``eps``,
``eps0``, ``max_iter``, ``strategy`` (``full``, ``lp``, ``hybrid``),
``hybrid_period`` and ``cut_point`` (``image``, ``boundary``); missing keys
fall back to ``[defaults]``.  Relative paths resolve against the suite file.
"""
from __future__ import annotations

import configparser
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .engine import NormMode, RunConfig, run
from .errors import OuterApproxError
from .metric import SpdMatrix
from .problems import get_problem
from .trace import fit_rate

DEFAULTS = {
    "norm": "euclid",
    "eps": "1e-3",
    "eps0": "0.1",
    "max_iter": "500",
    "strategy": "full",
    "hybrid_period": "50",
    "cut_point": "image",
    "output_dir": "traces",
}

DEFAULT_SUITE = Path(__file__).with_name("default_suite.ini")


def load_matrix(path) -> np.ndarray:
    """Whitespace-separated square matrix, one row per line."""
    m = np.atleast_2d(np.loadtxt(path, dtype=float))
    SpdMatrix(m)
    return m


def parse_norm(text: str, base: Optional[Path] = None) -> tuple[NormMode, Optional[np.ndarray]]:
    if text.startswith("fixed:"):
        path = Path(text[len("fixed:"):])
        if base is not None and not path.is_absolute():
            path = base / path
        return NormMode.FIXED, load_matrix(path)
    return NormMode(text), None


@dataclass
class SuiteRun:
    label: str
    config: RunConfig


def read_suite(path) -> tuple[list, Path]:
    """Parse a suite file into run configurations and the trace directory."""
    path = Path(path)
    parser = configparser.ConfigParser(defaults=None, interpolation=None)
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    base = path.parent
    defaults = dict(DEFAULTS)
    if parser.has_section("defaults"):
        defaults.update(parser["defaults"])
    out_dir = Path(defaults["output_dir"])
    if not out_dir.is_absolute():
        out_dir = base / out_dir
    runs = []
    for section in parser.sections():
        if not section.startswith("run "):
            if section != "defaults":
                raise ValueError(f"unknown section [{section}]")
            continue
        label = section[len("run "):].strip()
        opts = dict(defaults)
        opts.update(parser[section])
        unknown = set(parser[section]) - set(DEFAULTS) - {"problem"}
        if unknown:
            raise ValueError(f"[{section}] has unknown keys {sorted(unknown)}")
        if "problem" not in opts:
            raise ValueError(f"[{section}] needs a problem")
        norm, matrix = parse_norm(opts["norm"], base)
        cfg = RunConfig(
            problem=opts["problem"],
            norm=norm,
            fixed_matrix=matrix,
            eps=float(opts["eps"]),
            eps0=float(opts["eps0"]),
            max_iter=int(opts["max_iter"]),
            strategy=opts["strategy"],
            hybrid_period=int(opts["hybrid_period"]),
            cut_point=opts["cut_point"],
            trace_path=str(out_dir / f"{label}.csv"),
        )
        runs.append(SuiteRun(label, cfg))
    return runs, out_dir


@dataclass
class ReportRow:
    label: str
    example: str
    q: int
    norm: str
    strategy: str
    status: str
    iterations: Optional[int]
    fitted_slope: Optional[float]
    theoretical_slope: float
    adaptive_guarantee_slope: float
    speedup_pct: Optional[float]
    final_theta: Optional[float]
    final_lambda_min_sigma: Optional[float]
    seconds: float
    error: Optional[str] = None


def speedup(iters_euclid: int, iters_adaptive: int) -> float:
    """Relative saving of the adaptive run, in percent."""
    return 100.0 * (iters_euclid - iters_adaptive) / iters_euclid


def _execute(item: SuiteRun) -> ReportRow:
    cfg = item.config
    started = time.perf_counter()
    try:
        q = get_problem(cfg.problem).q
    except OuterApproxError as exc:
        q = 0
        return ReportRow(item.label, cfg.problem, q, cfg.norm.value, cfg.strategy.value, "error",
                         None, None, math.nan, math.nan, None, None, None, 0.0, str(exc))
    base = dict(
        label=item.label,
        example=cfg.problem,
        q=q,
        norm=cfg.norm.value,
        strategy=cfg.strategy.value,
        theoretical_slope=2.0 / (1 - q),
        adaptive_guarantee_slope=1.0 / (1 - q),
        speedup_pct=None,
    )
    try:
        Path(cfg.trace_path).parent.mkdir(parents=True, exist_ok=True)
        trace = run(cfg)
    except Exception as exc:  # recorded per run, the suite carries on
        return ReportRow(status="error", iterations=None, fitted_slope=None, final_theta=None,
                         final_lambda_min_sigma=None, seconds=time.perf_counter() - started,
                         error=f"{type(exc).__name__}: {exc}", **base)
    try:
        slope = fit_rate(trace).slope
    except OuterApproxError:
        slope = None
    return ReportRow(
        status=trace.status,
        iterations=trace.iterations,
        fitted_slope=slope,
        final_theta=trace.final.theta_k,
        final_lambda_min_sigma=trace.final.lambda_min_sigma,
        seconds=time.perf_counter() - started,
        **base,
    )


def _fill_speedups(rows: list) -> None:
    euclid = {
        (r.example, r.strategy): r.iterations
        for r in rows
        if r.norm == "euclid" and r.iterations
    }
    for r in rows:
        if r.norm == "adaptive" and r.iterations is not None:
            ref = euclid.get((r.example, r.strategy))
            if ref:
                r.speedup_pct = speedup(ref, r.iterations)


def run_suite(path, parallel: int = 1) -> dict:
    """Run every configured experiment and write ``report.txt`` and ``report.json``.

    Returns the report as a dictionary with a ``rows`` list.
    """
    runs, out_dir = read_suite(path)
    out_dir.mkdir(parents=True, exist_ok=True)
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            rows = list(pool.map(_execute, runs))
    else:
        rows = [_execute(r) for r in runs]
    _fill_speedups(rows)
    report = {"suite": str(path), "rows": [asdict(r) for r in rows]}
    (out_dir / "report.json").write_text(json.dumps(report, indent=2, allow_nan=True), encoding="utf-8")
    (out_dir / "report.txt").write_text(format_report(rows), encoding="utf-8")
    return report


def _cell(value, fmt="{:.2f}") -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return fmt.format(value) if isinstance(value, float) else str(value)


def format_report(rows) -> str:
    header = ("run", "example", "q", "norm", "strategy", "iters", "slope", "2/(1-q)", "1/(1-q)",
              "speedup%", "theta", "lmin(Sigma)", "status")
    table = [header]
    for r in rows:
        r = r if isinstance(r, dict) else asdict(r)
        table.append((
            r["label"], r["example"], str(r["q"]), r["norm"], r["strategy"],
            _cell(r["iterations"]), _cell(r["fitted_slope"]),
            _cell(r["theoretical_slope"]), _cell(r["adaptive_guarantee_slope"]),
            _cell(r["speedup_pct"], "{:.0f}"), _cell(r["final_theta"]),
            _cell(r["final_lambda_min_sigma"], "{:.3f}"),
            r["status"] if not r.get("error") else f"error: {r['error']}",
        ))
    widths = [max(len(row[i]) for row in table) for i in range(len(header) - 1)]
    lines = []
    for row in table:
        cells = [c.ljust(w) for c, w in zip(row[:-1], widths)] + [row[-1]]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"
