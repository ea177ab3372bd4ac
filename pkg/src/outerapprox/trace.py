"""Per-iteration run traces, their CSV form, and log-log rate fits."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import TooFewPoints

CSV_COLUMNS = (
    "iter",
    "hausdorff_err",
    "surrogate_err",
    "n_vertices",
    "n_halfspaces",
    "theta_k",
    "lambda_min_sigma",
    "lambda_max_sigma",
    "selected_vertex_dist",
    "cut_ratio",
    "wall_ms",
)
_INT_COLUMNS = {"iter", "n_vertices", "n_halfspaces"}


@dataclass
class TraceRow:
    iter: int
    hausdorff_err: float
    surrogate_err: float
    n_vertices: int
    n_halfspaces: int
    theta_k: float
    lambda_min_sigma: float
    lambda_max_sigma: float
    selected_vertex_dist: float
    cut_ratio: Optional[float] = None
    wall_ms: float = 0.0


@dataclass
class RunTrace:
    """Rows for iterations ``0..K`` plus the resolved configuration.

    ``status`` is ``"converged"``, ``"max_iter"`` or ``"running"``.
    """

    config: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    status: str = "running"

    @property
    def iterations(self) -> int:
        """Number of cuts made, i.e. the index of the last row."""
        return self.rows[-1].iter if self.rows else 0

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    @property
    def final(self) -> Optional[TraceRow]:
        return self.rows[-1] if self.rows else None

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.rows], dtype=float)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def format_csv(trace: RunTrace) -> str:
    buf = io.StringIO()
    for key, value in trace.config.items():
        buf.write(f"# {key}={value}\n")
    buf.write(f"# status={trace.status}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in trace.rows:
        writer.writerow([_fmt(getattr(row, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def emit_csv(trace: RunTrace, path) -> None:
    Path(path).write_text(format_csv(trace), encoding="utf-8")


def parse_csv_text(text: str) -> RunTrace:
    config: dict = {}
    status = "running"
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key == "status":
                status = value
            else:
                config[key] = value
        elif line.strip():
            body.append(line)
    reader = csv.reader(body)
    header = next(reader, None)
    if header is None:
        return RunTrace(config=config, status=status)
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {header}")
    rows = []
    for rec in reader:
        kw = {}
        for name, raw in zip(header, rec):
            if raw == "":
                kw[name] = None
            elif name in _INT_COLUMNS:
                kw[name] = int(raw)
            else:
                kw[name] = float(raw)
        rows.append(TraceRow(**kw))
    return RunTrace(config=config, rows=rows, status=status)


def parse_csv(path) -> RunTrace:
    return parse_csv_text(Path(path).read_text(encoding="utf-8"))


# --- rate fitting ------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    window: tuple
    r_squared: float
    n_points: int
    flat: bool = False


def fit_window(total: int) -> tuple[int, int]:
    """Iterations ``ceil(N/2) .. N`` used for the fit."""
    return math.ceil(total / 2), total


def fit_power_law(iters: Sequence[int], errors: Sequence[float], total: Optional[int] = None) -> RateFit:
    """Least-squares line through ``(log k, log E_k)`` over the second half of the run."""
    k = np.asarray(iters, dtype=float)
    e = np.asarray(errors, dtype=float)
    positive = (k >= 1) & (e > 0) & np.isfinite(e)
    if np.count_nonzero(positive) < 4:
        raise TooFewPoints("need at least 4 iterations with positive error")
    N = int(k.max()) if total is None else int(total)
    lo, hi = fit_window(N)
    use = positive & (k >= lo) & (k <= hi)
    if np.count_nonzero(use) < 2:
        raise TooFewPoints(f"fewer than 2 usable points in window [{lo}, {hi}]")
    x, y = np.log(k[use]), np.log(e[use])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    flat = ss_tot <= 1e-24 * max(1.0, float(np.sum(y * y)))
    if flat:
        slope, r2 = 0.0, 0.0
        intercept = float(y.mean())
    else:
        r2 = min(1.0, max(0.0, 1.0 - float(np.sum(resid**2)) / ss_tot))
    return RateFit(float(slope), float(intercept), (lo, hi), r2, int(np.count_nonzero(use)), flat)


def fit_rate(trace: RunTrace) -> RateFit:
    return fit_power_law(trace.column("iter"), trace.column("hausdorff_err"), trace.iterations)
