"""Command-line entry point: ``run``, ``suite`` and ``fit`` subcommands."""
from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .engine import RunConfig, run
from .errors import OuterApproxError
from .suite import DEFAULT_SUITE, format_report, parse_norm, run_suite
from .trace import fit_rate, parse_csv

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MAX_ITER = 2
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="outerapprox", description="Polyhedral outer approximation of convex upper images.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_run = sub.add_parser("run", help="run one configuration")
    p_run.add_argument("--problem", required=True, help="ball2, ball3, ball4, example2 or jahn")
    p_run.add_argument("--norm", default="euclid", metavar="{euclid|adaptive|fixed:<path>}")
    p_run.add_argument("--eps", type=float, default=1e-3)
    p_run.add_argument("--eps0", type=float, default=0.1)
    p_run.add_argument("--max-iter", type=int, default=500)
    p_run.add_argument("--strategy", choices=["full", "lp", "hybrid"], default="full")
    p_run.add_argument("--hybrid-period", type=int, default=50)
    p_run.add_argument("--cut-point", choices=["image", "boundary"], default="image")
    p_run.add_argument("--trace", metavar="PATH", help="write the CSV trace here")

    p_suite = sub.add_parser("suite", help="run a suite file and print the report")
    p_suite.add_argument("path", nargs="?", default=str(DEFAULT_SUITE))
    p_suite.add_argument("--parallel", type=int, default=1)

    p_fit = sub.add_parser("fit", help="fit the convergence rate of a CSV trace")
    p_fit.add_argument("csv")
    return parser


def _cmd_run(args) -> int:
    if not args.norm.startswith("fixed:") and args.norm not in ("euclid", "adaptive"):
        raise UsageError(f"--norm must be euclid, adaptive or fixed:<path>, not {args.norm!r}")
    norm, matrix = parse_norm(args.norm)
    try:
        cfg = RunConfig(
            problem=args.problem,
            norm=norm,
            fixed_matrix=matrix,
            eps=args.eps,
            eps0=args.eps0,
            max_iter=args.max_iter,
            strategy=args.strategy,
            hybrid_period=args.hybrid_period,
            cut_point=args.cut_point,
            trace_path=args.trace,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    trace = run(cfg)
    final = trace.final
    print(f"{cfg.problem} {cfg.norm.value} {cfg.strategy.value}: {trace.status} after "
          f"{trace.iterations} iterations, error {final.hausdorff_err:.3e}, theta {final.theta_k:.3f}")
    return EXIT_OK if trace.converged else EXIT_MAX_ITER


def _cmd_suite(args) -> int:
    report = run_suite(args.path, parallel=args.parallel)
    print(format_report(report["rows"]), end="")
    return EXIT_ERROR if any(r["error"] for r in report["rows"]) else EXIT_OK


def _cmd_fit(args) -> int:
    fit = fit_rate(parse_csv(args.csv))
    lo, hi = fit.window
    flat = " (flat)" if fit.flat else ""
    print(f"slope {fit.slope:.4f} intercept {fit.intercept:.4f} window {lo}..{hi} "
          f"r2 {fit.r_squared:.4f}{flat}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        handler = {"run": _cmd_run, "suite": _cmd_suite, "fit": _cmd_fit}[args.command]
        return handler(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (OuterApproxError, OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
