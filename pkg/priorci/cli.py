"""
Command-line interface.

    priorci solve configs/factorial20.json -o factorial20.solution.json
    priorci curves factorial20.solution.json --gamma-max 10 --step 0.05 -o curve.csv
    priorci interval configs/real_data.json real.solution.json configs/real_data.csv
    priorci naive --rho -0.7071067811865476 --q 1.991673 --dof 76
    priorci mc-check factorial20.solution.json --gamma 0 1 2 6
    priorci sweep configs/factorial20.json --vary lambda --values 0.05 0.2 0.5 1
    priorci serve

Results go to stdout (or the -o file), logs to stderr. Exit codes: 0 on
success, 1 when the optimizer did not converge, 2 on invalid input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from . import __version__, settings
from .dist_core import DegreesOfFreedom, critical_value
from .documents import (
    McSection,
    RunConfigDocument,
    SolutionDocument,
    build_geometry,
    dump_json,
    load_config,
    load_solution,
)
from .errors import ConvergenceError, InvalidInputError, PriorCIError
from .mcheck import compare_with_quadrature
from .optimize import format_table, sensitivity_sweep, solve, sweep_frame
from .perfeval import curve, gamma_grid, naive_min_coverage
from .regress import realize_interval, standard_interval
from .utils.csv_io import read_data_csv, write_curve_csv, write_sweep_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 1
EXIT_INPUT_ERROR = 2


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _workers(args) -> int:
    requested = getattr(args, "workers", None)
    cap = settings.max_workers()
    return cap if requested is None else max(1, min(requested, cap))


def _apply_overrides(doc: RunConfigDocument, args) -> RunConfigDocument:
    solve_updates = {}
    for flag, key in (("lam", "lam"), ("d", "d"), ("max_iterations", "max_iterations"), ("multistart", "multistart")):
        value = getattr(args, flag, None)
        if value is not None:
            solve_updates[key] = value
    if getattr(args, "knot_step", None) is not None:
        solve_updates.update(knot_step=args.knot_step, knots=None)
    problem_updates = {}
    if getattr(args, "alpha", None) is not None:
        problem_updates["alpha"] = args.alpha
    if not (solve_updates or problem_updates):
        return doc
    # re-validate so overrides go through the same checks as the file
    merged = doc.model_dump(by_alias=True)
    merged["solve"].update({("lambda" if k == "lam" else k): v for k, v in solve_updates.items()})
    merged["problem"].update(problem_updates)
    try:
        return RunConfigDocument.model_validate(merged)
    except ValidationError as exc:
        raise InvalidInputError(f"invalid override: {exc}") from exc


def _write_text(text: str, output: Optional[str]) -> None:
    if output:
        Path(output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_solve(args) -> int:
    doc = _apply_overrides(load_config(args.config), args)
    geom = build_geometry(doc.problem)
    config = doc.solve_config(geom)
    report = solve(config)
    solution = SolutionDocument.from_report(report, config, doc.config_hash())
    output = args.output or str(Path(args.config).with_suffix(".solution.json"))
    Path(output).write_text(dump_json(solution), encoding="utf-8")
    label = doc.solve.label or f"lambda={config.lam:g}"
    print(format_table([(label, report)]))
    print(f"min coverage on fine grid: {report.min_coverage_on_fine_grid:.6f}")
    print(f"solution written to {output}")
    if not report.converged:
        raise ConvergenceError(f"optimizer did not converge: {report.message}")
    return EXIT_OK


def cmd_curves(args) -> int:
    solution = load_solution(args.solution)
    bs = solution.to_bs()
    result = curve(
        bs, solution.rho, gamma_grid(args.gamma_max, args.step), solution.eval.settings(), workers=_workers(args)
    )
    write_curve_csv(result, args.output or sys.stdout)
    return EXIT_OK


def cmd_interval(args) -> int:
    doc = load_config(args.config)
    solution = load_solution(args.solution)
    bs = solution.to_bs()
    geom = build_geometry(doc.problem, read_data_csv(args.data))
    if abs(geom.rho - solution.rho) > 1e-9:
        raise InvalidInputError(f"solution was built for rho={solution.rho:.10g}, the data give {geom.rho:.10g}")
    result = {
        "theta_hat": geom.theta_hat,
        "tau_hat": geom.tau_hat,
        "sigma_hat": geom.sigma_hat,
        "rho": geom.rho,
        "dof": geom.dof.to_json(),
        "standard": standard_interval(geom).to_dict(),
        "new": realize_interval(geom, bs).to_dict(),
    }
    print(json.dumps(result, indent=2))
    return EXIT_OK


def cmd_naive(args) -> int:
    dof = DegreesOfFreedom.parse(args.dof)
    if args.q is None:
        args.q = critical_value(args.alpha, dof)
    found = naive_min_coverage(args.rho, args.q, args.alpha, dof, args.gamma_max, args.step)
    if args.output:
        write_curve_csv(found.curve, args.output)
    print(
        json.dumps(
            {
                "rho": args.rho,
                "q": args.q,
                "alpha": args.alpha,
                "dof": dof.to_json(),
                "min_coverage": found.min_coverage,
                "gamma_star": found.gamma_star,
                "grid_min_coverage": found.curve.min_coverage,
                "grid_gamma": found.curve.argmin_gamma,
            },
            indent=2,
        )
    )
    return EXIT_OK


def cmd_mc_check(args) -> int:
    solution = load_solution(args.solution)
    bs = solution.to_bs()
    mc = McSection(
        sample_count=args.samples, rng_seed=args.seed, antithetic=args.antithetic, rao_blackwell=args.rao_blackwell
    )
    rows = compare_with_quadrature(bs, solution.rho, args.gamma, mc.settings(), settings=solution.eval.settings())
    report = {
        "samples": args.samples,
        "seed": args.seed,
        "rows": [row.to_dict() for row in rows],
        "all_pass": all(row.passed for row in rows),
    }
    _write_text(json.dumps(report, indent=2) + "\n", args.output)
    return EXIT_OK


def cmd_sweep(args) -> int:
    doc = _apply_overrides(load_config(args.config), args)
    geom = build_geometry(doc.problem)
    base = doc.solve_config(geom)
    items = sensitivity_sweep(base, args.vary, args.values, workers=_workers(args))
    if args.output:
        write_sweep_csv(sweep_frame(items), args.output)
    solved = [(item.label, item.report) for item in items if item.report is not None]
    if solved:
        print(format_table(solved))
    for item in items:
        if item.error:
            print(f"{item.label}: {item.error}")
    if any(item.report is None or not item.report.converged for item in items):
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("priorci.main:app", host=args.host, port=args.port, reload=False)
    return EXIT_OK


def _add_solve_overrides(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda", dest="lam", type=float, help="weight of the uniform part of nu")
    parser.add_argument("--d", type=float, help="cutoff beyond which the interval is the standard one")
    parser.add_argument("--knot-step", type=float, help="even knot spacing on [0, d]")
    parser.add_argument("--alpha", type=float, help="1 - confidence level")
    parser.add_argument("--max-iterations", type=int)
    parser.add_argument("--multistart", type=int, help="extra perturbed starts")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="priorci", description="Confidence intervals that use uncertain prior information")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="compute b and s for a run config")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="solution JSON path (default: <config>.solution.json)")
    _add_solve_overrides(p)
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("curves", help="coverage and e^2 of a solution over a gamma grid")
    p.add_argument("solution")
    p.add_argument("--gamma-max", type=float, default=10.0)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--workers", type=int)
    p.add_argument("-o", "--output", help="CSV path (default: stdout)")
    p.set_defaults(handler=cmd_curves)

    p = sub.add_parser("interval", help="standard and new interval on observed data")
    p.add_argument("config")
    p.add_argument("solution")
    p.add_argument("data", help="CSV with a 'y' column")
    p.set_defaults(handler=cmd_interval)

    p = sub.add_parser("naive", help="coverage of the preliminary-test interval")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--q", type=float, help="test critical value (default t_{m, 1 - alpha/2})")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--dof", required=True)
    p.add_argument("--gamma-max", type=float, default=10.0)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("-o", "--output", help="curve CSV path")
    p.set_defaults(handler=cmd_naive)

    p = sub.add_parser("mc-check", help="compare quadrature with Monte Carlo")
    p.add_argument("solution")
    p.add_argument("--gamma", type=float, nargs="+", default=[0.0, 1.0, 2.0, 6.0])
    p.add_argument("--samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--antithetic", action="store_true")
    p.add_argument("--rao-blackwell", action="store_true")
    p.add_argument("-o", "--output", help="report JSON path (default: stdout)")
    p.set_defaults(handler=cmd_mc_check)

    p = sub.add_parser("sweep", help="solve over a list of lambda, d or knot-step values")
    p.add_argument("config")
    p.add_argument("--vary", choices=["lambda", "d", "knot_step"], required=True)
    p.add_argument("--values", type=float, nargs="+", required=True)
    p.add_argument("--workers", type=int)
    p.add_argument("-o", "--output", help="summary CSV path")
    _add_solve_overrides(p)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(handler=cmd_serve)
    return parser


def _error(exc: BaseException) -> None:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    try:
        return args.handler(args)
    except ConvergenceError as exc:
        _error(exc)
        return EXIT_NOT_CONVERGED
    except (PriorCIError, FileNotFoundError) as exc:
        _error(exc)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
