"""
Set-aside auction lab — command line.

Usage:
    python cli.py equilibrium solve --alpha 0.5
    python cli.py equilibrium verify --alpha 0.5
    python cli.py allocate problem.json
    python cli.py --seed 7 simulate
    python cli.py --lax regress out/bids.csv
    python cli.py report out/bids.csv
    python cli.py --config configs/default.json --format csv pipeline

Exit codes:
    0  success
    1  validation error (bad config, schema or input rows)
    2  solver failure (allocation, equilibrium, regression)
    3  I/O error
"""

import argparse
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from allocation import (
    AllocationError,
    AllocationProblem,
    awards_to_frame,
    quota_report_to_frame,
    solve_allocation,
)
from bids_io import MalformedRowsError, SchemaError, load_bids_csv, write_bids_csv
from domain import DomainValidationError, UnsupportedConfigurationError
from econometrics import EconometricsError, RegressionSpec, Response, fit_regression
from equilibrium import EquilibriumError, EquilibriumModel, solve_equilibrium, verify_solution
from pipeline import RESPONSE_NAMES, WEIGHTING_LABELS, PipelineError, run_pipeline
from reports import plot_frame, write_report
from settings import LOG_LEVEL, PipelineConfig, load_config, with_overrides
from simulation import (
    bidder_pool_timeline,
    bids_per_item,
    records_to_frame,
    simulate_campaign,
    summary_statistics,
    win_share_report,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_IO = 3

VALIDATION_ERRORS = (
    ValidationError,
    DomainValidationError,
    SchemaError,
    MalformedRowsError,
    UnsupportedConfigurationError,
)
SOLVER_ERRORS = (AllocationError, EquilibriumError, EconometricsError)


def exit_code_for(error: BaseException) -> int:
    if isinstance(error, PipelineError):
        error = error.cause
    # UnsupportedConfigurationError is a configuration problem even inside the solver.
    if isinstance(error, VALIDATION_ERRORS):
        return EXIT_VALIDATION
    if isinstance(error, SOLVER_ERRORS):
        return EXIT_SOLVER
    if isinstance(error, OSError):
        return EXIT_IO
    raise error


# ── Commands ─────────────────────────────────────────────────────
def _equilibrium_model(config: PipelineConfig, alpha: float) -> EquilibriumModel:
    settings = config.equilibrium
    return EquilibriumModel(M=settings.M, alpha=alpha, F1=settings.F1, F2=settings.F2)


def cmd_equilibrium(args: argparse.Namespace, config: PipelineConfig) -> int:
    settings = config.equilibrium
    model = _equilibrium_model(config, args.alpha)
    solution = solve_equilibrium(model, grid_size=args.grid_size or settings.grid_size)
    out_dir = config.paths.out_dir
    name = f"equilibrium_alpha_{args.alpha:g}"
    if args.action == "solve":
        write_report({name: solution.to_frame()}, out_dir, ("csv",))
        print(solution.diagnostics_text())
        return EXIT_OK

    gaps = verify_solution(solution, n_quantiles=settings.verify_quantiles)
    write_report({f"{name}_verify": gaps}, out_dir, config.output.formats)
    worst = float(gaps["gap"].max()) if len(gaps) else 0.0
    print(f"max best-response gap: {worst:.6f} (tolerance {args.tolerance:g})")
    return EXIT_OK if worst <= args.tolerance else EXIT_SOLVER


def cmd_allocate(args: argparse.Namespace, config: PipelineConfig) -> int:
    problem = AllocationProblem.model_validate_json(Path(args.problem).read_text(encoding="utf-8"))
    result = solve_allocation(problem)
    write_report(
        {
            "awards": awards_to_frame(result),
            "quota_report": quota_report_to_frame(result),
        },
        config.paths.out_dir,
        ("csv",),
    )
    print(f"awarded {len(result.awards)} item(s), {len(result.unawarded)} unawarded, cost {result.total_cost}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, config: PipelineConfig) -> int:
    records = simulate_campaign(config.simulation)
    path = write_bids_csv(records, config.paths.out_dir / "bids.csv")
    print(f"{len(records)} bids written to {path}")
    return EXIT_OK


def cmd_regress(args: argparse.Namespace, config: PipelineConfig) -> int:
    records = records_to_frame(load_bids_csv(Path(args.bids), strict=args.strict).records)
    settings = config.regression
    results = {}
    for response in settings.responses:
        terms = settings.count_terms if response == Response.N_BIDDERS else settings.price_terms
        results[RESPONSE_NAMES[response]] = {
            WEIGHTING_LABELS[w]: fit_regression(
                records, RegressionSpec(response=response, terms=terms, weighting=w), settings.flavor
            )
            for w in settings.weightings
        }
    write_report(results, config.paths.out_dir, config.output.formats)
    return EXIT_OK


def cmd_report(args: argparse.Namespace, config: PipelineConfig) -> int:
    records = records_to_frame(load_bids_csv(Path(args.bids), strict=args.strict).records)
    out_dir = config.paths.out_dir
    write_report({"summary_statistics": summary_statistics(records)}, out_dir, config.output.formats)
    write_report(
        {
            "bidder_pool_timeline": plot_frame(
                bidder_pool_timeline(records), "date", "active_bidders", "vendor_type"
            ),
            "bids_per_item": plot_frame(bids_per_item(records), "set_aside", "n_bids", "vendor_type"),
            "win_shares": win_share_report(records),
        },
        out_dir,
        ("csv",),
    )
    return EXIT_OK


def cmd_pipeline(args: argparse.Namespace, config: PipelineConfig) -> int:
    run = run_pipeline(config)
    print(f"{len(run.artifacts)} artifacts; manifest {run.manifest}")
    return EXIT_OK


# ── Arguments ────────────────────────────────────────────────────
def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        description="Set-aside procurement auction lab: equilibrium, allocation, simulation, regression",
    )
    parser.add_argument("--config", help="Pipeline config JSON (default from AUCTION_LAB_CONFIG)")
    parser.add_argument("--seed", type=int, help="Override simulation.seed")
    parser.add_argument("--out-dir", help="Override paths.out_dir")
    parser.add_argument(
        "--format",
        dest="formats",
        action="append",
        choices=["csv", "text"],
        help="Report format; repeat for several (CSV is always written)",
    )
    strictness = parser.add_mutually_exclusive_group()
    strictness.add_argument("--strict", dest="strict", action="store_true", default=True, help="Reject unknown CSV columns and bad rows (default)")
    strictness.add_argument("--lax", dest="strict", action="store_false", help="Keep unknown CSV columns and skip bad rows")

    sub = parser.add_subparsers(dest="command", required=True)

    eq = sub.add_parser("equilibrium", help="Solve or verify the bidding equilibrium")
    eq.add_argument("action", choices=["solve", "verify"])
    eq.add_argument("--alpha", type=float, default=0.5, help="Set-aside fraction")
    eq.add_argument("--grid-size", type=int, help="Price grid points (default from config)")
    eq.add_argument("--tolerance", type=float, default=0.005, help="Maximum best-response gap for verify")
    eq.set_defaults(handler=cmd_equilibrium)

    alloc = sub.add_parser("allocate", help="Winner determination for one problem JSON")
    alloc.add_argument("problem", help="AllocationProblem JSON file")
    alloc.set_defaults(handler=cmd_allocate)

    sim = sub.add_parser("simulate", help="Simulate a campaign and write bids.csv")
    sim.set_defaults(handler=cmd_simulate)

    reg = sub.add_parser("regress", help="Fit the configured regressions on a bids CSV")
    reg.add_argument("bids", help="Bids CSV")
    reg.set_defaults(handler=cmd_regress)

    rep = sub.add_parser("report", help="Descriptive statistics and plot data for a bids CSV")
    rep.add_argument("bids", help="Bids CSV")
    rep.set_defaults(handler=cmd_report)

    pipe = sub.add_parser("pipeline", help="Run every stage and write a manifest")
    pipe.set_defaults(handler=cmd_pipeline)

    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=LOG_LEVEL,
        format="%(asctime)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )
    args = parse_args(argv)
    try:
        config = with_overrides(
            load_config(args.config),
            seed=args.seed,
            out_dir=Path(args.out_dir).resolve() if args.out_dir else None,
            formats=args.formats,
        )
        return args.handler(args, config)
    except Exception as e:
        code = exit_code_for(e)
        logger.error("%s failed: %s", args.command, e)
        return code


if __name__ == "__main__":
    sys.exit(main())
