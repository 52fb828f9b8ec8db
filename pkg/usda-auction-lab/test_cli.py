"""
Tests for the command line and its exit codes.

Covers:
- simulate, allocate, equilibrium, regress and report commands
- Exit codes for validation, solver and I/O failures
"""

import json

import pandas as pd
import pytest

from cli import EXIT_IO, EXIT_OK, EXIT_SOLVER, EXIT_VALIDATION, exit_code_for, main
from domain import DomainValidationError
from pipeline import PipelineError
from simulation import BID_COLUMNS, SimConfig, simulate_auction

SIMULATION = {
    "seed": 5,
    "n_auctions": 6,
    "products": [
        {"product_code": "GROUND", "alpha": 0.5, "alternative_alphas": [0.0], "alternative_probability": 0.5}
    ],
    "vendor_pool": {"small": {"count": 3, "participation": 0.9}, "large": {"count": 2, "participation": 0.9}},
}

ROW = (
    "A0001,2015-01-05,SOL0001,GROUND,CTN-40,A0001-P01-001,40000,CA,"
    "2015-01-26,2015-02-08,{vendor},{size},False,{price},{won},0.5,0.04,2,2.45,2.6"
)


@pytest.fixture
def config_path(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"schema_version": 1, "simulation": SIMULATION}), encoding="utf-8")
    return path


def _run(config_path, out_dir, *args: str) -> int:
    return main(["--config", str(config_path), "--out-dir", str(out_dir), *args])


def _bids_csv(tmp_path, columns=BID_COLUMNS):
    rows = [
        ROW.format(vendor="S01", size="SMALL", price="2.6", won="True"),
        ROW.format(vendor="L01", size="LARGE", price="2.7", won="False"),
    ]
    frame = pd.DataFrame([r.split(",") for r in rows], columns=BID_COLUMNS)[list(columns)]
    path = tmp_path / "bids_in.csv"
    frame.to_csv(path, index=False)
    return path


# ── Commands ─────────────────────────────────────────────────────


def test_simulate_writes_bids(tmp_path, config_path) -> None:
    out = tmp_path / "out"
    assert _run(config_path, out, "simulate") == EXIT_OK
    bids = pd.read_csv(out / "bids.csv")
    assert list(bids.columns) == BID_COLUMNS
    assert bids["auction_id"].nunique() <= 6


def test_seed_override_changes_output(tmp_path, config_path) -> None:
    assert _run(config_path, tmp_path / "a", "simulate") == EXIT_OK
    assert main(["--config", str(config_path), "--out-dir", str(tmp_path / "b"), "--seed", "6", "simulate"]) == 0
    assert (tmp_path / "a" / "bids.csv").read_bytes() != (tmp_path / "b" / "bids.csv").read_bytes()


def test_allocate_problem_file(tmp_path, config_path) -> None:
    problem = simulate_auction(SimConfig.model_validate(SIMULATION), 0).problem
    path = tmp_path / "problem.json"
    path.write_text(problem.model_dump_json(), encoding="utf-8")
    out = tmp_path / "out"
    assert _run(config_path, out, "allocate", str(path)) == EXIT_OK
    assert (out / "awards.csv").is_file()
    assert (out / "quota_report.csv").is_file()


def test_equilibrium_solve_full_set_aside(tmp_path, config_path) -> None:
    out = tmp_path / "out"
    assert _run(config_path, out, "equilibrium", "solve", "--alpha", "1", "--grid-size", "201") == EXIT_OK
    assert (out / "equilibrium_alpha_1.csv").is_file()


def test_report_writes_tables(tmp_path, config_path) -> None:
    out = tmp_path / "out"
    assert _run(config_path, out, "simulate") == EXIT_OK
    assert _run(config_path, out, "report", str(out / "bids.csv")) == EXIT_OK
    assert (out / "summary_statistics.csv").is_file()
    assert (out / "summary_statistics.txt").is_file()
    assert (out / "win_shares_aggregate.csv").is_file()


# ── Exit codes ───────────────────────────────────────────────────


def test_missing_column_is_validation_error(tmp_path, config_path) -> None:
    bids = _bids_csv(tmp_path, [c for c in BID_COLUMNS if c != "won"])
    assert _run(config_path, tmp_path / "out", "regress", str(bids)) == EXIT_VALIDATION


def test_unknown_config_key_is_validation_error(tmp_path) -> None:
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"schema_version": 1, "simulation": SIMULATION, "extra": 1}), encoding="utf-8")
    assert _run(path, tmp_path / "out", "simulate") == EXIT_VALIDATION


def test_missing_bids_file_is_io_error(tmp_path, config_path) -> None:
    assert _run(config_path, tmp_path / "out", "regress", str(tmp_path / "absent.csv")) == EXIT_IO


def test_rank_deficient_regression_is_solver_error(tmp_path, config_path) -> None:
    # Every row sits in the 50% set-aside, so the baseline cell is never observed.
    bids = _bids_csv(tmp_path)
    assert _run(config_path, tmp_path / "out", "regress", str(bids)) == EXIT_SOLVER


def test_pipeline_error_unwrapped() -> None:
    wrapped = PipelineError("regress", DomainValidationError("bad"))
    assert exit_code_for(wrapped) == EXIT_VALIDATION


def test_unexpected_error_propagates() -> None:
    with pytest.raises(KeyError):
        exit_code_for(KeyError("boom"))
