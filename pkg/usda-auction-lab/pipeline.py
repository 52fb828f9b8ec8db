"""
Full analysis pipeline — runs every stage in order and writes a manifest.

Stages:
    equilibrium   equilibrium_alpha_<a>.csv per configured alpha
    simulate      bids.csv (after optional wholesale / USDA price joins)
    describe      summary table, bidder-pool timeline, win shares, bids per item
    regress       bidder counts, log offers and log winning prices under each weighting

The manifest (manifest.csv: path, sha256, bytes) is written last and only
when every stage succeeded. A failing stage removes the files this run
already wrote.
"""

import hashlib
import logging
import time
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

from bids_io import (
    attach_usda_prices,
    attach_wholesale,
    frame_to_records,
    load_usda_prices_csv,
    load_wholesale_csv,
    write_bids_csv,
)
from domain import AuctionLabError
from econometrics import RegressionSpec, Response, Weighting, fit_regression
from equilibrium import EquilibriumModel, solve_equilibrium
from reports import Result, plot_frame, write_report
from settings import PipelineConfig
from simulation import (
    BidRecord,
    bidder_pool_timeline,
    bids_per_item,
    records_to_frame,
    simulate_campaign,
    summary_statistics,
    win_share_report,
)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.csv"

RESPONSE_NAMES = {
    Response.N_BIDDERS: "fit_bidder_counts",
    Response.LOG_OFFER: "fit_offer_prices",
    Response.LOG_WIN: "fit_winning_prices",
}
WEIGHTING_LABELS = {
    Weighting.QUANTITY: "WLS",
    Weighting.PRODUCT_EQUALIZED: "WLS equalized",
    Weighting.UNIT: "OLS",
}


class PipelineError(AuctionLabError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class PipelineRun:
    config: PipelineConfig
    out_dir: Path
    artifacts: list[Path] = field(default_factory=list)
    records: list[BidRecord] = field(default_factory=list)
    manifest: Path | None = None

    def write(self, results: Mapping[str, Result], formats=None) -> None:
        formats = self.config.output.formats if formats is None else formats
        self.artifacts.extend(write_report(results, self.out_dir, formats))


# ── Stages ───────────────────────────────────────────────────────
def solve_stage(run: PipelineRun) -> None:
    settings = run.config.equilibrium
    for alpha in settings.alphas:
        model = EquilibriumModel(M=settings.M, alpha=alpha, F1=settings.F1, F2=settings.F2)
        solution = solve_equilibrium(model, grid_size=settings.grid_size)
        name = f"equilibrium_alpha_{alpha:g}"
        run.write({name: solution.to_frame()}, formats=("csv",))
        if "text" in run.config.output.formats:
            path = run.out_dir / f"{name}.txt"
            path.write_text(solution.diagnostics_text() + "\n", encoding="utf-8")
            run.artifacts.append(path)
        logger.info("alpha=%g: b_low=%.6f", alpha, solution.b_low)


def simulate_stage(run: PipelineRun) -> None:
    paths = run.config.paths
    records = simulate_campaign(run.config.simulation)
    if paths.wholesale_csv or paths.usda_prices_csv:
        frame = records_to_frame(records)
        if paths.wholesale_csv:
            frame = attach_wholesale(frame, load_wholesale_csv(paths.wholesale_csv))
        if paths.usda_prices_csv:
            frame = attach_usda_prices(frame, load_usda_prices_csv(paths.usda_prices_csv))
        records = frame_to_records(frame)
    run.artifacts.append(write_bids_csv(records, run.out_dir / "bids.csv"))
    run.records = records


def describe_stage(run: PipelineRun) -> None:
    records = records_to_frame(run.records)
    run.write({"summary_statistics": summary_statistics(records)})
    run.write(
        {
            "bidder_pool_timeline": plot_frame(
                bidder_pool_timeline(records), "date", "active_bidders", "vendor_type"
            ),
            "bids_per_item": plot_frame(bids_per_item(records), "set_aside", "n_bids", "vendor_type"),
            "win_shares": win_share_report(records),
        },
        formats=("csv",),
    )


def regress_stage(run: PipelineRun) -> None:
    settings = run.config.regression
    records = records_to_frame(run.records)
    for response in settings.responses:
        terms = settings.count_terms if response == Response.N_BIDDERS else settings.price_terms
        fits = {
            WEIGHTING_LABELS[weighting]: fit_regression(
                records,
                RegressionSpec(response=response, terms=terms, weighting=weighting),
                settings.flavor,
            )
            for weighting in settings.weightings
        }
        run.write({RESPONSE_NAMES[response]: fits})


STAGES: dict[str, tuple[str, Callable[[PipelineRun], None]]] = {
    "equilibrium": ("Equilibrium solutions", solve_stage),
    "simulate": ("Campaign simulation", simulate_stage),
    "describe": ("Descriptive statistics", describe_stage),
    "regress": ("Regressions", regress_stage),
}


# ── Manifest ─────────────────────────────────────────────────────
def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir: Path, artifacts: list[Path]) -> Path:
    rows = [
        {
            "path": path.relative_to(out_dir).as_posix(),
            "sha256": sha256_file(path),
            "bytes": path.stat().st_size,
        }
        for path in sorted(set(artifacts))
    ]
    manifest = out_dir / MANIFEST_NAME
    pd.DataFrame(rows, columns=["path", "sha256", "bytes"]).to_csv(
        manifest, index=False, encoding="utf-8", lineterminator="\n"
    )
    return manifest


def _remove_partial(run: PipelineRun) -> None:
    for path in run.artifacts:
        path.unlink(missing_ok=True)
    (run.out_dir / MANIFEST_NAME).unlink(missing_ok=True)
    logger.info("Removed %d partial artifact(s)", len(run.artifacts))


def run_pipeline(config: PipelineConfig) -> PipelineRun:
    out_dir = config.paths.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    run = PipelineRun(config=config, out_dir=out_dir)

    total = len(STAGES)
    logger.info("=" * 60)
    logger.info("Set-aside auction pipeline — %d stage(s), seed %d", total, config.simulation.seed)
    logger.info("=" * 60)

    for idx, (key, (name, stage_fn)) in enumerate(STAGES.items(), start=1):
        logger.info("[%d/%d] %s", idx, total, name)
        start = time.time()
        try:
            stage_fn(run)
        except Exception as e:
            elapsed = time.time() - start
            logger.error("[%d/%d] %s — FAILED after %.1fs: %s", idx, total, name, elapsed, e)
            _remove_partial(run)
            raise PipelineError(key, e) from e
        logger.info("[%d/%d] %s — done in %.1fs", idx, total, name, time.time() - start)

    run.manifest = write_manifest(out_dir, run.artifacts)
    logger.info("=" * 60)
    logger.info("All %d stages completed; %d artifacts in %s", total, len(run.artifacts), out_dir)
    logger.info("=" * 60)
    return run
