"""
Tests for the full pipeline.

Covers:
- Every stage writes its artifacts and the manifest lists them
- Same seed, same manifest bytes
- Optional wholesale join
- A failing stage leaves no partial output
"""

import pandas as pd
import pytest

from econometrics import Term
from pipeline import MANIFEST_NAME, PipelineError, run_pipeline, sha256_file
from settings import EquilibriumConfig, OutputConfig, PathsConfig, PipelineConfig, RegressionConfig
from simulation import ProductSpec, SimConfig, VendorClassSpec, VendorPool


def _config(out_dir, count_terms=(Term.SET_ASIDE_CELLS, Term.DEMAND), wholesale_csv=None) -> PipelineConfig:
    return PipelineConfig(
        schema_version=1,
        paths=PathsConfig(out_dir=out_dir, wholesale_csv=wholesale_csv),
        simulation=SimConfig(
            seed=11,
            n_auctions=40,
            products=(
                ProductSpec(
                    product_code="GROUND",
                    alpha=0.5,
                    alternative_alphas=(0.0, 1.0),
                    alternative_probability=0.5,
                    items_min=1,
                    items_max=3,
                    reference_price=2.6,
                ),
            ),
            vendor_pool=VendorPool(
                small=VendorClassSpec(count=5, participation=0.8),
                large=VendorClassSpec(count=3, participation=0.8),
            ),
        ),
        equilibrium=EquilibriumConfig(grid_size=201),
        regression=RegressionConfig(
            count_terms=count_terms,
            price_terms=(Term.SET_ASIDE_CELLS, Term.DEMAND, Term.NBID),
        ),
        output=OutputConfig(formats=("csv", "text")),
    )


def test_pipeline_writes_every_stage(tmp_path) -> None:
    run = run_pipeline(_config(tmp_path / "out"))
    out = tmp_path / "out"
    for alpha in ("0", "0.5", "1"):
        assert (out / f"equilibrium_alpha_{alpha}.csv").is_file()
        assert (out / f"equilibrium_alpha_{alpha}.txt").is_file()
    for name in (
        "bids.csv",
        "summary_statistics.csv",
        "bidder_pool_timeline.csv",
        "bids_per_item.csv",
        "win_shares_cells.csv",
        "win_shares_aggregate.csv",
        "fit_bidder_counts.csv",
        "fit_offer_prices.txt",
        "fit_winning_prices.csv",
    ):
        assert (out / name).is_file(), name
    assert run.manifest == out / MANIFEST_NAME
    assert len(run.records) > 0


def test_manifest_lists_artifacts_with_hashes(tmp_path) -> None:
    run = run_pipeline(_config(tmp_path / "out"))
    manifest = pd.read_csv(run.manifest)
    assert list(manifest.columns) == ["path", "sha256", "bytes"]
    assert manifest["path"].tolist() == sorted(manifest["path"])
    assert MANIFEST_NAME not in set(manifest["path"])
    bids = manifest.set_index("path").loc["bids.csv"]
    assert bids["sha256"] == sha256_file(tmp_path / "out" / "bids.csv")
    assert bids["bytes"] == (tmp_path / "out" / "bids.csv").stat().st_size


def test_same_seed_same_manifest(tmp_path) -> None:
    a = run_pipeline(_config(tmp_path / "a"))
    b = run_pipeline(_config(tmp_path / "b"))
    assert a.manifest.read_bytes() == b.manifest.read_bytes()


def test_wholesale_join_applied(tmp_path) -> None:
    table = tmp_path / "wholesale.csv"
    months = pd.period_range("2014-10", "2016-12", freq="M")
    pd.DataFrame({"year": months.year, "month": months.month, "price_per_lb": 1.75}).to_csv(table, index=False)
    run_pipeline(_config(tmp_path / "out", wholesale_csv=table))
    bids = pd.read_csv(tmp_path / "out" / "bids.csv")
    assert bids["wholesale_price"].eq(1.75).all()


def test_failing_stage_removes_partial_output(tmp_path) -> None:
    out = tmp_path / "out"
    config = _config(out, count_terms=(Term.SET_ASIDE_CELLS, Term.VENDOR_FE))
    with pytest.raises(PipelineError) as excinfo:
        run_pipeline(config)
    assert excinfo.value.stage == "regress"
    assert list(out.iterdir()) == []
