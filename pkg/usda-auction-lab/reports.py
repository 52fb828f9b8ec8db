"""
Report writers: CSV always, aligned text tables on request, plot data as
plain (x, y, group) CSVs for external plotting tools.
"""

import logging
from collections.abc import Iterable, Mapping
from pathlib import Path

import pandas as pd

from econometrics import FitResult, format_fit_table
from simulation import WinShareReport

logger = logging.getLogger(__name__)

FORMATS = ("csv", "text")

Result = FitResult | Mapping[str, FitResult] | pd.DataFrame | WinShareReport


def _write_csv(frame: pd.DataFrame, path: Path, index: bool = False) -> Path:
    frame.to_csv(path, index=index, encoding="utf-8", lineterminator="\n")
    return path


def _write_text(text: str, path: Path) -> Path:
    path.write_text(text.rstrip("\n") + "\n", encoding="utf-8")
    return path


def fits_to_frame(fits: Mapping[str, FitResult]) -> pd.DataFrame:
    """Union of terms as rows; coefficient and robust error columns per fit."""
    terms: list[str] = []
    for fit in fits.values():
        terms.extend(t for t in fit.coefficients.index if t not in terms)
    frame = pd.DataFrame({"term": terms})
    for label, fit in fits.items():
        frame[f"{label}_coefficient"] = fit.coefficients.reindex(terms).to_numpy()
        frame[f"{label}_robust_se"] = fit.robust_se.reindex(terms).to_numpy()
    return frame


def plot_frame(frame: pd.DataFrame, x: str, y: str, group: str | None = None) -> pd.DataFrame:
    columns = {x: "x", y: "y"}
    if group:
        columns[group] = "group"
    return frame[list(columns)].rename(columns=columns)


def win_share_plot_frame(report: WinShareReport) -> pd.DataFrame:
    """One row per (auction, product, size class) with that class's share of the quantity."""
    cells = report.cells.rename(columns={"small_share": "SMALL", "large_share": "LARGE"})
    long = cells.melt(
        id_vars=["auction_id", "product_code", "set_aside"],
        value_vars=["SMALL", "LARGE"],
        var_name="size_class",
        value_name="share",
    )
    return long.sort_values(["auction_id", "product_code", "size_class"], ignore_index=True)


def write_report(
    results: Mapping[str, Result],
    out_dir: Path,
    formats: Iterable[str] = ("csv",),
) -> list[Path]:
    """Write every named result; returns the files written, in order."""
    formats = set(formats)
    unknown = formats - set(FORMATS)
    if unknown:
        raise ValueError(f"unknown report format(s): {', '.join(sorted(unknown))}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    written: list[Path] = []
    for name, result in results.items():
        if isinstance(result, FitResult):
            result = {name: result}
        if isinstance(result, WinShareReport):
            # Share tables are plot data; they have no text rendering.
            written.append(_write_csv(win_share_plot_frame(result), out_dir / f"{name}_cells.csv"))
            written.append(_write_csv(result.aggregate, out_dir / f"{name}_aggregate.csv"))
        elif isinstance(result, pd.DataFrame):
            keep_index = not isinstance(result.index, pd.RangeIndex)
            written.append(_write_csv(result, out_dir / f"{name}.csv", index=keep_index))
            if "text" in formats:
                written.append(_write_text(result.to_string(), out_dir / f"{name}.txt"))
        else:
            written.append(_write_csv(fits_to_frame(result), out_dir / f"{name}.csv"))
            if "text" in formats:
                written.append(_write_text(format_fit_table(result, title=name), out_dir / f"{name}.txt"))
    for path in written:
        logger.info("Wrote %s", path)
    return written
