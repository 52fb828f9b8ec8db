"""
Bids CSV schema — load, write and auxiliary joins.

One flat table carries every bid with the covariates the regressions use.
Loading validates each row into a BidRecord; bad rows are collected with
their file line numbers instead of stopping at the first one.

Usage:
    from bids_io import load_bids_csv, write_bids_csv

    loaded = load_bids_csv(Path("out/bids.csv"), strict=True)
    write_bids_csv(loaded.records, Path("copy.csv"))
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd
from pydantic import ConfigDict, ValidationError

from domain import AuctionLabError, PRICE_DIGITS
from simulation import BID_COLUMNS, BidRecord, records_to_frame

logger = logging.getLogger(__name__)

WHOLESALE_COLUMNS = ["year", "month", "price_per_lb"]
USDA_PRICE_COLUMNS = ["product_code", "year", "price_per_lb"]


# ── Errors ───────────────────────────────────────────────────────
class SchemaError(AuctionLabError):
    def __init__(self, path: Path, columns: Sequence[str], problem: str):
        super().__init__(f"{path}: {problem}: {', '.join(columns)}")
        self.path = path
        self.columns = list(columns)


class MalformedRowsError(AuctionLabError):
    def __init__(self, path: Path, rejected: list["RejectedRow"]):
        first = rejected[0]
        super().__init__(
            f"{path}: {len(rejected)} malformed row(s); first at line {first.line}: {first.message}"
        )
        self.path = path
        self.rejected = rejected


# ── Models ───────────────────────────────────────────────────────
class LaxBidRecord(BidRecord):
    """BidRecord that keeps columns outside the schema as extra fields."""

    model_config = ConfigDict(frozen=True, extra="allow")


@dataclass(frozen=True)
class RejectedRow:
    line: int
    message: str


@dataclass
class LoadedBids:
    records: list[BidRecord]
    rejected: list[RejectedRow] = field(default_factory=list)
    extra_columns: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)


def _row_message(error: ValidationError) -> str:
    parts = []
    for detail in error.errors():
        where = ".".join(str(p) for p in detail["loc"])
        parts.append(f"{where}: {detail['msg']}")
    return "; ".join(parts)


# ── Load / write ─────────────────────────────────────────────────
def load_bids_csv(path: Path, strict: bool = True) -> LoadedBids:
    """Read a bids CSV.

    Missing schema columns always fail. Unknown columns fail under ``strict``
    and are kept as extra record fields otherwise. Malformed rows abort under
    ``strict``; otherwise they are logged and skipped.
    """
    path = Path(path)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    header = list(frame.columns)

    missing = [c for c in BID_COLUMNS if c not in header]
    if missing:
        raise SchemaError(path, missing, "missing required column(s)")
    extra = [c for c in header if c not in BID_COLUMNS]
    if extra and strict:
        raise SchemaError(path, extra, "unknown column(s)")

    model = BidRecord if not extra else LaxBidRecord
    records: list[BidRecord] = []
    rejected: list[RejectedRow] = []
    for index, row in enumerate(frame.to_dict("records")):
        try:
            records.append(model.model_validate(row))
        except ValidationError as e:
            # Line 1 is the header.
            rejected.append(RejectedRow(line=index + 2, message=_row_message(e)))

    if rejected:
        if strict:
            raise MalformedRowsError(path, rejected)
        for row in rejected:
            logger.warning("%s line %d rejected: %s", path.name, row.line, row.message)
    logger.info("Loaded %d bids from %s (%d rejected)", len(records), path, len(rejected))
    return LoadedBids(records=records, rejected=rejected, extra_columns=extra)


def write_bids_csv(records: Sequence[BidRecord], path: Path) -> Path:
    rows = []
    extra: list[str] = []
    for record in records:
        row = record.model_dump(mode="json")
        rows.append(row)
        for key in record.model_extra or {}:
            if key not in extra:
                extra.append(key)
    frame = pd.DataFrame(rows, columns=BID_COLUMNS + extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    logger.info("Wrote %d bids to %s", len(frame), path)
    return path


def _load_table(path: Path, columns: list[str]) -> pd.DataFrame:
    frame = pd.read_csv(path, encoding="utf-8")
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise SchemaError(Path(path), missing, "missing required column(s)")
    return frame[columns]


def load_wholesale_csv(path: Path) -> pd.DataFrame:
    return _load_table(path, WHOLESALE_COLUMNS)


def load_usda_prices_csv(path: Path) -> pd.DataFrame:
    return _load_table(path, USDA_PRICE_COLUMNS)


# ── Joins ────────────────────────────────────────────────────────
def _join(frame: pd.DataFrame, table: pd.DataFrame, keys: list[str], target: str) -> pd.DataFrame:
    lookup = table.drop_duplicates(keys, keep="last").rename(columns={"price_per_lb": "_joined"})
    merged = frame.merge(lookup, on=keys, how="left", validate="many_to_one")
    unmatched = merged["_joined"].isna()
    if unmatched.any():
        logger.warning(
            "%d of %d bids have no %s match on %s; keeping their existing values",
            int(unmatched.sum()),
            len(merged),
            target,
            "/".join(keys),
        )
    merged[target] = merged["_joined"].where(~unmatched, merged[target]).round(PRICE_DIGITS)
    return merged.drop(columns=["_joined"])


def attach_wholesale(records: Sequence[BidRecord] | pd.DataFrame, wholesale: pd.DataFrame) -> pd.DataFrame:
    """Set wholesale_price from the monthly series, matched by auction year and month."""
    frame = records_to_frame(records).copy()
    dates = pd.to_datetime(frame["date"])
    frame["year"] = dates.dt.year
    frame["month"] = dates.dt.month
    joined = _join(frame, wholesale, ["year", "month"], "wholesale_price")
    return joined.drop(columns=["year", "month"])


def attach_usda_prices(records: Sequence[BidRecord] | pd.DataFrame, usda: pd.DataFrame) -> pd.DataFrame:
    """Set usda_ref_price from the annual reference prices, matched by product and year."""
    frame = records_to_frame(records).copy()
    frame["year"] = pd.to_datetime(frame["date"]).dt.year
    joined = _join(frame, usda, ["product_code", "year"], "usda_ref_price")
    return joined.drop(columns=["year"])


def frame_to_records(frame: pd.DataFrame) -> list[BidRecord]:
    """Validate a bids frame back into records (after joins)."""
    out = frame[BID_COLUMNS].copy()
    for column in ("date", "window_start", "window_end"):
        out[column] = pd.to_datetime(out[column]).dt.date
    return [BidRecord.model_validate(row) for row in out.to_dict("records")]
