"""
Synthetic auction campaigns and their descriptive statistics.

Each auction draws its products, items, participating vendors and private
costs from its own random stream, turns costs into bids with the configured
strategy, runs winner determination and emits one BidRecord per bid. The
stream of auction ``i`` is keyed by (seed, i), so results do not depend on
how auctions are scheduled across workers.

Usage:
    config = SimConfig.model_validate_json(Path("sim.json").read_text())
    records = simulate_campaign(config)
    summary_statistics(records)
"""

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import date, timedelta
from enum import StrEnum
from itertools import repeat
from typing import Literal

import numpy as np
import pandas as pd
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    field_validator,
    model_validator,
)

from allocation import AllocationProblem, AllocationResult, solve_allocation
from domain import (
    PRICE_DIGITS,
    Bid,
    CapacityConstraint,
    Destination,
    Item,
    SetAsidePolicy,
    SizeClass,
    Solicitation,
    UnsupportedConfigurationError,
    Vendor,
    demand_level,
)
from equilibrium import EquilibriumModel, ValueDistribution, solve_equilibrium

logger = logging.getLogger(__name__)

DESTINATION_STATES = ("CA", "GA", "IL", "NY", "TX", "WA")

TABLE1_ROWS = [
    "number of auctions",
    "number of items",
    "number of bids",
    "Small bidder pool",
    "Large bidder pool",
    "Average number of small bidders",
    "Average number of small bidders (sd)",
    "Average number of large bidders",
    "Average number of large bidders (sd)",
    "Mean Offer price",
    "Mean Offer price (sd)",
    "Mean Winning price",
    "Mean Winning price (sd)",
    "Mean Item Quantity",
    "Mean Item Quantity (sd)",
    "Exist in all years",
]


# ── Configuration ────────────────────────────────────────────────
class StrategyMode(StrEnum):
    EQUILIBRIUM_MODEL = "EQUILIBRIUM_MODEL"
    MARKUP_RULE = "MARKUP_RULE"
    SHADED_RULE = "SHADED_RULE"


class _Config(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class ProductSpec(_Config):
    product_code: str
    package_size_class: str = ""
    alpha: float = Field(ge=0.0, le=1.0)
    # With this probability an auction uses one of the alternative alphas.
    alternative_alphas: tuple[float, ...] = ()
    alternative_probability: float = Field(default=0.0, ge=0.0, le=1.0)
    sdvosb_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    truckload_lbs: PositiveInt = 40_000
    items_min: PositiveInt = 1
    items_max: PositiveInt = 4
    half_truck_probability: float = Field(default=0.0, ge=0.0, le=1.0)
    windows: PositiveInt = 1
    inclusion_probability: float = Field(default=1.0, ge=0.0, le=1.0)
    reference_price: PositiveFloat = 1.0
    annual_price_change: float = Field(default=0.0, gt=-1.0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "ProductSpec":
        if self.items_min > self.items_max:
            raise ValueError(f"{self.product_code}: items_min exceeds items_max")
        if any(not 0.0 <= a <= 1.0 for a in self.alternative_alphas):
            raise ValueError(f"{self.product_code}: alternative alphas must lie in [0, 1]")
        return self

    def usda_price(self, year: int, base_year: int) -> float:
        return self.reference_price * (1.0 + self.annual_price_change) ** (year - base_year)


class VendorClassSpec(_Config):
    count: NonNegativeInt = 0
    participation: float = Field(default=1.0, ge=0.0, le=1.0)
    cost: ValueDistribution = ValueDistribution.uniform(0.8, 1.2)
    markup: float = Field(default=0.1, ge=0.0)
    shade: float = Field(default=0.3, ge=0.0, le=1.0)
    capacity_trucks: PositiveInt | None = None
    capacity_probability: float = Field(default=0.0, ge=0.0, le=1.0)


class VendorPool(_Config):
    small: VendorClassSpec = VendorClassSpec()
    large: VendorClassSpec = VendorClassSpec()


class WholesaleSeries(_Config):
    """Monthly wholesale price: drifting level plus an annual sinusoid."""

    base: PositiveFloat = 2.5
    drift_per_month: float = 0.002
    amplitude: float = Field(default=0.08, ge=0.0)

    def price_on(self, day: date, start: date) -> float:
        months = (day.year - start.year) * 12 + (day.month - start.month)
        level = self.base * (1.0 + self.drift_per_month * months)
        seasonal = self.amplitude * math.sin(2.0 * math.pi * (day.month - 1) / 12.0)
        return round(max(level + seasonal, 0.01), PRICE_DIGITS)


class SimConfig(_Config):
    seed: int = Field(ge=0, lt=2**64)
    n_auctions: PositiveInt
    start_date: date = date(2014, 10, 6)
    auction_interval_days: PositiveInt = 14
    products: tuple[ProductSpec, ...] = Field(min_length=1)
    vendor_pool: VendorPool
    strategy_mode: StrategyMode = StrategyMode.MARKUP_RULE
    sdvosb_flags: dict[str, bool] = {}
    wholesale: WholesaleSeries = WholesaleSeries()
    # "reference": costs are the product's reference price times the draw.
    cost_basis: Literal["reference", "absolute"] = "reference"
    equilibrium_grid_size: PositiveInt = 2001
    workers: PositiveInt = 1

    @field_validator("products")
    @classmethod
    def _unique_products(cls, products: tuple[ProductSpec, ...]) -> tuple[ProductSpec, ...]:
        codes = [p.product_code for p in products]
        if len(set(codes)) != len(codes):
            raise ValueError("product codes must be unique")
        return products

    @model_validator(mode="after")
    def _check_flags(self) -> "SimConfig":
        small_ids = set(self.vendor_ids(SizeClass.SMALL))
        for vendor_id in self.sdvosb_flags:
            if vendor_id not in small_ids:
                raise ValueError(f"sdvosb flag for {vendor_id!r}, which is not a small vendor")
        return self

    def vendor_ids(self, size_class: SizeClass) -> list[str]:
        if size_class == SizeClass.SMALL:
            return [f"S{i + 1:02d}" for i in range(self.vendor_pool.small.count)]
        return [f"L{i + 1:02d}" for i in range(self.vendor_pool.large.count)]

    def vendors(self) -> list[tuple[Vendor, VendorClassSpec]]:
        out = []
        for size_class, spec in (
            (SizeClass.SMALL, self.vendor_pool.small),
            (SizeClass.LARGE, self.vendor_pool.large),
        ):
            for vendor_id in self.vendor_ids(size_class):
                vendor = Vendor(
                    vendor_id=vendor_id,
                    size_class=size_class,
                    sdvosb=self.sdvosb_flags.get(vendor_id, False),
                )
                out.append((vendor, spec))
        return out


# ── Records ──────────────────────────────────────────────────────
class BidRecord(BaseModel):
    """One bid with every covariate the regressions use. Field order is the CSV order."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    auction_id: str
    date: date
    solicitation_id: str
    product_code: str
    package_class: str = ""
    item_id: str
    quantity_lbs: PositiveInt
    destination_state: str = ""
    window_start: date
    window_end: date
    vendor_id: str
    vendor_type: SizeClass
    # True when the product carries an SDVOSB sub-quota, whoever the vendor is.
    sdvosb: bool = False
    price_per_lb: PositiveFloat
    won: bool
    set_aside: float = Field(ge=0.0, le=1.0)
    demand_mlbs: float = Field(ge=0.0)
    n_bidders_item: PositiveInt
    wholesale_price: PositiveFloat
    usda_ref_price: PositiveFloat

    @field_validator("price_per_lb")
    @classmethod
    def _round_price(cls, value: float) -> float:
        return round(value, PRICE_DIGITS)


BID_COLUMNS = list(BidRecord.model_fields)
DATE_COLUMNS = ["date", "window_start", "window_end"]


def records_to_frame(records: Sequence[BidRecord] | pd.DataFrame) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        return records
    frame = pd.DataFrame([r.model_dump() for r in records], columns=BID_COLUMNS)
    frame["vendor_type"] = frame["vendor_type"].astype(str)
    for column in DATE_COLUMNS:
        frame[column] = pd.to_datetime(frame[column])
    return frame


# ── Simulation ───────────────────────────────────────────────────
@dataclass(frozen=True)
class AuctionOutcome:
    records: list[BidRecord]
    # Private cost per (vendor_id, product_code), currency per lb.
    costs: dict[tuple[str, str], float]
    problem: AllocationProblem
    allocation: AllocationResult


def auction_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def _check_equilibrium_pool(config: SimConfig) -> None:
    pool = config.vendor_pool
    if (pool.small.count, pool.large.count) != (2, 1):
        raise UnsupportedConfigurationError(
            f"equilibrium bidding needs 2 small and 1 large vendor, got "
            f"{pool.small.count} small and {pool.large.count} large"
        )
    if pool.small.participation < 1.0 or pool.large.participation < 1.0:
        raise UnsupportedConfigurationError("equilibrium bidding needs every vendor to participate")
    if pool.small.capacity_probability > 0 or pool.large.capacity_probability > 0:
        logger.warning("Equilibrium strategies ignore capacity constraints drawn by the simulation")


def _strategy_price(
    config: SimConfig,
    alpha: float,
    vendor: Vendor,
    spec: VendorClassSpec,
    draw: float,
    scale: float,
) -> float:
    cost = scale * draw
    match config.strategy_mode:
        case StrategyMode.MARKUP_RULE:
            return cost * (1.0 + spec.markup)
        case StrategyMode.SHADED_RULE:
            top = scale * spec.cost.support[1]
            return cost + spec.shade * (top - cost)
        case StrategyMode.EQUILIBRIUM_MODEL:
            pool = config.vendor_pool
            model = EquilibriumModel(alpha=alpha, F1=pool.small.cost, F2=pool.large.cost)
            solution = solve_equilibrium(model, grid_size=config.equilibrium_grid_size)
            return scale * float(solution.bid(vendor.size_class, draw))
    raise UnsupportedConfigurationError(f"unknown strategy {config.strategy_mode}")


def simulate_auction(config: SimConfig, index: int) -> AuctionOutcome:
    rng = auction_rng(config.seed, index)
    auction_day = config.start_date + timedelta(days=index * config.auction_interval_days)
    auction_id = f"A{index + 1:04d}"
    solicitation_id = f"SOL{index + 1:04d}"

    chosen = [
        (p_index, spec)
        for p_index, spec in enumerate(config.products)
        if rng.random() < spec.inclusion_probability
    ]
    if not chosen:
        p_index = int(rng.integers(len(config.products)))
        chosen = [(p_index, config.products[p_index])]

    alphas: dict[str, float] = {}
    items_by_product: dict[str, list[Item]] = {}
    for p_index, spec in chosen:
        alpha = spec.alpha
        if spec.alternative_alphas and rng.random() < spec.alternative_probability:
            alpha = spec.alternative_alphas[int(rng.integers(len(spec.alternative_alphas)))]
        alphas[spec.product_code] = alpha
        n_items = int(rng.integers(spec.items_min, spec.items_max + 1))
        items = []
        for k in range(n_items):
            half = rng.random() < spec.half_truck_probability
            window = int(rng.integers(spec.windows))
            state = DESTINATION_STATES[int(rng.integers(len(DESTINATION_STATES)))]
            start = auction_day + timedelta(days=21 + 14 * window)
            items.append(
                Item(
                    item_id=f"{auction_id}-P{p_index + 1:02d}-{k + 1:03d}",
                    solicitation_id=solicitation_id,
                    product_code=spec.product_code,
                    quantity_lbs=spec.truckload_lbs // 2 if half else spec.truckload_lbs,
                    destination=Destination(state=state),
                    window_start=start,
                    window_end=start + timedelta(days=13),
                )
            )
        items_by_product[spec.product_code] = items

    solicitation = Solicitation(
        solicitation_id=solicitation_id,
        auction_date=auction_day,
        items=tuple(item for items in items_by_product.values() for item in items),
        policies=tuple(
            SetAsidePolicy(
                applies_to=spec.product_code,
                alpha=alphas[spec.product_code],
                sdvosb_fraction=spec.sdvosb_fraction,
            )
            for _, spec in chosen
        ),
    )

    participants = [(vendor, spec) for vendor, spec in config.vendors() if rng.random() < spec.participation]

    bids: list[Bid] = []
    capacities: list[CapacityConstraint] = []
    costs: dict[tuple[str, str], float] = {}
    for vendor, vendor_spec in participants:
        for _, spec in chosen:
            alpha = alphas[spec.product_code]
            if not vendor.is_small and alpha >= 1.0:
                continue
            draw = float(vendor_spec.cost.sample(rng, 1)[0])
            scale = spec.reference_price if config.cost_basis == "reference" else 1.0
            costs[(vendor.vendor_id, spec.product_code)] = scale * draw
            price = round(_strategy_price(config, alpha, vendor, vendor_spec, draw, scale), PRICE_DIGITS)
            bids.extend(
                Bid(vendor_id=vendor.vendor_id, item_id=item.item_id, price_per_lb=price)
                for item in items_by_product[spec.product_code]
            )
            if vendor_spec.capacity_trucks and rng.random() < vendor_spec.capacity_probability:
                capacities.append(
                    CapacityConstraint(
                        vendor_id=vendor.vendor_id,
                        product_code=spec.product_code,
                        max_quantity_lbs=vendor_spec.capacity_trucks * spec.truckload_lbs,
                    )
                )

    problem = AllocationProblem(
        solicitation=solicitation,
        bids=tuple(bids),
        vendors=tuple(vendor for vendor, _ in participants),
        capacities=tuple(capacities),
    )
    allocation = solve_allocation(problem)
    records = _records(config, problem, allocation, chosen, auction_id)
    return AuctionOutcome(records=records, costs=costs, problem=problem, allocation=allocation)


def _records(
    config: SimConfig,
    problem: AllocationProblem,
    allocation: AllocationResult,
    chosen: list[tuple[int, ProductSpec]],
    auction_id: str,
) -> list[BidRecord]:
    solicitation = problem.solicitation
    specs = {spec.product_code: spec for _, spec in chosen}
    items = {item.item_id: item for item in solicitation.items}
    vendors = {vendor.vendor_id: vendor for vendor in problem.vendors}
    bidders_per_item: dict[str, int] = {}
    for bid in problem.bids:
        bidders_per_item[bid.item_id] = bidders_per_item.get(bid.item_id, 0) + 1
    demand = {code: demand_level(solicitation, code) for code in specs}
    wholesale = config.wholesale.price_on(solicitation.auction_date, config.start_date)

    records = []
    for bid in problem.bids:
        item = items[bid.item_id]
        spec = specs[item.product_code]
        vendor = vendors[bid.vendor_id]
        award = allocation.awards.get(bid.item_id)
        records.append(
            BidRecord(
                auction_id=auction_id,
                date=solicitation.auction_date,
                solicitation_id=solicitation.solicitation_id,
                product_code=item.product_code,
                package_class=spec.package_size_class,
                item_id=item.item_id,
                quantity_lbs=item.quantity_lbs,
                destination_state=item.destination.state,
                window_start=item.window_start,
                window_end=item.window_end,
                vendor_id=vendor.vendor_id,
                vendor_type=vendor.size_class,
                sdvosb=solicitation.policy_for(item.product_code).sdvosb_fraction > 0,
                price_per_lb=bid.price_per_lb,
                won=award is not None and award.vendor_id == vendor.vendor_id,
                set_aside=solicitation.policy_for(item.product_code).alpha,
                demand_mlbs=demand[item.product_code],
                n_bidders_item=bidders_per_item[item.item_id],
                wholesale_price=wholesale,
                usda_ref_price=round(
                    spec.usda_price(solicitation.auction_date.year, config.start_date.year), PRICE_DIGITS
                ),
            )
        )
    return records


def _auction_records(config: SimConfig, index: int) -> list[BidRecord]:
    return simulate_auction(config, index).records


def simulate_campaign(config: SimConfig) -> list[BidRecord]:
    """All bids of the campaign in (auction_id, item_id, vendor_id) order."""
    if config.strategy_mode == StrategyMode.EQUILIBRIUM_MODEL:
        _check_equilibrium_pool(config)

    indices = range(config.n_auctions)
    if config.workers > 1:
        chunksize = max(1, config.n_auctions // (4 * config.workers))
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            batches = list(pool.map(_auction_records, repeat(config), indices, chunksize=chunksize))
    else:
        batches = [_auction_records(config, i) for i in indices]

    records = [record for batch in batches for record in batch]
    records.sort(key=lambda r: (r.auction_id, r.item_id, r.vendor_id))
    logger.info("Simulated %d auctions: %d bids", config.n_auctions, len(records))
    return records


# ── Descriptive statistics ───────────────────────────────────────
def _set_aside_label(alpha: float) -> str:
    return f"SA={alpha * 100:g}%"


def _item_table(frame: pd.DataFrame) -> pd.DataFrame:
    flagged = frame.assign(
        is_small=frame["vendor_type"].eq(SizeClass.SMALL),
        is_large=frame["vendor_type"].eq(SizeClass.LARGE),
    )
    return flagged.groupby("item_id", sort=True).agg(
        auction_id=("auction_id", "first"),
        product_code=("product_code", "first"),
        set_aside=("set_aside", "first"),
        quantity_lbs=("quantity_lbs", "first"),
        n_small=("is_small", "sum"),
        n_large=("is_large", "sum"),
    )


def summary_statistics(records: Sequence[BidRecord] | pd.DataFrame) -> pd.DataFrame:
    """Per set-aside level counts, bidder pools and price/quantity moments.

    Standard deviations are population SDs, so a single observation has SD 0.
    """
    frame = records_to_frame(records)
    items = _item_table(frame)
    years = pd.to_datetime(frame["date"]).dt.year
    all_years = set(years)

    columns = {}
    for alpha in sorted(frame["set_aside"].unique()):
        bids = frame[frame["set_aside"] == alpha]
        group_items = items[items["set_aside"] == alpha]
        small = bids["vendor_type"].eq(SizeClass.SMALL)
        winning = bids.loc[bids["won"], "price_per_lb"]
        columns[_set_aside_label(alpha)] = [
            bids["auction_id"].nunique(),
            len(group_items),
            len(bids),
            bids.loc[small, "vendor_id"].nunique(),
            bids.loc[~small, "vendor_id"].nunique(),
            group_items["n_small"].mean(),
            group_items["n_small"].std(ddof=0),
            group_items["n_large"].mean(),
            group_items["n_large"].std(ddof=0),
            bids["price_per_lb"].mean(),
            bids["price_per_lb"].std(ddof=0),
            winning.mean(),
            winning.std(ddof=0),
            group_items["quantity_lbs"].mean(),
            group_items["quantity_lbs"].std(ddof=0),
            "Yes" if set(years[bids.index]) == all_years else "No",
        ]
    return pd.DataFrame(columns, index=pd.Index(TABLE1_ROWS, name="statistic"), dtype=object)


def bidder_pool_timeline(records: Sequence[BidRecord] | pd.DataFrame) -> pd.DataFrame:
    """Active vendors per auction date; a vendor is active from its first to last auction."""
    frame = records_to_frame(records)
    dates = pd.to_datetime(frame["date"])
    spans = (
        frame.assign(date=dates)
        .groupby(["vendor_id", "vendor_type"])["date"]
        .agg(first="min", last="max")
        .reset_index()
    )
    rows = []
    for day in sorted(dates.unique()):
        active = spans[(spans["first"] <= day) & (spans["last"] >= day)]
        for size_class in (SizeClass.SMALL, SizeClass.LARGE):
            rows.append(
                {
                    "date": pd.Timestamp(day),
                    "vendor_type": str(size_class),
                    "active_bidders": int(active["vendor_type"].eq(size_class).sum()),
                }
            )
    return pd.DataFrame(rows, columns=["date", "vendor_type", "active_bidders"])


@dataclass(frozen=True)
class WinShareReport:
    # One row per (auction, product): quantity-weighted shares.
    cells: pd.DataFrame
    # One row per set-aside level.
    aggregate: pd.DataFrame

    def small_share(self, alpha: float) -> float:
        row = self.aggregate[self.aggregate["set_aside"] == alpha]
        return float(row["small_share"].iloc[0])


def _shares(items: pd.DataFrame, keys: list[str]) -> pd.DataFrame:
    lbs = items.assign(
        small_lbs=np.where(items["winner_type"].eq(SizeClass.SMALL), items["quantity_lbs"], 0),
        large_lbs=np.where(items["winner_type"].eq(SizeClass.LARGE), items["quantity_lbs"], 0),
        unawarded_lbs=np.where(items["winner_type"].isna(), items["quantity_lbs"], 0),
    )
    grouped = lbs.groupby(keys, sort=True)[["quantity_lbs", "small_lbs", "large_lbs", "unawarded_lbs"]].sum()
    for kind in ("small", "large", "unawarded"):
        grouped[f"{kind}_share"] = grouped[f"{kind}_lbs"] / grouped["quantity_lbs"]
    return grouped.reset_index()


def win_share_report(records: Sequence[BidRecord] | pd.DataFrame) -> WinShareReport:
    frame = records_to_frame(records)
    items = _item_table(frame)
    winners = frame.loc[frame["won"], ["item_id", "vendor_type"]].set_index("item_id")["vendor_type"]
    items = items.assign(winner_type=winners.reindex(items.index))
    cells = _shares(items, ["auction_id", "product_code", "set_aside"])
    aggregate = _shares(items, ["set_aside"])
    return WinShareReport(cells=cells, aggregate=aggregate)


def bids_per_item(records: Sequence[BidRecord] | pd.DataFrame) -> pd.DataFrame:
    """Number of small and large bids on each item, for box plots by set-aside."""
    items = _item_table(records_to_frame(records)).reset_index()
    long = items.melt(
        id_vars=["item_id", "set_aside"],
        value_vars=["n_small", "n_large"],
        var_name="vendor_type",
        value_name="n_bids",
    )
    long["vendor_type"] = long["vendor_type"].map({"n_small": "SMALL", "n_large": "LARGE"})
    return long.sort_values(["item_id", "vendor_type"], ignore_index=True)
