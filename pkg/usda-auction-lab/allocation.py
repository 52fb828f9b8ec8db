"""
Winner determination for one solicitation.

Products are solved independently unless a vendor's capacity constraint
spans products, in which case the linked products are solved jointly. Each
group is solved exactly by branch and bound under the lexicographic order:
maximise awarded lbs, then small-vendor lbs up to the set-aside quota, then
SDVOSB lbs up to the sub-quota, then minimise cost. Remaining cost ties go
to the smallest vendor_id sequence taken in item_id order.

Usage:
    from allocation import AllocationProblem, solve_allocation

    problem = AllocationProblem.model_validate_json(Path("problem.json").read_text())
    result = solve_allocation(problem)
    awards_to_frame(result).to_csv("awards.csv", index=False)
"""

import logging
import math
from collections import defaultdict
from dataclasses import replace
from decimal import Decimal
from fractions import Fraction

import pandas as pd
from pydantic import BaseModel, ConfigDict, PositiveFloat, model_validator

from domain import (
    PRICE_DIGITS,
    AuctionLabError,
    Bid,
    CapacityConstraint,
    Solicitation,
    Vendor,
    compute_sdvosb_quota,
    compute_setaside_quota,
)
from solvers.branch_and_bound import (
    UNAWARDED,
    Option,
    Outcome,
    SearchBudgetExceeded,
    SearchProblem,
    branch_and_bound,
    evaluate,
    exhaustive_search,
    make_search_item,
)

logger = logging.getLogger(__name__)

# Exact-solver size bound per solved group of products.
MAX_GROUP_ITEMS = 30
MAX_GROUP_VENDORS = 20

# Brute-force oracle bound per solved group.
BRUTE_FORCE_MAX_ITEMS = 8
BRUTE_FORCE_MAX_VENDORS = 5


# ── Errors ───────────────────────────────────────────────────────
class AllocationError(AuctionLabError):
    pass


class InstanceTooLargeError(AllocationError):
    def __init__(self, detail: str, bound: str):
        super().__init__(f"instance too large for the exact solver: {detail} (bound: {bound})")
        self.bound = bound


# ── Models ───────────────────────────────────────────────────────
class AllocationProblem(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    solicitation: Solicitation
    bids: tuple[Bid, ...] = ()
    vendors: tuple[Vendor, ...] = ()
    capacities: tuple[CapacityConstraint, ...] = ()
    # Per-product ceiling, currency per lb; bids above it never enter the solve.
    price_ceiling: dict[str, PositiveFloat] | None = None

    @model_validator(mode="after")
    def _check_references(self) -> "AllocationProblem":
        item_ids = {item.item_id for item in self.solicitation.items}
        vendor_ids = {vendor.vendor_id for vendor in self.vendors}
        if len(vendor_ids) != len(self.vendors):
            raise ValueError("duplicate vendor_id in vendors")
        seen: set[tuple[str, str]] = set()
        for bid in self.bids:
            if bid.item_id not in item_ids:
                raise ValueError(f"bid references unknown item {bid.item_id!r}")
            if bid.vendor_id not in vendor_ids:
                raise ValueError(f"bid references unknown vendor {bid.vendor_id!r}")
            pair = (bid.vendor_id, bid.item_id)
            if pair in seen:
                raise ValueError(f"vendor {bid.vendor_id!r} bid twice on item {bid.item_id!r}")
            seen.add(pair)
        for cap in self.capacities:
            if cap.vendor_id not in vendor_ids:
                raise ValueError(f"capacity references unknown vendor {cap.vendor_id!r}")
        return self

    def eligible_bids(self) -> list[Bid]:
        if not self.price_ceiling:
            return list(self.bids)
        product_of = {item.item_id: item.product_code for item in self.solicitation.items}
        kept = []
        for bid in self.bids:
            ceiling = self.price_ceiling.get(product_of[bid.item_id])
            if ceiling is not None and bid.price_per_lb > ceiling:
                logger.debug("Dropping bid %s/%s above ceiling %.4f", bid.vendor_id, bid.item_id, ceiling)
                continue
            kept.append(bid)
        return kept


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True)


class Award(_Frozen):
    item_id: str
    vendor_id: str
    price_per_lb: float
    quantity_lbs: int


class QuotaReport(_Frozen):
    product_code: str
    quota_lbs: float
    small_awarded_lbs: int
    quota_met: bool
    relaxed: bool


class PhaseTrace(_Frozen):
    """Objective levels reached for one jointly solved group of products."""

    products: tuple[str, ...]
    awarded_lbs: int
    small_level_lbs: int
    sdvosb_level_lbs: int
    cost_units: int


class AllocationResult(_Frozen):
    awards: dict[str, Award]
    unawarded: tuple[str, ...]
    total_cost: Decimal
    per_product_quota_report: tuple[QuotaReport, ...]
    sdvosb_report: tuple[QuotaReport, ...]
    lexicographic_trace: tuple[PhaseTrace, ...]

    def awarded_lbs(self, vendor_id: str) -> int:
        return sum(a.quantity_lbs for a in self.awards.values() if a.vendor_id == vendor_id)


class ProductFeasibility(_Frozen):
    product_code: str
    total_lbs: int
    max_awardable_lbs: int
    quota_lbs: float
    max_small_lbs: int
    attainable: bool
    jointly_attainable: bool
    # Products sharing a capacity with this one, itself included; empty when unlinked.
    linked_products: tuple[str, ...] = ()


class FeasibilityReport(_Frozen):
    products: tuple[ProductFeasibility, ...]

    def for_product(self, product_code: str) -> ProductFeasibility:
        for entry in self.products:
            if entry.product_code == product_code:
                return entry
        raise KeyError(product_code)


# ── Problem decomposition ────────────────────────────────────────
class _Group:
    """One set of products solved together, mapped to integer search form."""

    def __init__(self, problem: AllocationProblem, products: list[str], bids: list[Bid]):
        self.products = products
        solicitation = problem.solicitation
        self.items = sorted(
            (item for item in solicitation.items if item.product_code in products),
            key=lambda item: item.item_id,
        )
        item_ids = {item.item_id for item in self.items}
        self.bids = [bid for bid in bids if bid.item_id in item_ids]

        self.vendor_order = sorted(vendor.vendor_id for vendor in problem.vendors)
        rank = {vendor_id: i for i, vendor_id in enumerate(self.vendor_order)}
        vendors = {vendor.vendor_id: vendor for vendor in problem.vendors}
        bidding = {bid.vendor_id for bid in self.bids}
        self.n_bidding_vendors = len(bidding)

        caps = [cap for cap in problem.capacities if cap.vendor_id in bidding]
        product_index = {code: i for i, code in enumerate(products)}

        by_item: dict[str, list[Bid]] = defaultdict(list)
        for bid in self.bids:
            by_item[bid.item_id].append(bid)

        search_items = []
        self.option_bids: list[list[Bid]] = []
        for item in self.items:
            options = []
            for bid in by_item[item.item_id]:
                vendor = vendors[bid.vendor_id]
                options.append(
                    (
                        Option(
                            vendor=rank[bid.vendor_id],
                            unit_price=bid.price_units,
                            small=vendor.is_small,
                            sdvosb=vendor.sdvosb,
                            caps=tuple(
                                i
                                for i, cap in enumerate(caps)
                                if cap.vendor_id == bid.vendor_id and cap.covers(item)
                            ),
                        ),
                        bid,
                    )
                )
            options.sort(key=lambda pair: (pair[0].unit_price, pair[0].vendor))
            search_items.append(
                make_search_item(item.quantity_lbs, product_index[item.product_code], [o for o, _ in options])
            )
            self.option_bids.append([b for _, b in options])

        self.small_quota = [compute_setaside_quota(solicitation, code) for code in products]
        self.sdvosb_quota = [compute_sdvosb_quota(solicitation, code) for code in products]
        self.search = SearchProblem(
            items=tuple(search_items),
            n_vendors=len(self.vendor_order),
            n_products=len(products),
            capacities=tuple(cap.max_quantity_lbs for cap in caps),
            small_quota=tuple(math.ceil(q) for q in self.small_quota),
            sdvosb_quota=tuple(math.ceil(q) for q in self.sdvosb_quota),
        )

    def check_size(self, max_items: int, max_vendors: int) -> None:
        if len(self.items) > max_items or self.n_bidding_vendors > max_vendors:
            raise InstanceTooLargeError(
                f"{len(self.items)} items and {self.n_bidding_vendors} bidding vendors "
                f"across products {', '.join(self.products)}",
                f"{max_items} items and {max_vendors} vendors per solved group",
            )


def _product_groups(problem: AllocationProblem, bids: list[Bid]) -> list[list[str]]:
    """Connected groups of products; only cross-product capacities link them."""
    codes = problem.solicitation.product_codes()
    parent = {code: code for code in codes}

    def find(code: str) -> str:
        while parent[code] != code:
            parent[code] = parent[parent[code]]
            code = parent[code]
        return code

    product_of = {item.item_id: item.product_code for item in problem.solicitation.items}
    bid_products: dict[str, set[str]] = defaultdict(set)
    for bid in bids:
        bid_products[bid.vendor_id].add(product_of[bid.item_id])

    for cap in problem.capacities:
        if cap.product_code is not None:
            continue
        linked = sorted(bid_products.get(cap.vendor_id, ()))
        for other in linked[1:]:
            parent[find(other)] = find(linked[0])

    groups: dict[str, list[str]] = defaultdict(list)
    for code in codes:
        groups[find(code)].append(code)
    return sorted(groups.values())


def _build_groups(problem: AllocationProblem) -> list[_Group]:
    bids = problem.eligible_bids()
    return [_Group(problem, products, bids) for products in _product_groups(problem, bids)]


# ── Result assembly ──────────────────────────────────────────────
def _assemble(problem: AllocationProblem, solved: list[tuple[_Group, Outcome]]) -> AllocationResult:
    awards: dict[str, Award] = {}
    unawarded: list[str] = []
    quota_reports: list[QuotaReport] = []
    sdvosb_reports: list[QuotaReport] = []
    trace: list[PhaseTrace] = []
    total_units = 0

    for group, outcome in solved:
        for position, (item, index) in enumerate(zip(group.items, outcome.choice)):
            if index == UNAWARDED:
                unawarded.append(item.item_id)
                continue
            bid = group.option_bids[position][index]
            awards[item.item_id] = Award(
                item_id=item.item_id,
                vendor_id=bid.vendor_id,
                price_per_lb=bid.price_per_lb,
                quantity_lbs=item.quantity_lbs,
            )
        total_units += outcome.cost_units

        for p, code in enumerate(group.products):
            quota_reports.append(_quota_report(code, group.small_quota[p], outcome.small_lbs[p]))
            sdvosb_reports.append(_quota_report(code, group.sdvosb_quota[p], outcome.sdvosb_lbs[p]))
            if quota_reports[-1].relaxed:
                logger.warning(
                    "Set-aside quota for %s relaxed: %d of %.0f lbs awarded to small vendors",
                    code,
                    outcome.small_lbs[p],
                    float(group.small_quota[p]),
                )
        trace.append(
            PhaseTrace(
                products=tuple(group.products),
                awarded_lbs=outcome.awarded_lbs,
                small_level_lbs=-outcome.key[1],
                sdvosb_level_lbs=-outcome.key[2],
                cost_units=outcome.cost_units,
            )
        )

    return AllocationResult(
        awards=dict(sorted(awards.items())),
        unawarded=tuple(sorted(unawarded)),
        total_cost=Decimal(total_units).scaleb(-PRICE_DIGITS),
        per_product_quota_report=tuple(sorted(quota_reports, key=lambda r: r.product_code)),
        sdvosb_report=tuple(sorted(sdvosb_reports, key=lambda r: r.product_code)),
        lexicographic_trace=tuple(trace),
    )


def _quota_report(product_code: str, quota: Fraction, awarded: int) -> QuotaReport:
    met = awarded >= quota
    return QuotaReport(
        product_code=product_code,
        quota_lbs=float(quota),
        small_awarded_lbs=awarded,
        quota_met=met,
        # The search reaches min(quota, best attainable); falling short means relaxed.
        relaxed=not met,
    )


# ── Operations ───────────────────────────────────────────────────
def solve_allocation(problem: AllocationProblem) -> AllocationResult:
    """Exact lexicographic winner determination."""
    solved = []
    for group in _build_groups(problem):
        group.check_size(MAX_GROUP_ITEMS, MAX_GROUP_VENDORS)
        try:
            outcome = branch_and_bound(group.search)
        except SearchBudgetExceeded as e:
            raise InstanceTooLargeError(
                f"search over products {', '.join(group.products)} did not finish",
                f"{e.nodes} search nodes",
            ) from e
        logger.debug("Solved %s in %d nodes", ", ".join(group.products), outcome.nodes)
        solved.append((group, outcome))
    return _assemble(problem, solved)


def brute_force_allocation(problem: AllocationProblem) -> AllocationResult:
    """Exhaustive oracle; same key and tie-break as solve_allocation."""
    solved = []
    for group in _build_groups(problem):
        group.check_size(BRUTE_FORCE_MAX_ITEMS, BRUTE_FORCE_MAX_VENDORS)
        solved.append((group, exhaustive_search(group.search)))
    return _assemble(problem, solved)


def check_feasibility(problem: AllocationProblem) -> FeasibilityReport:
    """Per product: max awardable lbs, max small lbs at that level, quota attainability.

    ``max_small_lbs`` and ``attainable`` look at each product on its own. For
    products linked by a cross-product capacity those can all hold while the
    quotas still compete for the same vendor, so ``jointly_attainable`` says
    whether one max-quantity allocation meets every quota in the group.
    """
    entries = []
    for group in _build_groups(problem):
        n = len(group.products)
        totals = [0] * n
        for item in group.items:
            totals[group.products.index(item.product_code)] += item.quantity_lbs
        joint = _quota_search(group, group.search.small_quota)
        jointly = all(joint.small_lbs[p] >= group.small_quota[p] for p in range(n))
        for p, code in enumerate(group.products):
            alone = _quota_search(group, [totals[p] if q == p else 0 for q in range(n)])
            awarded = sum(
                search_item.quantity
                for search_item, index in zip(group.search.items, alone.choice)
                if index != UNAWARDED and search_item.product == p
            )
            entries.append(
                ProductFeasibility(
                    product_code=code,
                    total_lbs=totals[p],
                    max_awardable_lbs=awarded,
                    quota_lbs=float(group.small_quota[p]),
                    max_small_lbs=alone.small_lbs[p],
                    attainable=alone.small_lbs[p] >= group.small_quota[p],
                    linked_products=tuple(group.products) if n > 1 else (),
                    jointly_attainable=jointly,
                )
            )
    return FeasibilityReport(products=tuple(sorted(entries, key=lambda e: e.product_code)))


def _quota_search(group: _Group, small_quota) -> Outcome:
    search = replace(
        group.search,
        small_quota=tuple(small_quota),
        sdvosb_quota=tuple(0 for _ in group.products),
    )
    return branch_and_bound(search, levels=2)


def objective_levels(problem: AllocationProblem, result: AllocationResult) -> list[tuple[int, int, int, int]]:
    """Re-score a result's awards per solved group; used to cross-check solvers."""
    levels = []
    for group in _build_groups(problem):
        choice = []
        for position, item in enumerate(group.items):
            award = result.awards.get(item.item_id)
            if award is None:
                choice.append(UNAWARDED)
                continue
            vendor_ids = [bid.vendor_id for bid in group.option_bids[position]]
            choice.append(vendor_ids.index(award.vendor_id))
        outcome = evaluate(group.search, tuple(choice))
        if outcome is None:
            raise AllocationError(f"awards break a capacity in {', '.join(group.products)}")
        levels.append(outcome.key)
    return levels


# ── Serialization ────────────────────────────────────────────────
def awards_to_frame(result: AllocationResult) -> pd.DataFrame:
    rows = [award.model_dump() for award in result.awards.values()]
    return pd.DataFrame(rows, columns=["item_id", "vendor_id", "price_per_lb", "quantity_lbs"])


def quota_report_to_frame(result: AllocationResult) -> pd.DataFrame:
    small = pd.DataFrame([r.model_dump() for r in result.per_product_quota_report])
    small.insert(0, "quota", "set_aside")
    sdvosb = pd.DataFrame([r.model_dump() for r in result.sdvosb_report])
    sdvosb.insert(0, "quota", "sdvosb")
    return pd.concat([small, sdvosb], ignore_index=True)
