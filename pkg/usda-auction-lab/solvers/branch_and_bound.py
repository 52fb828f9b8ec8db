"""
Exact lexicographic winner determination over per-item vendor choices.

Works purely on integers: quantities in lbs and prices in 1/10,000 currency
units per lb. An assignment gives every item one bid option or leaves it
unawarded, and assignments are ranked (smaller is better) by

    (-awarded_lbs, -small_level, -sdvosb_level, cost_units, tie)

where ``small_level = sum_p min(small_lbs_p, small_quota_p)`` (and likewise
for SDVOSB) and ``tie`` is the vendor rank chosen for each item in item
order, unawarded ranked last. Ranking by this key is the same as the phased
procedure: maximise quantity, then small quantity up to the quota, then
SDVOSB quantity up to its quota, then minimise cost.
"""

import logging
from dataclasses import dataclass, field
from itertools import product as cartesian

logger = logging.getLogger(__name__)

UNAWARDED = -1
DEFAULT_MAX_NODES = 2_000_000


class SearchBudgetExceeded(Exception):
    def __init__(self, nodes: int):
        super().__init__(f"search exceeded {nodes} nodes")
        self.nodes = nodes


@dataclass(frozen=True)
class Option:
    vendor: int
    unit_price: int
    small: bool
    sdvosb: bool
    caps: tuple[int, ...] = ()


@dataclass(frozen=True)
class SearchItem:
    quantity: int
    product: int
    # Sorted by (unit_price, vendor).
    options: tuple[Option, ...]


@dataclass(frozen=True)
class SearchProblem:
    items: tuple[SearchItem, ...]
    n_vendors: int
    n_products: int
    capacities: tuple[int, ...]
    small_quota: tuple[int, ...]
    sdvosb_quota: tuple[int, ...]


@dataclass(frozen=True)
class Outcome:
    choice: tuple[int, ...]
    key: tuple[int, int, int, int]
    tie: tuple[int, ...]
    small_lbs: tuple[int, ...]
    sdvosb_lbs: tuple[int, ...]
    nodes: int = 0

    @property
    def awarded_lbs(self) -> int:
        return -self.key[0]

    @property
    def cost_units(self) -> int:
        return self.key[3]


def make_search_item(quantity: int, product: int, options: list[Option]) -> SearchItem:
    ordered = tuple(sorted(options, key=lambda o: (o.unit_price, o.vendor)))
    return SearchItem(quantity=quantity, product=product, options=ordered)


def evaluate(problem: SearchProblem, choice: tuple[int, ...]) -> Outcome | None:
    """Score a complete assignment; ``None`` when it breaks a capacity."""
    remaining = list(problem.capacities)
    small = [0] * problem.n_products
    sdvosb = [0] * problem.n_products
    awarded = cost = 0
    tie = []
    for item, index in zip(problem.items, choice):
        if index == UNAWARDED:
            tie.append(problem.n_vendors)
            continue
        option = item.options[index]
        for cap in option.caps:
            remaining[cap] -= item.quantity
            if remaining[cap] < 0:
                return None
        awarded += item.quantity
        cost += option.unit_price * item.quantity
        if option.small:
            small[item.product] += item.quantity
        if option.sdvosb:
            sdvosb[item.product] += item.quantity
        tie.append(option.vendor)
    key = (
        -awarded,
        -_level(small, problem.small_quota),
        -_level(sdvosb, problem.sdvosb_quota),
        cost,
    )
    return Outcome(
        choice=tuple(choice),
        key=key,
        tie=tuple(tie),
        small_lbs=tuple(small),
        sdvosb_lbs=tuple(sdvosb),
    )


def _level(amounts: list[int], quotas: tuple[int, ...]) -> int:
    return sum(min(amount, quota) for amount, quota in zip(amounts, quotas))


def _knapsack_extra(candidates: list[tuple[int, int]], need: int) -> int:
    """Cheapest fractional cover of ``need`` lbs from (extra_per_lb, lbs) pairs."""
    if need <= 0:
        return 0
    extra = 0
    for per_lb, lbs in sorted(candidates):
        take = min(lbs, need)
        extra += per_lb * take
        need -= take
        if need == 0:
            break
    return extra


def _better(a: Outcome, b: Outcome | None, levels: int) -> bool:
    if b is None:
        return True
    if levels < 4:
        return a.key[:levels] < b.key[:levels]
    return (a.key, a.tie) < (b.key, b.tie)


def _greedy(problem: SearchProblem, prefer: str | None) -> tuple[int, ...]:
    remaining = list(problem.capacities)
    small = [0] * problem.n_products
    sdvosb = [0] * problem.n_products
    choice = []
    for item in problem.items:
        q = item.quantity
        fitting = [
            (i, o)
            for i, o in enumerate(item.options)
            if all(remaining[c] >= q for c in o.caps)
        ]
        picked = None
        if prefer == "small" and small[item.product] < problem.small_quota[item.product]:
            picked = next(((i, o) for i, o in fitting if o.small), None)
        elif prefer == "sdvosb" and sdvosb[item.product] < problem.sdvosb_quota[item.product]:
            picked = next(((i, o) for i, o in fitting if o.sdvosb), None)
        if picked is None and fitting:
            picked = fitting[0]
        if picked is None:
            choice.append(UNAWARDED)
            continue
        index, option = picked
        for cap in option.caps:
            remaining[cap] -= q
        if option.small:
            small[item.product] += q
        if option.sdvosb:
            sdvosb[item.product] += q
        choice.append(index)
    return tuple(choice)


@dataclass
class _Search:
    problem: SearchProblem
    levels: int
    max_nodes: int
    remaining: list[int] = field(default_factory=list)
    small: list[int] = field(default_factory=list)
    sdvosb: list[int] = field(default_factory=list)
    choice: list[int] = field(default_factory=list)
    tie: list[int] = field(default_factory=list)
    awarded: int = 0
    cost: int = 0
    nodes: int = 0
    best: Outcome | None = None

    def __post_init__(self) -> None:
        n_items = len(self.problem.items)
        self.remaining = list(self.problem.capacities)
        self.small = [0] * self.problem.n_products
        self.sdvosb = [0] * self.problem.n_products
        self.choice = [UNAWARDED] * n_items
        self.tie = [self.problem.n_vendors] * n_items

    def fits(self, option: Option, quantity: int) -> bool:
        return all(self.remaining[c] >= quantity for c in option.caps)

    def bound(self, depth: int) -> tuple[int, int, int, int]:
        problem = self.problem
        awarded = self.awarded
        base_cost = 0
        small_avail = [0] * problem.n_products
        sdvosb_avail = [0] * problem.n_products
        small_extra: list[list[tuple[int, int]]] = [[] for _ in range(problem.n_products)]
        sdvosb_extra: list[list[tuple[int, int]]] = [[] for _ in range(problem.n_products)]

        for item in problem.items[depth:]:
            q = item.quantity
            best_any = best_small = best_sdvosb = None
            for option in item.options:
                if not self.fits(option, q):
                    continue
                if best_any is None:
                    best_any = option.unit_price
                if option.small and best_small is None:
                    best_small = option.unit_price
                if option.sdvosb and best_sdvosb is None:
                    best_sdvosb = option.unit_price
                if best_small is not None and best_sdvosb is not None:
                    break
            if best_any is None:
                continue
            awarded += q
            base_cost += best_any * q
            if best_small is not None:
                small_avail[item.product] += q
                small_extra[item.product].append((best_small - best_any, q))
            if best_sdvosb is not None:
                sdvosb_avail[item.product] += q
                sdvosb_extra[item.product].append((best_sdvosb - best_any, q))

        small_level = sdvosb_level = 0
        extra_small = extra_sdvosb = 0
        for p in range(problem.n_products):
            reach = min(problem.small_quota[p], self.small[p] + small_avail[p])
            small_level += max(reach, min(self.small[p], problem.small_quota[p]))
            extra_small += _knapsack_extra(small_extra[p], reach - self.small[p])
            reach = min(problem.sdvosb_quota[p], self.sdvosb[p] + sdvosb_avail[p])
            sdvosb_level += max(reach, min(self.sdvosb[p], problem.sdvosb_quota[p]))
            extra_sdvosb += _knapsack_extra(sdvosb_extra[p], reach - self.sdvosb[p])

        # The cost part only binds when the three quantity levels tie, which
        # forces every remaining awardable item to be awarded.
        cost = self.cost + base_cost + max(extra_small, extra_sdvosb)
        return (-awarded, -small_level, -sdvosb_level, cost)

    def prune(self, depth: int) -> bool:
        if self.best is None:
            return False
        bound = self.bound(depth)
        if self.levels < 4:
            return bound[: self.levels] >= self.best.key[: self.levels]
        if bound != self.best.key:
            return bound > self.best.key
        return tuple(self.tie[:depth]) > self.best.tie[:depth]

    def visit(self, depth: int) -> None:
        self.nodes += 1
        if self.nodes > self.max_nodes:
            raise SearchBudgetExceeded(self.max_nodes)

        problem = self.problem
        if depth == len(problem.items):
            outcome = evaluate(problem, tuple(self.choice))
            if outcome is not None and _better(outcome, self.best, self.levels):
                self.best = outcome
            return
        if self.prune(depth):
            return

        item = problem.items[depth]
        q = item.quantity
        for index, option in enumerate(item.options):
            if not self.fits(option, q):
                continue
            self._apply(depth, index, option, q, +1)
            self.visit(depth + 1)
            self._apply(depth, index, option, q, -1)

        self.choice[depth] = UNAWARDED
        self.tie[depth] = problem.n_vendors
        self.visit(depth + 1)

    def _apply(self, depth: int, index: int, option: Option, q: int, sign: int) -> None:
        for cap in option.caps:
            self.remaining[cap] -= sign * q
        self.awarded += sign * q
        self.cost += sign * option.unit_price * q
        if option.small:
            self.small[self.problem.items[depth].product] += sign * q
        if option.sdvosb:
            self.sdvosb[self.problem.items[depth].product] += sign * q
        if sign > 0:
            self.choice[depth] = index
            self.tie[depth] = option.vendor
        else:
            self.choice[depth] = UNAWARDED
            self.tie[depth] = self.problem.n_vendors


def branch_and_bound(
    problem: SearchProblem,
    levels: int = 4,
    max_nodes: int = DEFAULT_MAX_NODES,
) -> Outcome:
    """Best assignment under the first ``levels`` key components.

    With ``levels=4`` the optimum is unique: cost ties are broken by the
    smallest vendor-rank sequence in item order.
    """
    search = _Search(problem=problem, levels=levels, max_nodes=max_nodes)
    for prefer in (None, "small", "sdvosb"):
        seed = evaluate(problem, _greedy(problem, prefer))
        if seed is not None and _better(seed, search.best, levels):
            search.best = seed
    empty = evaluate(problem, tuple([UNAWARDED] * len(problem.items)))
    if _better(empty, search.best, levels):
        search.best = empty

    search.visit(0)
    logger.debug("branch and bound: %d items, %d nodes", len(problem.items), search.nodes)
    best = search.best
    return Outcome(
        choice=best.choice,
        key=best.key,
        tie=best.tie,
        small_lbs=best.small_lbs,
        sdvosb_lbs=best.sdvosb_lbs,
        nodes=search.nodes,
    )


def exhaustive_search(problem: SearchProblem) -> Outcome:
    """Enumerate every assignment and keep the smallest (key, tie)."""
    best: Outcome | None = None
    choices = [
        list(range(len(item.options))) + [UNAWARDED] for item in problem.items
    ]
    count = 0
    for choice in cartesian(*choices):
        count += 1
        outcome = evaluate(problem, choice)
        if outcome is not None and _better(outcome, best, 4):
            best = outcome
    logger.debug("exhaustive search: %d assignments", count)
    return Outcome(
        choice=best.choice,
        key=best.key,
        tie=best.tie,
        small_lbs=best.small_lbs,
        sdvosb_lbs=best.sdvosb_lbs,
        nodes=count,
    )
