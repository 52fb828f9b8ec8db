"""
Bidding equilibrium for two small bidders and one large bidder.

A fraction ``alpha`` of the M items is set aside for small bidders; every
bidder quotes one price per lb for all items and the lowest price wins. The
inverse bid functions c1 (small) and c2 (large) solve

    c1' = [1 - F1(c1)] / (2 f1(c1) (p - c2))
    c2' = [1 - (1-alpha) F2(c2)] / ((1-alpha) f2(c2)) * [1/(p - c1) - 1/(2 (p - c2))]

with c1 = c2 = v_lo at the common lowest bid b_low and c1 = c2 = v_hi at
p = v_hi. The system is integrated forward from a trial b_low and b_low is
bisected until both inverse bids reach the top together. alpha = 1 leaves
only the two small bidders and is solved in closed form.

Usage:
    model = EquilibriumModel(alpha=0.5, F1=ValueDistribution.uniform(0, 1),
                             F2=ValueDistribution.uniform(0, 1))
    solution = solve_equilibrium(model)
    solution.bid(SizeClass.SMALL, 0.4)
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from enum import StrEnum
from functools import lru_cache
from typing import Literal, NamedTuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, model_validator
from scipy import stats
from scipy.integrate import quad
from scipy.special import ndtr

from domain import AuctionLabError, SizeClass, UnsupportedConfigurationError
from solvers.shooting import BracketFailure, Shot, bisect_start, fire, terminal_event

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 2001
DEFAULT_TOLERANCE = 1e-10
# Integration stops this fraction of the support below the top type.
TOP_GAP = 1e-6
# b_low is bisected to this fraction of the support.
BISECTION_XTOL = 1e-8
# An inverse bid steeper than this has run into the price line: start was too low.
STEEP_SLOPE = 1e6
# Markup floor as a fraction of the distance to the top type.
MARKUP_FLOOR = 1e-3
# Dense-output samples used to differentiate the inverse bids.
DERIVATIVE_SAMPLES = 20_001
GAP_EPSILON = 1e-12


# ── Errors ───────────────────────────────────────────────────────
class EquilibriumError(AuctionLabError):
    pass


class BracketError(EquilibriumError):
    def __init__(self, low: float, high: float, reason: str = ""):
        super().__init__(f"shooting could not bracket b_low in [{low:.6f}, {high:.6f}] {reason}".strip())
        self.low = low
        self.high = high


class NonMonotoneError(EquilibriumError):
    def __init__(self, bidder: str, index: int):
        super().__init__(f"inverse bid {bidder} is not increasing at grid index {index}")
        self.bidder = bidder
        self.index = index


# ── Distributions ────────────────────────────────────────────────
class DistributionKind(StrEnum):
    UNIFORM = "UNIFORM"
    TRUNCATED_NORMAL = "TRUNCATED_NORMAL"
    PIECEWISE_LINEAR_CDF = "PIECEWISE_LINEAR_CDF"
    # Degenerate cost, for simulation fixtures only.
    POINT = "POINT"


class ValueDistribution(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: DistributionKind
    lo: float | None = None
    hi: float | None = None
    mu: float | None = None
    sigma: PositiveFloat | None = None
    knots: tuple[tuple[float, float], ...] = ()
    value: float | None = None

    @model_validator(mode="after")
    def _check_parameters(self) -> "ValueDistribution":
        kind = self.kind
        if kind in (DistributionKind.UNIFORM, DistributionKind.TRUNCATED_NORMAL):
            if self.lo is None or self.hi is None or not self.lo < self.hi:
                raise ValueError(f"{kind} needs lo < hi")
        if kind == DistributionKind.TRUNCATED_NORMAL and (self.mu is None or self.sigma is None):
            raise ValueError("TRUNCATED_NORMAL needs mu and sigma")
        if kind == DistributionKind.PIECEWISE_LINEAR_CDF:
            if len(self.knots) < 2:
                raise ValueError("PIECEWISE_LINEAR_CDF needs at least two knots")
            xs = [x for x, _ in self.knots]
            ps = [p for _, p in self.knots]
            if ps[0] != 0.0 or ps[-1] != 1.0:
                raise ValueError("piecewise CDF must start at 0 and end at 1")
            if any(b <= a for a, b in zip(xs, xs[1:])) or any(b <= a for a, b in zip(ps, ps[1:])):
                raise ValueError("piecewise CDF knots must be strictly increasing")
        if kind == DistributionKind.POINT and self.value is None:
            raise ValueError("POINT needs value")
        return self

    @classmethod
    def uniform(cls, lo: float, hi: float) -> "ValueDistribution":
        return cls(kind=DistributionKind.UNIFORM, lo=lo, hi=hi)

    @classmethod
    def truncated_normal(cls, mu: float, sigma: float, lo: float, hi: float) -> "ValueDistribution":
        return cls(kind=DistributionKind.TRUNCATED_NORMAL, mu=mu, sigma=sigma, lo=lo, hi=hi)

    @classmethod
    def piecewise(cls, knots: list[tuple[float, float]]) -> "ValueDistribution":
        return cls(kind=DistributionKind.PIECEWISE_LINEAR_CDF, knots=tuple(map(tuple, knots)))

    @classmethod
    def point(cls, value: float) -> "ValueDistribution":
        return cls(kind=DistributionKind.POINT, value=value)

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == DistributionKind.PIECEWISE_LINEAR_CDF:
            return (self.knots[0][0], self.knots[-1][0])
        if self.kind == DistributionKind.POINT:
            return (self.value, self.value)
        return (self.lo, self.hi)

    # cdf and pdf are called inside the integrator, so they avoid the
    # per-call overhead of scipy.stats frozen distributions.
    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        match self.kind:
            case DistributionKind.UNIFORM:
                out = np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0)
            case DistributionKind.TRUNCATED_NORMAL:
                a, mass = _truncnorm_mass(self)
                out = np.clip((ndtr((x - self.mu) / self.sigma) - a) / mass, 0.0, 1.0)
            case DistributionKind.PIECEWISE_LINEAR_CDF:
                xs, ps = zip(*self.knots)
                out = np.interp(x, xs, ps)
            case DistributionKind.POINT:
                out = (x >= self.value).astype(float)
        return out if out.ndim else float(out)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        inside = (x >= lo) & (x <= hi)
        match self.kind:
            case DistributionKind.UNIFORM:
                out = np.where(inside, 1.0 / (hi - lo), 0.0)
            case DistributionKind.TRUNCATED_NORMAL:
                _, mass = _truncnorm_mass(self)
                z = (x - self.mu) / self.sigma
                out = np.where(inside, np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * self.sigma * mass), 0.0)
            case DistributionKind.PIECEWISE_LINEAR_CDF:
                xs = np.array([k[0] for k in self.knots])
                ps = np.array([k[1] for k in self.knots])
                slopes = np.diff(ps) / np.diff(xs)
                index = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(slopes) - 1)
                out = np.where(inside, slopes[index], 0.0)
            case DistributionKind.POINT:
                raise UnsupportedConfigurationError("a point mass has no density")
        return out if out.ndim else float(out)

    def ppf(self, q):
        if self.kind == DistributionKind.POINT:
            return np.full_like(np.asarray(q, dtype=float), self.value)
        return _scipy_frozen(self).ppf(q)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == DistributionKind.POINT:
            return np.full(size, float(self.value))
        return _scipy_frozen(self).rvs(size=size, random_state=rng)


@lru_cache(maxsize=128)
def _truncnorm_mass(dist: ValueDistribution) -> tuple[float, float]:
    a = float(ndtr((dist.lo - dist.mu) / dist.sigma))
    b = float(ndtr((dist.hi - dist.mu) / dist.sigma))
    return a, b - a


@lru_cache(maxsize=128)
def _scipy_frozen(dist: ValueDistribution):
    match dist.kind:
        case DistributionKind.UNIFORM:
            return stats.uniform(loc=dist.lo, scale=dist.hi - dist.lo)
        case DistributionKind.TRUNCATED_NORMAL:
            a = (dist.lo - dist.mu) / dist.sigma
            b = (dist.hi - dist.mu) / dist.sigma
            return stats.truncnorm(a, b, loc=dist.mu, scale=dist.sigma)
        case DistributionKind.PIECEWISE_LINEAR_CDF:
            xs = np.array([k[0] for k in dist.knots])
            ps = np.array([k[1] for k in dist.knots])
            return stats.rv_histogram((np.diff(ps) / np.diff(xs), xs), density=True)
    raise UnsupportedConfigurationError(f"no scipy distribution for {dist.kind}")


# ── Model ────────────────────────────────────────────────────────
class EquilibriumModel(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    M: PositiveInt = 1
    alpha: float = Field(ge=0.0, le=1.0)
    F1: ValueDistribution
    F2: ValueDistribution
    n_small: Literal[2] = 2
    n_large: Literal[1] = 1

    @property
    def support(self) -> tuple[float, float]:
        return self.F1.support


def _check_model(model: EquilibriumModel) -> None:
    for name, dist in (("F1", model.F1), ("F2", model.F2)):
        if dist.kind == DistributionKind.POINT:
            raise UnsupportedConfigurationError(f"{name} must have a density on its support")
    if model.F1.support != model.F2.support:
        raise UnsupportedConfigurationError(
            f"F1 support {model.F1.support} differs from F2 support {model.F2.support}"
        )


# ── Profits and first-order conditions ───────────────────────────
class ProfitEvaluation(NamedTuple):
    value: float
    clamped: bool


def _clamp(model: EquilibriumModel, c) -> tuple[np.ndarray, bool]:
    lo, hi = model.support
    c = np.asarray(c, dtype=float)
    clipped = np.clip(c, lo, hi)
    return clipped, bool(np.any(clipped != c))


def _scalar(value):
    return float(value) if np.ndim(value) == 0 else np.asarray(value)


def expected_profit_small(
    p: float, v1: float, model: EquilibriumModel, c1: Callable, c2: Callable
) -> ProfitEvaluation:
    """M (p - v1) [1 - F1(c1(p))] [1 - (1-alpha) F2(c2(p))]."""
    k1, flag1 = _clamp(model, c1(p))
    k2, flag2 = _clamp(model, c2(p))
    value = (
        model.M
        * (p - v1)
        * (1.0 - model.F1.cdf(k1))
        * (1.0 - (1.0 - model.alpha) * model.F2.cdf(k2))
    )
    return ProfitEvaluation(_scalar(value), flag1 or flag2)


def expected_profit_large(p: float, v2: float, model: EquilibriumModel, c1: Callable) -> ProfitEvaluation:
    """(1-alpha) M (p - v2) [1 - F1(c1(p))]^2."""
    k1, flag = _clamp(model, c1(p))
    value = (1.0 - model.alpha) * model.M * (p - v2) * (1.0 - model.F1.cdf(k1)) ** 2
    return ProfitEvaluation(_scalar(value), flag)


def foc_residual(p, model: EquilibriumModel, c1, c2, c1_prime, c2_prime):
    """First-order condition residuals (small, large); zero in equilibrium.

    Works elementwise on arrays.
    """
    g1 = 1.0 - model.F1.cdf(c1)
    h = 1.0 - (1.0 - model.alpha) * model.F2.cdf(c2)
    f1 = model.F1.pdf(c1)
    f2 = model.F2.pdf(c2)
    small = g1 * h - (p - c1) * (f1 * c1_prime * h + g1 * (1.0 - model.alpha) * f2 * c2_prime)
    large = g1 - (p - c2) * 2.0 * f1 * c1_prime
    return small, large


def _derivatives(model: EquilibriumModel, p, c1, c2):
    # f1 c1' / [1 - F1(c1)] simplifies to 1 / (2 (p - c2)).
    g1 = 1.0 - model.F1.cdf(c1)
    h = 1.0 - (1.0 - model.alpha) * model.F2.cdf(c2)
    c1_prime = g1 / (2.0 * model.F1.pdf(c1) * (p - c2))
    c2_prime = h / ((1.0 - model.alpha) * model.F2.pdf(c2)) * (1.0 / (p - c1) - 0.5 / (p - c2))
    return c1_prime, c2_prime


def _slopes(p: np.ndarray, *inverse_bids: np.ndarray) -> list[np.ndarray]:
    # Taken from the sampled inverse bids, never from the ODE right-hand side.
    return [np.gradient(c, p, edge_order=2) for c in inverse_bids]


def _max_foc(model: EquilibriumModel, p: np.ndarray, c1: np.ndarray, c2: np.ndarray) -> float:
    if len(p) < 3:
        return 0.0
    c1_prime, c2_prime = _slopes(p, c1, c2)
    inner = slice(1, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        small, large = foc_residual(p[inner], model, c1[inner], c2[inner], c1_prime[inner], c2_prime[inner])
    if model.alpha >= 1.0:
        large = np.zeros(0)
    return float(max(np.max(np.abs(small), initial=0.0), np.max(np.abs(large), initial=0.0)))


# ── Solution ─────────────────────────────────────────────────────
@dataclass(frozen=True)
class EquilibriumDiagnostics:
    max_foc_residual: float
    boundary_mismatch: float
    shooting_iterations: int
    b_low_bracket: tuple[float, float]
    closed_form: bool = False


@dataclass(frozen=True, eq=False)
class EquilibriumSolution:
    model: EquilibriumModel
    price_grid: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    c1_prime: np.ndarray
    c2_prime: np.ndarray
    b_low: float
    diagnostics: EquilibriumDiagnostics
    # Grid points at or above this price were extrapolated to the top type.
    p_end: float = field(default=math.inf)

    def _arrays(self, bidder: SizeClass) -> tuple[np.ndarray, np.ndarray]:
        return (self.c1, self.c1_prime) if bidder == SizeClass.SMALL else (self.c2, self.c2_prime)

    def inverse_bid(self, bidder: SizeClass, p):
        """c_i(p); linear outside the grid so callers can detect clamping."""
        c, _ = self._arrays(bidder)
        p = np.asarray(p, dtype=float)
        out = np.interp(p, self.price_grid, c)
        out = np.where(p < self.b_low, c[0] - (self.b_low - p), out)
        out = np.where(p > self.price_grid[-1], c[-1] + (p - self.price_grid[-1]), out)
        return out if out.ndim else float(out)

    def inverse_bid_prime(self, bidder: SizeClass, p):
        _, prime = self._arrays(bidder)
        return np.interp(p, self.price_grid, prime)

    def bid(self, bidder: SizeClass, v):
        """b_i(v), the price a bidder of type i with cost v quotes."""
        c, _ = self._arrays(bidder)
        return np.interp(v, c, self.price_grid)

    def to_frame(self) -> pd.DataFrame:
        lo, hi = self.model.support
        values = np.linspace(lo, hi, len(self.price_grid))
        return pd.DataFrame(
            {
                "p": self.price_grid,
                "c1": self.c1,
                "c2": self.c2,
                "v": values,
                "b1_of_c1_grid": self.bid(SizeClass.SMALL, values),
                "b2_of_c2_grid": self.bid(SizeClass.LARGE, values),
            }
        )

    def diagnostics_text(self) -> str:
        d = self.diagnostics
        return "\n".join(
            [
                f"alpha               {self.model.alpha:g}",
                f"M                   {self.model.M}",
                f"b_low               {self.b_low:.10f}",
                f"grid points         {len(self.price_grid)}",
                f"max FOC residual    {d.max_foc_residual:.3e}",
                f"boundary mismatch   {d.boundary_mismatch:.3e}",
                f"shooting iterations {d.shooting_iterations}",
                f"closed form         {'yes' if d.closed_form else 'no'}",
            ]
        )


def _freeze(*arrays: np.ndarray) -> None:
    for array in arrays:
        array.setflags(write=False)


# ── Symmetric closed form ────────────────────────────────────────
class SymmetricStrategy:
    """b(v) = v + int_v^vhi [1-F(t)]^(n-1) dt / [1-F(v)]^(n-1)."""

    def __init__(self, F: ValueDistribution, n_bidders: int):
        if n_bidders < 2:
            raise UnsupportedConfigurationError("symmetric bidding needs at least two bidders")
        self.F = F
        self.n_bidders = n_bidders

    def _one(self, v: float) -> float:
        lo, hi = self.F.support
        k = self.n_bidders - 1
        survival = (1.0 - self.F.cdf(v)) ** k
        if v >= hi or survival <= 0.0:
            return hi
        v = max(v, lo)
        tail, _ = quad(lambda t: (1.0 - self.F.cdf(t)) ** k, v, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
        return v + tail / survival

    def __call__(self, v):
        if np.ndim(v) == 0:
            return self._one(float(v))
        return np.array([self._one(float(x)) for x in np.asarray(v, dtype=float)])


def solve_symmetric(F: ValueDistribution, n_bidders: int) -> SymmetricStrategy:
    return SymmetricStrategy(F, n_bidders)


def _solve_full_set_aside(model: EquilibriumModel, grid_size: int) -> EquilibriumSolution:
    lo, hi = model.support
    strategy = solve_symmetric(model.F1, 2)
    values = np.linspace(lo, hi, grid_size)
    bids = strategy(values)
    b_low = float(bids[0])
    grid = np.linspace(b_low, hi, grid_size)
    c1 = np.clip(np.interp(grid, bids, values), lo, hi)
    c1[0], c1[-1] = lo, hi
    [c1_prime] = _slopes(grid, c1)
    c2 = c1.copy()
    c2_prime = c1_prime.copy()
    _freeze(grid, c1, c2, c1_prime, c2_prime)
    return EquilibriumSolution(
        model=model,
        price_grid=grid,
        c1=c1,
        c2=c2,
        c1_prime=c1_prime,
        c2_prime=c2_prime,
        b_low=b_low,
        diagnostics=EquilibriumDiagnostics(
            max_foc_residual=_max_foc(model, grid, c1, c1),
            boundary_mismatch=0.0,
            shooting_iterations=0,
            b_low_bracket=(b_low, b_low),
            closed_form=True,
        ),
    )


# ── Shooting solve ───────────────────────────────────────────────
@lru_cache(maxsize=32)
def solve_equilibrium(
    model: EquilibriumModel,
    grid_size: int = DEFAULT_GRID_SIZE,
    tolerance: float = DEFAULT_TOLERANCE,
) -> EquilibriumSolution:
    """Solve for (c1, c2) on a uniform price grid over [b_low, v_hi]."""
    _check_model(model)
    if model.alpha >= 1.0:
        logger.debug("alpha=1: large bidder excluded, using the two-bidder closed form")
        return _solve_full_set_aside(model, grid_size)

    lo, hi = model.support
    width = hi - lo
    p_end = hi - TOP_GAP * width
    markup_floor = 1e-12 * width

    def rhs(p, y):
        return _derivatives(model, p, y[0], y[1])

    def steepness(p, y):
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = float(np.max(np.asarray(rhs(p, y), dtype=float)))
        return STEEP_SLOPE - slope if np.isfinite(slope) else -1.0

    events = (
        terminal_event("ceiling", lambda p, y: hi - max(y[0], y[1])),
        terminal_event("steep", steepness),
        terminal_event("markup", lambda p, y: min(p - y[0], p - y[1]) - MARKUP_FLOOR * (hi - p) - markup_floor),
        terminal_event("floor", lambda p, y: min(y[0], y[1]) - (lo - markup_floor)),
    )

    def shot_at(b_low: float) -> Shot:
        y0 = (lo, lo)
        if steepness(b_low, y0) <= 0.0:
            return Shot(b_low, False, "steep", np.array([b_low]), np.array([[lo], [lo]]), None)
        return fire(rhs, b_low, y0, p_end, events, rtol=tolerance, atol=tolerance * 1e-2 * width)

    def too_high(shot: Shot) -> bool:
        # Reaching the top with inverse bids lagging means b_low was too high;
        # running into the top type or the price line means too low.
        return shot.reached_end or shot.event == "floor"

    try:
        bracket = bisect_start(
            shot_at,
            too_high,
            lo + 1e-9 * width,
            hi - 10 * TOP_GAP * width,
            xtol=max(tolerance, BISECTION_XTOL) * width,
        )
    except BracketFailure as e:
        raise BracketError(e.low, e.high, str(e)) from e

    shot = bracket.high_shot
    b_low = bracket.high
    grid = np.linspace(b_low, hi, grid_size)
    inside = grid <= shot.end
    states = np.empty((2, grid_size))
    states[:, inside] = shot.dense(grid[inside])
    top = shot.y[:, -1]
    reach = (grid[~inside] - shot.end) / (hi - shot.end)
    states[:, ~inside] = top[:, None] + (hi - top[:, None]) * reach
    states[:, 0] = lo
    states = np.clip(states, lo, hi)
    c1, c2 = states

    for name, c in (("c1", c1), ("c2", c2)):
        bad = np.flatnonzero(np.diff(c) <= 0)
        if bad.size:
            raise NonMonotoneError(name, int(bad[0]) + 1)

    fine = np.linspace(b_low, shot.end, DERIVATIVE_SAMPLES)
    fine_c1, fine_c2 = shot.dense(fine)
    fine_c1[0] = fine_c2[0] = lo
    fine_c1_prime, fine_c2_prime = _slopes(fine, fine_c1, fine_c2)
    slope = (hi - top) / (hi - shot.end)
    c1_prime = np.where(inside, np.interp(grid, fine, fine_c1_prime), slope[0])
    c2_prime = np.where(inside, np.interp(grid, fine, fine_c2_prime), slope[1])

    diagnostics = EquilibriumDiagnostics(
        max_foc_residual=_max_foc(model, fine, fine_c1, fine_c2),
        boundary_mismatch=float(np.max(hi - top)),
        shooting_iterations=bracket.iterations,
        b_low_bracket=(bracket.low, bracket.high),
    )
    logger.debug(
        "alpha=%.3f: b_low=%.10f after %d bisections, top mismatch %.2e",
        model.alpha,
        b_low,
        bracket.iterations,
        diagnostics.boundary_mismatch,
    )
    _freeze(grid, c1, c2, c1_prime, c2_prime)
    return EquilibriumSolution(
        model=model,
        price_grid=grid,
        c1=c1,
        c2=c2,
        c1_prime=c1_prime,
        c2_prime=c2_prime,
        b_low=b_low,
        diagnostics=diagnostics,
        p_end=shot.end,
    )


# ── Oracles ──────────────────────────────────────────────────────
def solution_foc_residual(solution: EquilibriumSolution) -> float:
    """Largest first-order condition residual on the solution's own price grid.

    Slopes come from differencing the stored inverse bids, so a grid that is
    not an equilibrium shows up here.
    """
    inside = solution.price_grid < solution.p_end
    return _max_foc(solution.model, solution.price_grid[inside], solution.c1[inside], solution.c2[inside])


def markup_large(p: float, solution: EquilibriumSolution) -> float:
    """[1 - F1(c1(p))] / (2 f1(c1(p)) c1'(p)), equal to p - c2(p) in equilibrium."""
    F1 = solution.model.F1
    c1 = solution.inverse_bid(SizeClass.SMALL, p)
    c1_prime = float(solution.inverse_bid_prime(SizeClass.SMALL, p))
    g1 = 1.0 - F1.cdf(c1)
    if g1 <= 0.0:
        return 0.0
    denominator = 2.0 * F1.pdf(c1) * c1_prime
    if not denominator > 0.0:
        return math.inf
    return float(g1 / denominator)


def best_response_gap(
    model: EquilibriumModel,
    solution: EquilibriumSolution,
    v: float,
    bidder_type: SizeClass,
    grid: np.ndarray | None = None,
) -> float:
    """Relative profit left on the table by bidding the solved strategy."""
    lo, hi = model.support
    if grid is None:
        grid = np.linspace(solution.b_low, hi, 20_001)

    def c1(p):
        return solution.inverse_bid(SizeClass.SMALL, p)

    def c2(p):
        return solution.inverse_bid(SizeClass.LARGE, p)

    if bidder_type == SizeClass.SMALL:
        profit = lambda p: expected_profit_small(p, v, model, c1, c2).value
    else:
        if model.alpha >= 1.0:
            return 0.0
        profit = lambda p: expected_profit_large(p, v, model, c1).value

    profits = np.asarray(profit(grid), dtype=float)
    best = float(np.max(profits, initial=0.0))
    if best <= GAP_EPSILON:
        return 0.0
    solved = profit(float(solution.bid(bidder_type, v)))
    return max(0.0, (best - solved) / max(best, GAP_EPSILON))


def verify_solution(
    solution: EquilibriumSolution, n_quantiles: int = 20, grid_points: int = 20_001
) -> pd.DataFrame:
    """Best-response gaps at quantile-spaced costs for each bidder type."""
    model = solution.model
    grid = np.linspace(solution.b_low, model.support[1], grid_points)
    quantiles = (np.arange(n_quantiles) + 0.5) / n_quantiles
    rows = []
    for bidder, dist in ((SizeClass.SMALL, model.F1), (SizeClass.LARGE, model.F2)):
        if bidder == SizeClass.LARGE and model.alpha >= 1.0:
            continue
        for q, v in zip(quantiles, np.asarray(dist.ppf(quantiles), dtype=float)):
            rows.append(
                {
                    "bidder_type": str(bidder),
                    "quantile": float(q),
                    "cost": float(v),
                    "bid": float(solution.bid(bidder, v)),
                    "gap": best_response_gap(model, solution, float(v), bidder, grid),
                }
            )
    return pd.DataFrame(rows)


def perturb(solution: EquilibriumSolution, shift: float) -> EquilibriumSolution:
    """Shift c1 by ``shift``; the result should fail the best-response check."""
    lo, hi = solution.model.support
    return replace(solution, c1=np.clip(solution.c1 + shift, lo, hi))


def expected_bid(
    solution: EquilibriumSolution, bidder_type: SizeClass, F: ValueDistribution | None = None
) -> float:
    """E[b_i(v)] with v drawn from F (defaults to the bidder's own distribution)."""
    model = solution.model
    if bidder_type == SizeClass.LARGE and model.alpha >= 1.0:
        raise UnsupportedConfigurationError("the large bidder does not bid under a full set-aside")
    if F is None:
        F = model.F1 if bidder_type == SizeClass.SMALL else model.F2
    lo, hi = F.support
    value, _ = quad(
        lambda v: float(solution.bid(bidder_type, v)) * float(F.pdf(v)), lo, hi, limit=400, epsabs=1e-12
    )
    return value


def expected_winning_bid_symmetric(F: ValueDistribution, n_bidders: int) -> float:
    """E[min_i b(v_i)] for n symmetric bidders, by quadrature over the lowest cost."""
    strategy = solve_symmetric(F, n_bidders)
    lo, hi = F.support
    n = n_bidders

    def integrand(v: float) -> float:
        density = n * F.pdf(v) * (1.0 - F.cdf(v)) ** (n - 1)
        return strategy(v) * density

    value, _ = quad(integrand, lo, hi, limit=200, epsabs=1e-12)
    return value


def comparative_statics(
    F1: ValueDistribution,
    F2: ValueDistribution,
    alphas: list[float],
    M: int = 1,
    grid_size: int = 401,
) -> pd.DataFrame:
    """c1, c1' and c2 for each alpha on a common price grid.

    Exploratory output only; no direction of the bid shift is implied.
    """
    solutions = [
        solve_equilibrium(EquilibriumModel(M=M, alpha=a, F1=F1, F2=F2)) for a in alphas
    ]
    lo = max(s.b_low for s in solutions)
    hi = F1.support[1]
    grid = np.linspace(lo, hi, grid_size)
    frames = []
    for alpha, solution in zip(alphas, solutions):
        frames.append(
            pd.DataFrame(
                {
                    "alpha": alpha,
                    "p": grid,
                    "c1": solution.inverse_bid(SizeClass.SMALL, grid),
                    "c1_prime": solution.inverse_bid_prime(SizeClass.SMALL, grid),
                    "c2": np.nan if alpha >= 1.0 else solution.inverse_bid(SizeClass.LARGE, grid),
                }
            )
        )
    return pd.concat(frames, ignore_index=True)
