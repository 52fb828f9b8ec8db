"""
Shared auction domain module — value objects, errors and quota arithmetic.

Every other module imports its types from here. All models are frozen
pydantic models: quantities are integer pounds, prices are per-lb currency
rounded to 4 fractional digits.

Usage:
    from domain import Solicitation, Item, SetAsidePolicy, compute_setaside_quota

    quota = compute_setaside_quota(solicitation, "BEEF FINE GROUND FRZ CTN-40")
"""

import logging
from datetime import date
from enum import StrEnum
from fractions import Fraction
from collections import Counter

from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, field_validator

logger = logging.getLogger(__name__)

PRICE_DIGITS = 4
PRICE_SCALE = 10**PRICE_DIGITS

# Observed range of product demand per solicitation, million lbs.
DEMAND_RANGE_MLBS = (0.038, 13.272)

PROGRAM_ALPHAS = (0.0, 0.5, 1.0)


# ── Errors ───────────────────────────────────────────────────────
class AuctionLabError(Exception):
    """Base class for every error raised by the lab."""


class DomainValidationError(AuctionLabError):
    pass


class UnknownProductError(AuctionLabError):
    def __init__(self, product_code: str):
        super().__init__(f"product {product_code!r} is not part of the solicitation")
        self.product_code = product_code


class UnsupportedConfigurationError(AuctionLabError):
    pass


# ── Enumerations ─────────────────────────────────────────────────
class SizeClass(StrEnum):
    SMALL = "SMALL"
    LARGE = "LARGE"


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


# ── Models ───────────────────────────────────────────────────────
class Product(_Frozen):
    product_code: str
    description: str = ""
    package_size_class: str = ""
    reference_price_usda: PositiveFloat
    truckload_lbs: int = Field(default=40_000, gt=0)

    @property
    def group_key(self) -> str:
        return analysis_group_key(self.product_code, self.package_size_class)


class SetAsidePolicy(_Frozen):
    """Per-product small-business quota.

    ``sdvosb_fraction`` is not bounded by ``alpha``: SDVOSB awards count
    toward both tallies.
    """

    applies_to: str
    alpha: float = Field(ge=0.0, le=1.0)
    sdvosb_fraction: float = Field(default=0.0, ge=0.0, le=1.0)

    def check_program_levels(self) -> None:
        if self.alpha not in PROGRAM_ALPHAS:
            raise DomainValidationError(
                f"alpha={self.alpha} for {self.applies_to!r} is outside {PROGRAM_ALPHAS}"
            )


class Destination(_Frozen):
    city: str = ""
    state: str = ""
    zip: str = ""


class Item(_Frozen):
    item_id: str
    solicitation_id: str
    product_code: str
    # Positivity and window order are reported by validate_solicitation.
    quantity_lbs: int
    destination: Destination = Destination()
    window_start: date
    window_end: date

    @property
    def window_key(self) -> tuple[date, date]:
        return (self.window_start, self.window_end)


class Solicitation(_Frozen):
    solicitation_id: str
    auction_date: date
    items: tuple[Item, ...]
    policies: tuple[SetAsidePolicy, ...]

    def product_codes(self) -> list[str]:
        return sorted({item.product_code for item in self.items})

    def items_of(self, product_code: str) -> list[Item]:
        found = [item for item in self.items if item.product_code == product_code]
        if not found:
            raise UnknownProductError(product_code)
        return found

    def policy_for(self, product_code: str) -> SetAsidePolicy:
        for policy in self.policies:
            if policy.applies_to == product_code:
                return policy
        raise UnknownProductError(product_code)


class Vendor(_Frozen):
    vendor_id: str
    size_class: SizeClass
    sdvosb: bool = False

    @property
    def is_small(self) -> bool:
        return self.size_class == SizeClass.SMALL


class Bid(_Frozen):
    vendor_id: str
    item_id: str
    price_per_lb: PositiveFloat

    @field_validator("price_per_lb")
    @classmethod
    def _round_price(cls, value: float) -> float:
        return round(value, PRICE_DIGITS)

    @property
    def price_units(self) -> int:
        """Price in 1/10,000 of a currency unit per lb."""
        return round(self.price_per_lb * PRICE_SCALE)


class CapacityConstraint(_Frozen):
    """Maximum pounds a vendor accepts in one bucket.

    ``product_code=None`` spans every product and ``window_key=None`` every
    delivery window.
    """

    vendor_id: str
    product_code: str | None
    window_key: tuple[date, date] | None = None
    max_quantity_lbs: int = Field(gt=0)

    def covers(self, item: Item) -> bool:
        if self.product_code is not None and item.product_code != self.product_code:
            return False
        return self.window_key is None or tuple(self.window_key) == item.window_key


class Violation(_Frozen):
    code: str
    subject: str
    message: str


class ValidationReport(_Frozen):
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)


# ── Helpers ──────────────────────────────────────────────────────
def analysis_group_key(product_code: str, package_size_class: str) -> str:
    """Product code with its package suffix removed.

    "BEEF FINE GROUND FRZ CTN-40" and "BEEF FINE GROUND FRZ PKG-40/1" share
    the key "BEEF FINE GROUND FRZ".
    """
    code = product_code.strip()
    package = package_size_class.strip()
    if package and code.endswith(package):
        code = code[: -len(package)]
    return code.rstrip(" -_/")


def price_from_units(units: int) -> float:
    return units / PRICE_SCALE


# ── Quota arithmetic ─────────────────────────────────────────────
def product_quantity_lbs(solicitation: Solicitation, product_code: str) -> int:
    return sum(item.quantity_lbs for item in solicitation.items_of(product_code))


def compute_setaside_quota(solicitation: Solicitation, product_code: str) -> Fraction:
    """Pounds of ``product_code`` reserved for small vendors, unrounded."""
    total = product_quantity_lbs(solicitation, product_code)
    alpha = Fraction(str(solicitation.policy_for(product_code).alpha))
    return alpha * total


def compute_sdvosb_quota(solicitation: Solicitation, product_code: str) -> Fraction:
    total = product_quantity_lbs(solicitation, product_code)
    fraction = Fraction(str(solicitation.policy_for(product_code).sdvosb_fraction))
    return fraction * total


def demand_level(solicitation: Solicitation, product_code: str) -> float:
    """Total requested quantity of the product in million lbs."""
    total = product_quantity_lbs(solicitation, product_code)
    demand = total / 1_000_000
    low, high = DEMAND_RANGE_MLBS
    if not low <= demand <= high:
        logger.warning(
            "Demand %.6f million lbs for %s in %s is outside the observed range [%s, %s]",
            demand,
            product_code,
            solicitation.solicitation_id,
            low,
            high,
        )
    return demand


def validate_solicitation(solicitation: Solicitation) -> ValidationReport:
    """List every invariant violation; an empty report means valid."""
    violations: list[Violation] = []

    counts = Counter(item.item_id for item in solicitation.items)
    for item_id, count in sorted(counts.items()):
        if count > 1:
            violations.append(
                Violation(
                    code="duplicate_item_id",
                    subject=item_id,
                    message=f"item_id {item_id!r} appears {count} times",
                )
            )

    for item in solicitation.items:
        if item.quantity_lbs <= 0:
            violations.append(
                Violation(
                    code="nonpositive_quantity",
                    subject=item.item_id,
                    message=f"item {item.item_id!r} has quantity {item.quantity_lbs} lbs",
                )
            )
        if item.window_start > item.window_end:
            violations.append(
                Violation(
                    code="window_order",
                    subject=item.item_id,
                    message=f"item {item.item_id!r} window starts after it ends",
                )
            )
        if item.solicitation_id != solicitation.solicitation_id:
            violations.append(
                Violation(
                    code="foreign_item",
                    subject=item.item_id,
                    message=(
                        f"item {item.item_id!r} belongs to solicitation "
                        f"{item.solicitation_id!r}"
                    ),
                )
            )

    policy_counts = Counter(policy.applies_to for policy in solicitation.policies)
    for product_code in solicitation.product_codes():
        n_policies = policy_counts.get(product_code, 0)
        if n_policies == 0:
            violations.append(
                Violation(
                    code="missing_policy",
                    subject=product_code,
                    message=f"product {product_code!r} has no set-aside policy",
                )
            )
        elif n_policies > 1:
            violations.append(
                Violation(
                    code="duplicate_policy",
                    subject=product_code,
                    message=f"product {product_code!r} has {n_policies} set-aside policies",
                )
            )

    return ValidationReport(violations=tuple(violations))
