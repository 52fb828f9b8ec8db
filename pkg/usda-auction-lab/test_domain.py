"""
Tests for domain quota arithmetic and solicitation validation.

Covers:
- Set-aside quotas in lbs (worked ground-beef example, α=0, α=1)
- Demand level in million lbs and the observed-range warning
- Violation reporting for malformed solicitations
"""

import logging
from datetime import date
from fractions import Fraction

import pytest
from pydantic import ValidationError

from domain import (
    Bid,
    CapacityConstraint,
    Item,
    Product,
    SetAsidePolicy,
    Solicitation,
    UnknownProductError,
    DomainValidationError,
    analysis_group_key,
    compute_sdvosb_quota,
    compute_setaside_quota,
    demand_level,
    validate_solicitation,
)

GROUND = "BEEF FINE GROUND FRZ CTN-40"
PATTY = "BEEF PATTIES 100% FRZ CTN-40"


def _item(item_id: str, quantity: int, product: str = GROUND, **kw) -> Item:
    fields = dict(
        item_id=item_id,
        solicitation_id="S1",
        product_code=product,
        quantity_lbs=quantity,
        window_start=date(2019, 1, 1),
        window_end=date(2019, 1, 31),
    )
    fields.update(kw)
    return Item(**fields)


def _solicitation(items, alphas: dict[str, float]) -> Solicitation:
    return Solicitation(
        solicitation_id="S1",
        auction_date=date(2018, 12, 1),
        items=tuple(items),
        policies=tuple(SetAsidePolicy(applies_to=p, alpha=a) for p, a in alphas.items()),
    )


# ── Quotas ───────────────────────────────────────────────────────


def test_worked_example_quota_is_two_truckloads() -> None:
    sol = _solicitation([_item(f"I{i}", 40_000) for i in range(4)], {GROUND: 0.5})
    assert compute_setaside_quota(sol, GROUND) == 80_000


def test_zero_alpha_quota_is_zero() -> None:
    sol = _solicitation([_item("I1", 40_000)], {GROUND: 0.0})
    assert compute_setaside_quota(sol, GROUND) == 0


def test_full_set_aside_quota_is_total_quantity() -> None:
    items = [_item("I1", 40_000), _item("I2", 38_000), _item("I3", 42_000)]
    sol = _solicitation(items, {GROUND: 1.0})
    assert compute_setaside_quota(sol, GROUND) == 120_000


def test_quota_is_exact_for_odd_quantities() -> None:
    sol = _solicitation([_item("I1", 40_001)], {GROUND: 0.5})
    assert compute_setaside_quota(sol, GROUND) == Fraction(40_001, 2)


def test_quota_additive_under_item_split() -> None:
    whole = _solicitation([_item("I1", 40_000)], {GROUND: 0.5})
    split = _solicitation([_item("I1", 15_000), _item("I2", 25_000)], {GROUND: 0.5})
    assert compute_setaside_quota(whole, GROUND) == compute_setaside_quota(split, GROUND)


def test_sdvosb_quota_uses_its_own_fraction() -> None:
    sol = Solicitation(
        solicitation_id="S1",
        auction_date=date(2018, 12, 1),
        items=(_item("I1", 40_000), _item("I2", 40_000)),
        policies=(SetAsidePolicy(applies_to=GROUND, alpha=0.0, sdvosb_fraction=0.5),),
    )
    assert compute_sdvosb_quota(sol, GROUND) == 40_000


def test_unknown_product_names_the_code() -> None:
    sol = _solicitation([_item("I1", 40_000)], {GROUND: 0.5})
    with pytest.raises(UnknownProductError, match="PORK"):
        compute_setaside_quota(sol, "PORK")


# ── Demand ───────────────────────────────────────────────────────


def test_demand_level_in_million_lbs() -> None:
    sol = _solicitation([_item(f"I{i}", 40_000) for i in range(4)], {GROUND: 0.5})
    assert demand_level(sol, GROUND) == pytest.approx(0.16)


def test_demand_level_at_observed_minimum_does_not_warn(caplog) -> None:
    sol = _solicitation([_item("I1", 38_000)], {GROUND: 0.0})
    with caplog.at_level(logging.WARNING):
        assert demand_level(sol, GROUND) == pytest.approx(0.038)
    assert not caplog.records


def test_demand_level_outside_range_warns(caplog) -> None:
    sol = _solicitation([_item("I1", 20_000)], {GROUND: 0.0})
    with caplog.at_level(logging.WARNING):
        assert demand_level(sol, GROUND) == pytest.approx(0.02)
    assert "outside the observed range" in caplog.text


def test_demand_level_is_exact_in_lbs() -> None:
    quantities = [40_000, 38_123, 41_977, 39_999]
    sol = _solicitation([_item(f"I{i}", q) for i, q in enumerate(quantities)], {GROUND: 0.0})
    assert demand_level(sol, GROUND) * 1_000_000 == pytest.approx(sum(quantities), abs=1e-6)


# ── Validation ───────────────────────────────────────────────────


def test_valid_solicitation_has_empty_report() -> None:
    sol = _solicitation([_item("I1", 40_000), _item("I2", 40_000, PATTY)], {GROUND: 0.5, PATTY: 1.0})
    report = validate_solicitation(sol)
    assert report.ok
    assert len(report) == 0


def test_duplicate_item_id_reported_once() -> None:
    sol = _solicitation([_item("I1", 40_000), _item("I1", 40_000)], {GROUND: 0.5})
    report = validate_solicitation(sol)
    assert [v.code for v in report.violations] == ["duplicate_item_id"]
    assert report.violations[0].subject == "I1"


def test_missing_policy_names_product() -> None:
    sol = _solicitation([_item("I1", 40_000), _item("I2", 40_000, PATTY)], {GROUND: 0.5})
    report = validate_solicitation(sol)
    assert [(v.code, v.subject) for v in report.violations] == [("missing_policy", PATTY)]


def test_nonpositive_quantity_and_window_order() -> None:
    bad = _item("I1", 0, window_start=date(2019, 2, 1), window_end=date(2019, 1, 1))
    report = validate_solicitation(_solicitation([bad], {GROUND: 0.0}))
    assert {v.code for v in report.violations} == {"nonpositive_quantity", "window_order"}


# ── Models ───────────────────────────────────────────────────────


def test_bid_price_rounded_to_four_digits() -> None:
    bid = Bid(vendor_id="V", item_id="I", price_per_lb=2.123456)
    assert bid.price_per_lb == 2.1235
    assert bid.price_units == 21235


def test_bid_rejects_negative_price() -> None:
    with pytest.raises(ValidationError):
        Bid(vendor_id="V", item_id="I", price_per_lb=-1.0)


def test_product_requires_positive_reference_price() -> None:
    with pytest.raises(ValidationError):
        Product(product_code=GROUND, reference_price_usda=0.0)


def test_group_key_strips_package_class() -> None:
    a = Product(product_code=GROUND, package_size_class="CTN-40", reference_price_usda=2.5)
    b = Product(
        product_code="BEEF FINE GROUND FRZ PKG-40/1",
        package_size_class="PKG-40/1",
        reference_price_usda=2.5,
    )
    assert a.group_key == b.group_key == "BEEF FINE GROUND FRZ"
    assert analysis_group_key("PLAIN", "") == "PLAIN"


def test_capacity_without_window_covers_all_windows() -> None:
    cap = CapacityConstraint(vendor_id="V", product_code=GROUND, max_quantity_lbs=80_000)
    early = _item("I1", 40_000)
    late = _item("I2", 40_000, window_start=date(2019, 3, 1), window_end=date(2019, 3, 31))
    assert cap.covers(early) and cap.covers(late)
    windowed = CapacityConstraint(
        vendor_id="V",
        product_code=GROUND,
        window_key=(date(2019, 1, 1), date(2019, 1, 31)),
        max_quantity_lbs=40_000,
    )
    assert windowed.covers(early) and not windowed.covers(late)


def test_program_levels_reject_other_alphas() -> None:
    SetAsidePolicy(applies_to=GROUND, alpha=0.5).check_program_levels()
    with pytest.raises(DomainValidationError):
        SetAsidePolicy(applies_to=GROUND, alpha=0.3).check_program_levels()
