"""
Tests for the two-small/one-large bidding equilibrium.

Covers:
- Expected profit and first-order condition formulas
- Closed forms at alpha = 0 and alpha = 1
- Self-consistency and best-response checks at alpha = 0.5
- Residuals from grid slopes catch wrong solutions; solve time (slow)
- Distribution helpers and unsupported configurations
"""

import time
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad

from domain import SizeClass, UnsupportedConfigurationError
from equilibrium import (
    EquilibriumModel,
    ValueDistribution,
    best_response_gap,
    comparative_statics,
    expected_bid,
    expected_profit_large,
    expected_profit_small,
    foc_residual,
    markup_large,
    perturb,
    solution_foc_residual,
    solve_equilibrium,
    solve_symmetric,
    verify_solution,
)

UNIT = ValueDistribution.uniform(0.0, 1.0)
SMALL = SizeClass.SMALL
LARGE = SizeClass.LARGE


def _model(alpha: float, F1=UNIT, F2=UNIT) -> EquilibriumModel:
    return EquilibriumModel(alpha=alpha, F1=F1, F2=F2)


def identity(p):
    return p


# ── Profits ──────────────────────────────────────────────────────


def test_small_profit_direct_evaluation() -> None:
    result = expected_profit_small(0.6, 0.2, _model(0.5), identity, identity)
    assert result.value == pytest.approx(0.112)
    assert not result.clamped


def test_small_profit_zero_at_zero_margin() -> None:
    assert expected_profit_small(0.6, 0.6, _model(0.5), identity, identity).value == 0.0


def test_small_profit_ignores_large_bidder_under_full_set_aside() -> None:
    model = _model(1.0)
    a = expected_profit_small(0.6, 0.2, model, identity, lambda p: 0.1)
    b = expected_profit_small(0.6, 0.2, model, identity, lambda p: 0.9)
    assert a.value == pytest.approx(b.value) == pytest.approx(0.4 * 0.4)


def test_large_profit_direct_evaluation() -> None:
    assert expected_profit_large(0.6, 0.3, _model(0.5), identity).value == pytest.approx(0.024)


def test_large_profit_zero_under_full_set_aside() -> None:
    assert expected_profit_large(0.6, 0.3, _model(1.0), identity).value == 0.0


def test_large_profit_zero_when_certain_to_lose() -> None:
    assert expected_profit_large(0.6, 0.3, _model(0.5), lambda p: 1.0).value == 0.0


def test_profit_clamps_and_flags_out_of_support_inverse_bids() -> None:
    result = expected_profit_small(1.2, 0.2, _model(0.5), identity, identity)
    assert result.clamped
    assert result.value == 0.0


def test_profit_scales_with_item_count() -> None:
    model = EquilibriumModel(M=3, alpha=0.5, F1=UNIT, F2=UNIT)
    assert expected_profit_small(0.6, 0.2, model, identity, identity).value == pytest.approx(0.336)


# ── First-order conditions ───────────────────────────────────────


def test_foc_vanishes_on_symmetric_closed_form() -> None:
    p = np.linspace(0.34, 0.99, 50)
    c = (3 * p - 1) / 2
    small, large = foc_residual(p, _model(0.0), c, c, np.full_like(p, 1.5), np.full_like(p, 1.5))
    assert np.max(np.abs(small)) <= 1e-8
    assert np.max(np.abs(large)) <= 1e-8


def test_foc_with_constant_inverse_bids_is_positive() -> None:
    p = np.linspace(0.3, 0.9, 7)
    c = np.full_like(p, 0.2)
    small, _ = foc_residual(p, _model(0.5), c, c, np.zeros_like(p), np.zeros_like(p))
    assert np.allclose(small, 0.8 * (1 - 0.5 * 0.2))


def test_foc_small_vanishes_on_two_bidder_closed_form() -> None:
    p = np.linspace(0.51, 0.99, 50)
    c = 2 * p - 1
    small, _ = foc_residual(p, _model(1.0), c, c, np.full_like(p, 2.0), np.full_like(p, 2.0))
    assert np.max(np.abs(small)) <= 1e-8


# ── Symmetric strategies ─────────────────────────────────────────


def test_symmetric_two_bidders() -> None:
    assert solve_symmetric(UNIT, 2)(0.5) == pytest.approx(0.75, abs=1e-10)


def test_symmetric_three_bidders() -> None:
    assert solve_symmetric(UNIT, 3)(0.4) == pytest.approx(0.6, abs=1e-10)


def test_symmetric_top_type_bids_cost() -> None:
    F = ValueDistribution.truncated_normal(2.0, 0.5, 1.0, 3.0)
    assert solve_symmetric(F, 2)(3.0) == 3.0


def test_symmetric_needs_two_bidders() -> None:
    with pytest.raises(UnsupportedConfigurationError):
        solve_symmetric(UNIT, 1)


# ── Equilibrium solve ────────────────────────────────────────────


def test_full_set_aside_matches_two_bidder_closed_form() -> None:
    solution = solve_equilibrium(_model(1.0))
    assert solution.b_low == pytest.approx(0.5, abs=1e-9)
    v = np.linspace(0.0, 1.0, 201)
    assert np.max(np.abs(solution.bid(SMALL, v) - (1 + v) / 2)) <= 1e-3
    assert solution.diagnostics.closed_form


def test_no_set_aside_matches_three_bidder_closed_form() -> None:
    solution = solve_equilibrium(_model(0.0))
    assert solution.b_low == pytest.approx(1 / 3, abs=1e-4)
    v = np.linspace(0.0, 1.0, 201)
    for bidder in (SMALL, LARGE):
        assert np.max(np.abs(solution.bid(bidder, v) - (v + (1 - v) / 3))) <= 1e-3


def test_no_set_aside_matches_symmetric_solution_for_truncated_normal() -> None:
    F = ValueDistribution.truncated_normal(0.5, 0.3, 0.0, 1.0)
    solution = solve_equilibrium(_model(0.0, F, F))
    v = np.linspace(0.0, 1.0, 41)
    assert np.max(np.abs(solution.bid(SMALL, v) - solve_symmetric(F, 3)(v))) <= 1e-3


def test_partial_set_aside_is_self_consistent() -> None:
    solution = solve_equilibrium(_model(0.5))
    grid, c1, c2 = solution.price_grid, solution.c1, solution.c2
    assert len(grid) == 2001
    assert solution.diagnostics.max_foc_residual <= 1e-5
    assert solution.diagnostics.shooting_iterations <= 30
    assert np.all(np.diff(c1) > 0) and np.all(np.diff(c2) > 0)
    assert np.all(c1 <= grid) and np.all(c2 <= grid)
    assert c1[0] == c2[0] == 0.0
    assert c1[-1] == pytest.approx(1.0, abs=1e-6)
    assert c2[-1] == pytest.approx(1.0, abs=1e-6)


def test_partial_set_aside_passes_best_response_check() -> None:
    gaps = verify_solution(solve_equilibrium(_model(0.5)), n_quantiles=20)
    assert len(gaps) == 40
    assert gaps["gap"].max() <= 0.005


def test_perturbed_solution_fails_best_response_check() -> None:
    solution = perturb(solve_equilibrium(_model(0.5)), 0.05)
    gaps = verify_solution(solution, n_quantiles=20)
    assert gaps.loc[gaps["bidder_type"] == "SMALL", "gap"].max() > 0.01


def test_gap_is_zero_at_top_type() -> None:
    model = _model(0.5)
    solution = solve_equilibrium(model)
    assert best_response_gap(model, solution, 1.0, SMALL) == 0.0
    assert best_response_gap(model, solution, 1.0, LARGE) == 0.0


def test_symmetric_gap_is_small_at_interior_cost() -> None:
    model = _model(0.0)
    assert best_response_gap(model, solve_equilibrium(model), 0.4, SMALL) <= 0.005


def test_grid_residual_is_small_for_the_solution() -> None:
    assert solution_foc_residual(solve_equilibrium(_model(0.5))) <= 1e-4


def test_grid_residual_flags_a_wrong_lowest_bid() -> None:
    solution = solve_equilibrium(_model(0.5))
    shifted = replace(solution, price_grid=solution.price_grid + 0.01, b_low=solution.b_low + 0.01)
    assert solution_foc_residual(shifted) > 1e-3


def test_grid_residual_flags_perturbed_inverse_bids() -> None:
    assert solution_foc_residual(perturb(solve_equilibrium(_model(0.5)), 0.05)) > 1e-3


def test_full_set_aside_residual_uses_grid_slopes() -> None:
    solution = solve_equilibrium(_model(1.0))
    assert solution_foc_residual(solution) <= 1e-6
    assert solution.c1_prime[1000] == pytest.approx(2.0, abs=1e-6)


@pytest.mark.slow
def test_partial_set_aside_solves_within_a_minute() -> None:
    start = time.perf_counter()
    solution = solve_equilibrium.__wrapped__(_model(0.5))
    assert time.perf_counter() - start < 60.0
    assert solution.b_low == pytest.approx(solve_equilibrium(_model(0.5)).b_low, abs=1e-12)


# ── Markup ───────────────────────────────────────────────────────


def test_markup_formula_matches_price_minus_large_inverse_bid() -> None:
    solution = solve_equilibrium(_model(0.5))
    grid = solution.price_grid
    interior = grid[1:-1][grid[1:-1] < solution.p_end]
    for p in interior[::50]:
        expected = p - solution.inverse_bid(LARGE, p)
        assert markup_large(p, solution) == pytest.approx(expected, abs=1e-5)


def test_markup_vanishes_at_top() -> None:
    solution = solve_equilibrium(_model(0.5))
    assert markup_large(1.0, solution) == pytest.approx(0.0, abs=1e-9)


def test_symmetric_markup_at_sixty_cents() -> None:
    assert markup_large(0.6, solve_equilibrium(_model(0.0))) == pytest.approx(0.2, abs=1e-4)


# ── Configuration errors ─────────────────────────────────────────


def test_different_supports_are_unsupported() -> None:
    with pytest.raises(UnsupportedConfigurationError, match="support"):
        solve_equilibrium(_model(0.5, UNIT, ValueDistribution.uniform(0.0, 2.0)))


def test_point_mass_is_unsupported() -> None:
    with pytest.raises(UnsupportedConfigurationError):
        solve_equilibrium(_model(0.5, ValueDistribution.point(0.5), UNIT))


def test_invalid_piecewise_knots_rejected() -> None:
    with pytest.raises(ValueError):
        ValueDistribution.piecewise([(0.0, 0.0), (0.5, 0.7), (0.4, 1.0)])


# ── Distributions and derived outputs ───────────────────────────


@pytest.mark.parametrize(
    "dist",
    [
        UNIT,
        ValueDistribution.truncated_normal(0.5, 0.2, 0.0, 1.0),
        ValueDistribution.piecewise([(0.0, 0.0), (0.3, 0.5), (1.0, 1.0)]),
    ],
)
def test_distribution_cdf_and_density_agree(dist) -> None:
    lo, hi = dist.support
    assert dist.cdf(lo) == pytest.approx(0.0)
    assert dist.cdf(hi) == pytest.approx(1.0)
    mass, _ = quad(dist.pdf, lo, hi, points=[0.3])
    assert mass == pytest.approx(1.0, abs=1e-8)
    assert dist.cdf(dist.ppf(0.25)) == pytest.approx(0.25, abs=1e-9)


def test_point_distribution_samples_its_value() -> None:
    draws = ValueDistribution.point(2.0).sample(np.random.default_rng(0), 3)
    assert draws.tolist() == [2.0, 2.0, 2.0]


def test_expected_bid_under_symmetric_equilibrium() -> None:
    # E[v + (1 - v)/3] for v ~ U(0, 1)
    assert expected_bid(solve_equilibrium(_model(0.0)), SMALL) == pytest.approx(2 / 3, abs=1e-3)


def test_expected_bid_rejects_excluded_large_bidder() -> None:
    with pytest.raises(UnsupportedConfigurationError):
        expected_bid(solve_equilibrium(_model(1.0)), LARGE)


def test_solution_frame_columns() -> None:
    frame = solve_equilibrium(_model(1.0)).to_frame()
    assert list(frame.columns) == ["p", "c1", "c2", "v", "b1_of_c1_grid", "b2_of_c2_grid"]
    assert len(frame) == 2001


def test_comparative_statics_shares_one_grid() -> None:
    frame = comparative_statics(UNIT, UNIT, [0.0, 0.5, 1.0], grid_size=101)
    assert len(frame) == 303
    grids = [g["p"].to_numpy() for _, g in frame.groupby("alpha")]
    assert all(np.array_equal(grids[0], g) for g in grids)
    assert frame.loc[frame["alpha"] == 1.0, "c2"].isna().all()
