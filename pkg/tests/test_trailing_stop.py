"""Trailing-floor sell rule: threshold, value surface, baseline, entry."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixed_stop_references import FIXED_THRESHOLDS
from trailing_references import (
    DRAWDOWN_USED,
    ENTRY_COST_USED,
    ENTRY_THRESHOLD,
    ENTRY_VALUES,
    FLOOR_ONLY_DIAGONAL,
    FLOOR_ONLY_OFFDIAG_2_25,
    PREMIUM_ABOVE_THRESHOLD_22_30,
    PREMIUM_BELOW_THRESHOLD_2_25,
    PREMIUM_DIAG_AT_20,
    PREMIUM_RATIO_AT_20,
    PSI_AT_ENTRY_THRESHOLD,
    PSI_AT_TRAILING_THRESHOLD,
    TRAILING_DIAGONAL,
    TRAILING_THRESHOLD,
    TRAILING_VALUES,
)
from trailstop.diffusion import (
    ExpOrnsteinUhlenbeck,
    build_fundamental_pair,
    linear_reward_transform,
)
from trailstop.errors import DomainError, IllConditionedFloorError
from trailstop.fixed_stop import solve_fixed_stop
from trailstop.trailing_stop import (
    FloorSpec,
    TrailingStopSolution,
    diagonal_by_quadrature,
    solve_trailing_acquisition,
    solve_trailing_stop,
)


@pytest.fixture(scope="module")
def pair():
    return build_fundamental_pair(ExpOrnsteinUhlenbeck(0.6, 1.0, 0.2), q=0.05)


@pytest.fixture(scope="module")
def transform(pair):
    return linear_reward_transform(pair, 0.02)


@pytest.fixture(scope="module")
def sol(transform):
    return solve_trailing_stop(transform, FloorSpec.percentage(DRAWDOWN_USED))


@pytest.fixture(scope="module")
def sol_tight(transform):
    return solve_trailing_stop(
        transform,
        FloorSpec.percentage(DRAWDOWN_USED),
        truncation_tolerance=1e-9,
    )


@pytest.fixture(scope="module")
def acq(sol_tight):
    return solve_trailing_acquisition(sol_tight, ENTRY_COST_USED)


# ----------------------------------------------------------------------
# frozen values
# ----------------------------------------------------------------------

def test_threshold_frozen(sol):
    assert sol.threshold == pytest.approx(TRAILING_THRESHOLD, abs=1e-10)
    assert sol.threshold_transformed == pytest.approx(
        PSI_AT_TRAILING_THRESHOLD, rel=1e-10
    )
    assert not sol.never_liquidate


def test_diagonal_frozen(sol):
    for x_bar, ref in TRAILING_DIAGONAL.items():
        assert sol.diagonal_transformed(x_bar) == pytest.approx(ref, rel=1e-8)


def test_values_frozen(sol):
    for (x, x_bar), ref in TRAILING_VALUES.items():
        assert sol.value(x, x_bar) == pytest.approx(ref, rel=1e-9)


def test_floor_only_diagonal_frozen(pair, sol_tight):
    for x_bar, ref in FLOOR_ONLY_DIAGONAL.items():
        want = ref * math.exp(pair.log_phi_minus(x_bar))
        assert sol_tight.floor_only_value(x_bar, x_bar) == pytest.approx(want, rel=1e-8)


def test_floor_only_offdiag_frozen(sol_tight):
    got = sol_tight.floor_only_value(2.0, 2.5)
    assert got == pytest.approx(FLOOR_ONLY_OFFDIAG_2_25, rel=1e-8)


def test_premiums_frozen(sol_tight):
    below = sol_tight.premium(2.0, 2.5)
    assert below == pytest.approx(PREMIUM_BELOW_THRESHOLD_2_25, rel=1e-8)
    above = sol_tight.premium(2.2, 3.0)
    assert above == pytest.approx(PREMIUM_ABOVE_THRESHOLD_22_30, rel=1e-8)
    diag = sol_tight.premium(20.0, 20.0)
    assert diag == pytest.approx(PREMIUM_DIAG_AT_20, rel=1e-8)
    assert diag / 20.0 == pytest.approx(PREMIUM_RATIO_AT_20, rel=1e-8)


def test_entry_frozen(acq):
    assert not acq.no_entry
    assert acq.entry_threshold == pytest.approx(ENTRY_THRESHOLD, abs=1e-7)
    assert acq.entry_threshold_transformed == pytest.approx(
        PSI_AT_ENTRY_THRESHOLD, rel=1e-6
    )
    for x, ref in ENTRY_VALUES.items():
        assert acq.value(x) == pytest.approx(ref, rel=1e-8)


# ----------------------------------------------------------------------
# threshold search
# ----------------------------------------------------------------------

def test_threshold_between_switch_and_boundary_floor_threshold(transform, sol):
    assert transform.convexity_switch_x < sol.threshold < FIXED_THRESHOLDS[0.0]


def test_floor_at_threshold_below_switch(transform, sol):
    assert sol.clamped_floor(sol.threshold) <= transform.convexity_switch_x


def test_threshold_is_fixed_point_of_frozen_floor_map(transform, sol):
    frozen = solve_fixed_stop(transform, sol.clamped_floor(sol.threshold))
    assert frozen.threshold == pytest.approx(sol.threshold, rel=1e-9)


def test_derivative_secant_gap_changes_sign_at_threshold(pair, transform, sol):
    def gap(m):
        fm = sol.clamped_floor(m)
        z, z_floor = pair.psi(m), pair.psi(fm)
        secant = (
            transform.transformed_at_x(m) - transform.transformed_at_x(fm)
        ) / (z - z_floor)
        return transform.transformed_deriv_at_x(m) - secant

    for m in (2.65, 2.75, 2.85):
        assert gap(m) > 0.0
    for m in (2.92, 3.1, 3.5):
        assert gap(m) < 0.0


def test_threshold_monotone_in_drawdown(transform, sol):
    shallow = solve_trailing_stop(transform, FloorSpec.percentage(0.2))
    assert shallow.threshold < sol.threshold


def test_search_cap_above_threshold_matches(transform, sol):
    capped = solve_trailing_stop(
        transform, FloorSpec.percentage(DRAWDOWN_USED), search_cap=4.0
    )
    assert capped.threshold == pytest.approx(sol.threshold, abs=1e-12)
    huge = solve_trailing_stop(
        transform, FloorSpec.percentage(DRAWDOWN_USED), search_cap=1e9
    )
    assert huge.threshold == pytest.approx(sol.threshold, abs=1e-12)


def test_anchor_choice_does_not_move_threshold(pair, sol):
    other = build_fundamental_pair(pair.model, q=0.05, anchor=1.7)
    transform = linear_reward_transform(other, 0.02)
    moved = solve_trailing_stop(transform, FloorSpec.percentage(DRAWDOWN_USED))
    assert moved.threshold == pytest.approx(sol.threshold, rel=1e-8)
    assert moved.value(2.0, 2.5) == pytest.approx(sol.value(2.0, 2.5), rel=1e-8)


# ----------------------------------------------------------------------
# value surface
# ----------------------------------------------------------------------

def test_diagonal_dominates_immediate_sale(transform, sol):
    for m in np.linspace(1.2, sol.threshold * 0.999, 25):
        gap = sol.diagonal_transformed(float(m)) - transform.transformed_at_x(float(m))
        assert gap >= 0.0
        if m <= 2.6:
            assert gap > 1e-9


def test_diagonal_pastes_onto_reward_at_threshold(transform, sol):
    b = sol.threshold
    assert sol.diagonal_transformed(b) == pytest.approx(
        transform.transformed_at_x(b), rel=1e-12
    )
    assert sol.diagonal_value(b * (1 - 1e-9)) == pytest.approx(
        transform.reward(b), rel=1e-7
    )
    assert sol.diagonal_value(b * (1 + 1e-9)) == pytest.approx(
        transform.reward(b), rel=1e-7
    )


def test_value_at_floor_is_forced_sale(transform, sol):
    for x_bar in (2.0, 2.5, 3.2):
        fm = sol.clamped_floor(x_bar)
        assert sol.value(fm, x_bar) == pytest.approx(transform.reward(fm), rel=1e-12)


def test_value_continuous_approaching_fresh_max(sol):
    for x_bar in (2.0, 2.5):
        chord = sol.value(x_bar * (1 - 1e-10), x_bar)
        assert chord == pytest.approx(sol.diagonal_value(x_bar), rel=1e-8)


def test_value_continuous_across_threshold_max(sol):
    # the probe has to sit above the floor trailing a max at the threshold
    b = sol.threshold
    below = sol.value(2.2, b * (1 - 1e-9))
    above = sol.value(2.2, b * (1 + 1e-9))
    assert below == pytest.approx(above, rel=1e-8)


def test_value_above_threshold_is_frozen_floor_rule(transform, sol):
    frozen = solve_fixed_stop(transform, sol.clamped_floor(3.0))
    for x in (2.2, 2.6, 2.9):
        assert sol.value(x, 3.0) == pytest.approx(frozen.value(x), rel=1e-12)


def test_interpolation_matches_exit_decomposition(pair, transform, sol):
    """Inside the band the value splits across the floor and fresh-max exits."""
    from trailstop.diffusion import two_sided_exit

    for x, x_bar in ((1.8, 2.0), (2.2, 2.5), (1.9, 2.6)):
        fm = sol.clamped_floor(x_bar)
        down, up = two_sided_exit(pair, x, fm, x_bar)
        composed = down * transform.reward(fm) + up * sol.diagonal_value(x_bar)
        assert sol.value(x, x_bar) == pytest.approx(composed, rel=1e-10)


# ----------------------------------------------------------------------
# floor-only baseline and truncation control
# ----------------------------------------------------------------------

def test_baseline_below_value(sol):
    for x, x_bar in ((1.8, 2.0), (2.0, 2.5), (2.5, 2.5), (2.9, 3.4), (20.0, 20.0)):
        assert sol.floor_only_value(x, x_bar) <= sol.value(x, x_bar) + 1e-12


def test_baseline_truncation_bound_is_honest(transform, sol_tight):
    coarse = solve_trailing_stop(
        transform,
        FloorSpec.percentage(DRAWDOWN_USED),
        truncation_tolerance=3e-2,
    )
    for x_bar in (3.0, 5.0):
        bound = coarse.truncation_error_bound(x_bar)
        assert 0.0 < bound <= 3e-2
        diff = abs(
            coarse.floor_only_value(x_bar, x_bar)
            - sol_tight.floor_only_value(x_bar, x_bar)
        )
        assert diff <= bound + 1e-8
    assert sol_tight.truncation_error_bound(5.0) <= 1e-9


def test_upcross_mass_decays(sol):
    masses = [sol.discounted_upcross_mass(2.0, hi) for hi in (2.5, 3.5, 6.0, 12.0)]
    assert all(m2 < m1 for m1, m2 in zip(masses, masses[1:]))
    assert masses[-1] < 1e-8


# ----------------------------------------------------------------------
# premium
# ----------------------------------------------------------------------

def test_premium_is_value_minus_baseline(sol):
    for x, x_bar in ((1.8, 2.0), (2.0, 2.5), (2.5, 2.5), (2.2, 3.0), (3.0, 3.0), (19.0, 20.0)):
        v = sol.value(x, x_bar)
        g = sol.floor_only_value(x, x_bar)
        assert sol.premium(x, x_bar) == pytest.approx(v - g, abs=1e-9 * (1 + abs(v)))


def test_premium_vanishes_at_floor(sol):
    assert sol.premium(sol.clamped_floor(2.5), 2.5) == pytest.approx(0.0, abs=1e-14)


def test_premium_nonnegative_and_continuous_across_threshold(sol):
    b = sol.threshold
    for x_bar in np.linspace(2.0, 4.0, 9):
        x = 0.9 * float(x_bar)
        assert sol.premium(x, float(x_bar)) >= -1e-12
    below = sol.premium(2.2, b * (1 - 1e-9))
    above = sol.premium(2.2, b * (1 + 1e-9))
    assert below == pytest.approx(above, rel=1e-7)


# ----------------------------------------------------------------------
# independent integral route for the diagonal
# ----------------------------------------------------------------------

def test_diagonal_quadrature_route_agrees(sol):
    points = [1.3, 1.9, 2.4, 2.75]
    quad_vals = diagonal_by_quadrature(sol, points)
    for x_bar, qv in zip(points, quad_vals):
        ode = sol.diagonal_transformed(x_bar)
        assert qv == pytest.approx(ode, rel=1e-8)


# ----------------------------------------------------------------------
# never-liquidate regime
# ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def sol_capped(transform):
    return solve_trailing_stop(
        transform, FloorSpec.percentage(DRAWDOWN_USED), search_cap=2.7
    )


def test_capped_search_reports_never_liquidate(sol_capped):
    assert sol_capped.never_liquidate
    assert math.isinf(sol_capped.threshold)


def test_never_liquidate_value_is_baseline(sol_capped):
    for x, x_bar in ((2.0, 2.5), (2.5, 2.5), (3.0, 4.0)):
        assert sol_capped.premium(x, x_bar) == 0.0
        assert sol_capped.value(x, x_bar) == pytest.approx(
            sol_capped.floor_only_value(x, x_bar), rel=1e-12
        )


def test_never_liquidate_entry_rides_to_forced_sale(sol_capped):
    acq = solve_trailing_acquisition(sol_capped, ENTRY_COST_USED)
    assert not acq.no_entry
    assert 0.0 < acq.entry_threshold < 2.7
    assert acq.net_gain(acq.entry_threshold) > 0.0


# ----------------------------------------------------------------------
# entry problem
# ----------------------------------------------------------------------

def test_entry_below_sell_threshold(acq, sol_tight):
    assert acq.entry_threshold < sol_tight.threshold
    assert acq.certificate is not None and acq.certificate.ok
    assert acq.net_gain(acq.entry_threshold) > 0.0


def test_entry_first_order_condition(acq):
    pair = acq.entry_pair
    b = acq.entry_threshold

    def objective(x):
        return acq.net_gain(x) * math.exp(-pair.log_phi_minus(x))

    h = 1e-5
    slope = (objective(b + h) - objective(b - h)) / (2 * h)
    assert abs(slope) <= 1e-6 * (1 + abs(objective(b)))


def test_entry_value_shape(acq):
    pair = acq.entry_pair
    b = acq.entry_threshold
    # enter immediately at or below the threshold
    for x in (1.0, 1.5, b * (1 - 1e-10)):
        assert acq.value(x) == pytest.approx(acq.net_gain(x), rel=1e-9)
    # multiple of the decreasing solution above it
    ratios = [
        acq.value(x) / math.exp(pair.log_phi_minus(x)) for x in (2.1, 2.5, 3.0, 5.0)
    ]
    for r in ratios[1:]:
        assert r == pytest.approx(ratios[0], rel=1e-10)
    assert acq.value(b * (1 + 1e-10)) == pytest.approx(acq.net_gain(b), rel=1e-9)


def test_entry_value_dominates_immediate_entry(acq):
    for x in np.geomspace(0.8, 2.8, 40):
        v = acq.value(float(x))
        assert v >= acq.net_gain(float(x)) - 1e-12
        assert v >= 0.0


def test_no_entry_when_cost_swamps_gain(sol_tight):
    acq = solve_trailing_acquisition(sol_tight, 10.0)
    assert acq.no_entry
    assert acq.value(2.0) == 0.0
    assert math.isnan(acq.entry_threshold)


def test_entry_with_slower_search_rate(pair, sol_tight, acq):
    slow = build_fundamental_pair(pair.model, q=0.03)
    acq_slow = solve_trailing_acquisition(sol_tight, ENTRY_COST_USED, entry_pair=slow)
    assert not acq_slow.no_entry
    assert 0.0 < acq_slow.entry_threshold < sol_tight.threshold
    assert acq_slow.certificate.ok
    assert acq_slow.value(1.0) > 0.0

    b = acq_slow.entry_threshold

    def objective(x):
        return acq_slow.net_gain(x) * math.exp(-slow.log_phi_minus(x))

    h = 1e-5
    slope = (objective(b + h) - objective(b - h)) / (2 * h)
    assert abs(slope) <= 1e-6 * (1 + abs(objective(b)))


def test_entry_validation(pair, sol_tight):
    with pytest.raises(DomainError):
        solve_trailing_acquisition(sol_tight, -0.01)
    fast = build_fundamental_pair(pair.model, q=0.08)
    with pytest.raises(DomainError):
        solve_trailing_acquisition(sol_tight, 0.04, entry_pair=fast)
    other = build_fundamental_pair(ExpOrnsteinUhlenbeck(0.6, 1.0, 0.2), q=0.05)
    with pytest.raises(DomainError):
        solve_trailing_acquisition(sol_tight, 0.04, entry_pair=other)


# ----------------------------------------------------------------------
# validation
# ----------------------------------------------------------------------

def test_floor_spec_validation():
    with pytest.raises(DomainError):
        FloorSpec.percentage(1.2)
    with pytest.raises(DomainError):
        FloorSpec.percentage(0.0)
    with pytest.raises(DomainError):
        FloorSpec.absolute(-0.5)


def test_floor_must_be_a_spec(transform):
    with pytest.raises(DomainError):
        solve_trailing_stop(transform, 0.7)


def test_floor_function_validation(transform):
    with pytest.raises(DomainError):
        solve_trailing_stop(transform, FloorSpec.from_callable(lambda m: m))
    with pytest.raises(DomainError):
        solve_trailing_stop(transform, FloorSpec.from_callable(lambda m: 2.0 - m))


def test_search_cap_validation(transform):
    with pytest.raises(DomainError):
        solve_trailing_stop(
            transform, FloorSpec.percentage(0.3), search_cap=2.0
        )


def test_state_validation(sol):
    with pytest.raises(DomainError):
        sol.value(2.5, 2.0)
    with pytest.raises(DomainError):
        sol.value(1.0, 2.0)
    with pytest.raises(DomainError):
        sol.premium(2.5, 2.0)


def test_tiny_floor_gap_rejected(transform):
    nearly_max = TrailingStopSolution(
        transform=transform,
        floor=FloorSpec.from_callable(lambda m: m * (1.0 - 1e-14)),
        threshold=math.inf,
        threshold_transformed=math.inf,
        never_liquidate=True,
        truncation_tolerance=1e-6,
    )
    with pytest.raises(IllConditionedFloorError):
        nearly_max.advance_hazard(2.0)
    with pytest.raises(IllConditionedFloorError):
        nearly_max.floor_only_value(2.5, 2.5)


# ----------------------------------------------------------------------
# randomized states
# ----------------------------------------------------------------------

@given(
    x_bar=st.floats(min_value=1.05, max_value=3.4),
    frac=st.floats(min_value=0.0, max_value=1.0),
)
@settings(max_examples=20, deadline=None)
def test_random_state_invariants(transform, sol, x_bar, frac):
    fm = sol.clamped_floor(x_bar)
    x = fm + frac * (x_bar - fm)
    v = sol.value(x, x_bar)
    g = sol.floor_only_value(x, x_bar)
    p = sol.premium(x, x_bar)
    assert p >= -1e-10
    assert v >= transform.reward(x) - 1e-9
    assert v >= g - 1e-10 * (1 + abs(v))
    assert p == pytest.approx(v - g, abs=1e-9 * (1 + abs(v)))
    frozen = solve_fixed_stop(transform, fm)
    assert v <= frozen.value(x) + 1e-9 * (1 + abs(v))
