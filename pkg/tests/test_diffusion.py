"""Fundamental pairs, exit transforms, and the reward transform."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reference_values import (
    EXIT_DOWN_2_15_25,
    EXIT_UP_2_15_25,
    EXP_OU_LOG_FUNDAMENTALS,
    EXP_OU_LOG_FUNDAMENTALS_KAPPA_1_7,
    EXP_OU_PSI_DERIV,
    GENERATOR_RESIDUAL_ROOT,
    Z0_AT_DEFAULTS,
    Z1_AT_DEFAULTS,
)
from trailstop.diffusion import (
    ExpOrnsteinUhlenbeck,
    GenericDiffusion,
    build_fundamental_pair,
    build_reward_transform,
    linear_reward_transform,
    passage_down,
    passage_up,
    two_sided_exit,
)
from trailstop.errors import (
    DegenerateIntervalError,
    DomainError,
    UnsupportedModelError,
    UnsupportedRewardError,
)

LAM, THETA, SIGMA, Q, COST = 0.6, 1.0, 0.2, 0.05, 0.02


@pytest.fixture(scope="module")
def pair():
    model = ExpOrnsteinUhlenbeck(lam=LAM, theta=THETA, sigma=SIGMA)
    return build_fundamental_pair(model, q=Q)


@pytest.fixture(scope="module")
def transform(pair):
    return linear_reward_transform(pair, COST)


# ----------------------------------------------------------------------
# closed-form pair against frozen values
# ----------------------------------------------------------------------

def test_log_fundamentals_frozen(pair):
    for x, (lp, lm, lpsi) in EXP_OU_LOG_FUNDAMENTALS.items():
        assert pair.log_phi_plus(x) == pytest.approx(lp, abs=1e-9)
        assert pair.log_phi_minus(x) == pytest.approx(lm, abs=1e-9)
        assert pair.log_psi(x) == pytest.approx(lpsi, abs=1e-9)


def test_normalization_at_anchor(pair):
    k = pair.anchor
    assert pair.phi_plus(k) == pytest.approx(1.0, abs=1e-14)
    assert pair.phi_minus(k) == pytest.approx(1.0, abs=1e-14)
    assert pair.psi(k) == pytest.approx(1.0, abs=1e-14)


def test_alternate_anchor_frozen():
    model = ExpOrnsteinUhlenbeck(lam=LAM, theta=THETA, sigma=SIGMA)
    moved = build_fundamental_pair(model, q=Q, anchor=1.7)
    for x, (lp, lm) in EXP_OU_LOG_FUNDAMENTALS_KAPPA_1_7.items():
        assert moved.log_phi_plus(x) == pytest.approx(lp, abs=1e-9)
        assert moved.log_phi_minus(x) == pytest.approx(lm, abs=1e-9)


def test_anchor_scaling_relation(pair):
    """Moving the anchor rescales psi by a constant and leaves exits alone."""
    model = ExpOrnsteinUhlenbeck(lam=LAM, theta=THETA, sigma=SIGMA)
    moved = build_fundamental_pair(model, q=Q, anchor=1.7)
    ratio = pair.psi(1.7)
    for x in (0.5, 1.3, 2.8, 6.0):
        assert moved.psi(x) * ratio == pytest.approx(pair.psi(x), rel=1e-10)
    for x, y, z in [(2.0, 1.5, 2.5), (1.0, 0.4, 3.0)]:
        a = two_sided_exit(pair, x, y, z)
        b = two_sided_exit(moved, x, y, z)
        assert a[0] == pytest.approx(b[0], rel=1e-10)
        assert a[1] == pytest.approx(b[1], rel=1e-10)


def test_psi_deriv_frozen(pair):
    for x, v in EXP_OU_PSI_DERIV.items():
        assert pair.psi_deriv(x) == pytest.approx(v, rel=1e-9)


def test_psi_deriv_matches_finite_difference(pair):
    for x in (0.8, 1.6, 3.2):
        h = 1e-6 * x
        fd = (pair.psi(x + h) - pair.psi(x - h)) / (2 * h)
        assert pair.psi_deriv(x) == pytest.approx(fd, rel=1e-7)


def test_psi_inverse_round_trip(pair):
    for z in (1e-6, 1e-2, 0.3, 1.0, 6.0, 300.0, 1e5):
        x = pair.psi_inverse(z)
        assert pair.psi(x) == pytest.approx(z, rel=1e-11)


@given(st.floats(min_value=-1.5, max_value=1.5), st.floats(min_value=0.01, max_value=1.0))
@settings(max_examples=25, deadline=None)
def test_psi_strictly_increasing(pair, t, gap):
    x = math.exp(t)
    assert pair.log_psi(x * (1.0 + gap)) > pair.log_psi(x)


# ----------------------------------------------------------------------
# exit transforms
# ----------------------------------------------------------------------

def test_two_sided_exit_frozen(pair):
    down, up = two_sided_exit(pair, 2.0, 1.5, 2.5)
    assert down == pytest.approx(EXIT_DOWN_2_15_25, abs=1e-12)
    assert up == pytest.approx(EXIT_UP_2_15_25, abs=1e-12)


def test_exit_boundary_cases(pair):
    assert two_sided_exit(pair, 1.5, 1.5, 2.5) == (1.0, 0.0)
    assert two_sided_exit(pair, 2.5, 1.5, 2.5) == (0.0, 1.0)
    with pytest.raises(DegenerateIntervalError):
        two_sided_exit(pair, 2.0, 2.0, 2.0)
    with pytest.raises(DomainError):
        two_sided_exit(pair, 3.0, 1.5, 2.5)


def test_exit_strong_markov_identity(pair):
    """One-sided passage splits exactly across an intermediate barrier."""
    for x, y, z in [(2.0, 1.5, 2.5), (1.2, 0.6, 4.0), (2.9, 2.8845, 3.1)]:
        down, up = two_sided_exit(pair, x, y, z)
        lhs = passage_down(pair, x, y)
        rhs = down + up * passage_down(pair, z, y)
        assert lhs == pytest.approx(rhs, rel=1e-12)
        lhs_up = passage_up(pair, x, z)
        rhs_up = up + down * passage_up(pair, y, z)
        assert lhs_up == pytest.approx(rhs_up, rel=1e-12)


def test_exit_wide_interval_stable(pair):
    down, up = two_sided_exit(pair, 2.0, 0.003, 2500.0)
    assert 0.0 <= down <= 1.0 and 0.0 <= up <= 1.0
    assert down + up < 1.0


def test_one_sided_passage_approached_by_widening(pair):
    target = passage_down(pair, 2.0, 1.5)
    down, _ = two_sided_exit(pair, 2.0, 1.5, 60.0)
    assert down == pytest.approx(target, abs=1e-4)
    target_up = passage_up(pair, 2.0, 2.5)
    _, up = two_sided_exit(pair, 2.0, 0.02, 2.5)
    assert up == pytest.approx(target_up, abs=1e-4)


@given(
    st.floats(min_value=0.3, max_value=2.0),
    st.floats(min_value=0.05, max_value=1.0),
    st.floats(min_value=0.05, max_value=3.0),
)
@settings(max_examples=30, deadline=None)
def test_exit_probabilities_bounded(pair, x, dy, dz):
    down, up = two_sided_exit(pair, x, x - dy * x * 0.9, x + dz)
    assert 0.0 <= down <= 1.0
    assert 0.0 <= up <= 1.0
    assert down + up <= 1.0 + 1e-12


# ----------------------------------------------------------------------
# numeric backend
# ----------------------------------------------------------------------

def test_generic_backend_matches_power_solutions():
    """Constant-elasticity drift/vol has phi as plain powers of x."""
    mu_bar, s, q = 0.03, 0.35, 0.07
    model = GenericDiffusion(
        lambda x: mu_bar * x, lambda x: s * x, (0.0, math.inf), anchor=1.0
    )
    numeric = build_fundamental_pair(model, q)
    a, b = 0.5 * s * s, mu_bar - 0.5 * s * s
    disc = math.sqrt(b * b + 4 * a * q)
    g_plus, g_minus = (-b + disc) / (2 * a), (-b - disc) / (2 * a)
    for x in (0.25, 0.5, 1.0, 2.0, 4.0):
        assert numeric.log_phi_plus(x) == pytest.approx(g_plus * math.log(x), abs=1e-8)
        assert numeric.log_phi_minus(x) == pytest.approx(g_minus * math.log(x), abs=1e-8)
        assert numeric.phi_plus_log_deriv(x) == pytest.approx(g_plus / x, rel=1e-7)
        assert numeric.phi_minus_log_deriv(x) == pytest.approx(g_minus / x, rel=1e-7)


def test_generic_backend_matches_closed_form(pair):
    model = GenericDiffusion(
        lambda x: x * (LAM * (THETA - math.log(x)) + 0.5 * SIGMA**2),
        lambda x: SIGMA * x,
        (0.0, math.inf),
        anchor=math.exp(THETA),
    )
    numeric = build_fundamental_pair(model, Q)
    for x in (0.4, 0.8, 1.5, 2.7, 4.5):
        assert numeric.log_phi_plus(x) == pytest.approx(pair.log_phi_plus(x), abs=1e-9)
        assert numeric.log_phi_minus(x) == pytest.approx(pair.log_phi_minus(x), abs=1e-9)
    a = two_sided_exit(pair, 2.0, 1.5, 2.5)
    b = two_sided_exit(numeric, 2.0, 1.5, 2.5)
    assert a == pytest.approx(b, rel=1e-9)


def test_generic_backend_whole_line_martingale_residual():
    """phi from the numeric backend satisfies the defining equation."""
    kap, mean, s, q = 0.8, 0.0, 0.5, 0.06
    model = GenericDiffusion(
        lambda x: kap * (mean - x), lambda x: s, (-math.inf, math.inf), anchor=0.3
    )
    numeric = build_fundamental_pair(model, q)
    for fn in (numeric.phi_plus, numeric.phi_minus):
        for x in (-0.6, -0.1, 0.4, 0.9):
            h = 1e-5 * (1 + abs(x))
            d1 = (fn(x + h) - fn(x - h)) / (2 * h)
            d2 = (fn(x + h) - 2 * fn(x) + fn(x - h)) / (h * h)
            resid = 0.5 * s * s * d2 + kap * (mean - x) * d1 - q * fn(x)
            assert abs(resid) <= 1e-6 * (1.0 + abs(fn(x)))


def test_closed_form_martingale_residual(pair):
    """The log-derivative satisfies the Riccati form of the defining equation.

    The raw solutions span many orders of magnitude, so the check runs on
    m = (log phi)' where 0.5 sigma^2 (m' + m^2) + mu m - q = 0.
    """
    model = pair.model
    for m_fn in (pair.phi_plus_log_deriv, pair.phi_minus_log_deriv):
        for x in (0.5, 1.0, 2.0, 4.0):
            h = 1e-6 * x
            m = m_fn(x)
            mp = (m_fn(x + h) - m_fn(x - h)) / (2 * h)
            resid = 0.5 * float(model.vol(x)) ** 2 * (mp + m * m) + float(model.drift(x)) * m - Q
            assert abs(resid) <= 1e-6 * (1.0 + abs(m))


def test_generic_backend_rejects_non_natural():
    with pytest.raises(UnsupportedModelError):
        GenericDiffusion(
            lambda x: 0.0, lambda x: 1.0, (0.0, 1.0), anchor=0.5, natural_boundaries=False
        )


# ----------------------------------------------------------------------
# reward transform
# ----------------------------------------------------------------------

def test_convexity_switch_frozen(transform):
    assert transform.convexity_switch_x == pytest.approx(GENERATOR_RESIDUAL_ROOT, abs=1e-10)
    assert transform.convexity_switch_z == pytest.approx(Z0_AT_DEFAULTS, abs=1e-10)


def test_sign_change_frozen(transform):
    assert transform.sign_change_z == pytest.approx(Z1_AT_DEFAULTS, rel=1e-10)
    assert transform.sign_change_z < transform.convexity_switch_z


def test_slope_at_infinity_vanishes(transform):
    assert abs(transform.slope_at_infinity) < 1e-8


def test_assumption_report_clean(transform):
    rep = transform.assumption_report
    assert rep.vanishes_at_zero and rep.single_convexity_switch
    assert rep.sign_change_below_switch and rep.slope_gap_positive


def test_transformed_vanishes_at_left_boundary(pair, transform):
    values = [abs(transform.transformed_at_x(x)) for x in (0.2, 0.1, 0.05, 0.02)]
    assert values == sorted(values, reverse=True)
    assert values[-1] < 1e-60


def test_transformed_consistency(pair, transform):
    for z in (0.3, 0.9, 1.4, 3.0):
        x = pair.psi_inverse(z)
        direct = transform.transformed_at_x(x)
        assert transform.transformed(z) == pytest.approx(direct, rel=1e-11)
        h = transform.reward(x)
        assert direct == pytest.approx(h / pair.phi_minus(x), rel=1e-11)


def test_transformed_derivative_routes_agree(pair, transform):
    for z in (0.4, 0.9474, 1.5, 2.5):
        x = pair.psi_inverse(z)
        analytic = transform.transformed_deriv_at_x(x)
        step = 1e-6 * (1 + z)
        central = (transform.transformed(z + step) - transform.transformed(z - step)) / (2 * step)
        assert analytic == pytest.approx(central, rel=1e-6)
        assert transform.left_deriv(z) == pytest.approx(analytic, rel=1e-4)
        assert transform.right_deriv(z) == pytest.approx(analytic, rel=1e-4)


def test_transform_scales_linearly(pair, transform):
    doubled = build_reward_transform(
        pair, lambda x: 2.0 * (x - COST), reward_deriv=lambda x: 2.0
    )
    for z in (0.5, 1.0, 2.0):
        assert doubled.transformed(z) == pytest.approx(2.0 * transform.transformed(z), rel=1e-10)


def test_convexity_split_in_second_differences(pair, transform):
    z0 = transform.convexity_switch_z
    zs = np.linspace(0.05, 3.5, 240)
    hs = np.array([transform.transformed(float(z)) for z in zs])
    d2 = (hs[2:] - 2 * hs[1:-1] + hs[:-2]) / (zs[1] - zs[0]) ** 2
    mid = zs[1:-1]
    tol = 1e-6 * np.max(np.abs(hs))
    assert np.all(d2[mid < z0 - 0.02] >= -tol)
    assert np.all(d2[mid > z0 + 0.02] <= tol)


def test_multiple_residual_crossings_rejected(pair):
    with pytest.raises(UnsupportedRewardError):
        build_reward_transform(
            pair,
            lambda x: x - COST,
            generator_residual=lambda x: math.sin(5.0 * x),
        )


# ----------------------------------------------------------------------
# validation
# ----------------------------------------------------------------------

def test_domain_errors(pair):
    with pytest.raises(DomainError):
        pair.log_phi_plus(-1.0)
    with pytest.raises(DomainError):
        pair.log_phi_plus(0.0)
    with pytest.raises(DomainError):
        pair.psi_inverse(-2.0)
    with pytest.raises(DomainError):
        ExpOrnsteinUhlenbeck(lam=-0.1, theta=1.0, sigma=0.2)
    with pytest.raises(DomainError):
        build_fundamental_pair(ExpOrnsteinUhlenbeck(0.6, 1.0, 0.2), q=0.0)
    with pytest.raises(DomainError):
        GenericDiffusion(lambda x: 0.0, lambda x: 1.0, (0.0, 1.0), anchor=2.0)
