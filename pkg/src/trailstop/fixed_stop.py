"""Optimal liquidation above a fixed floor, plus the paired entry problem.

The sell rule for a floor y is a single threshold b(y): liquidate at the
first time the price reaches b(y) from below, or falls to the floor.  In
the transformed coordinate the value function is the smallest concave
majorant of H that is pinned at psi(y); its straight segment ends at the
point where the secant from psi(y) attains the largest slope, which is
found here twice over (secant maximization and the smooth-pasting root)
and cross-checked.

The entry problem buys one unit at cost h(x) + entry_cost and then runs
the sell rule.  Its optimal region is a closed price window strictly
inside (y, b(y)), obtained from two more one-dimensional maximizations in
the entry-rate coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import _search
from .diffusion import FundamentalPair, RewardTransform
from .errors import (
    AssumptionError,
    DomainError,
    NumericFailureError,
)

_ROUTE_AGREEMENT_TOL = 1e-8


@dataclass
class FixedStopSolution:
    """Threshold rule and value function for one floor."""

    transform: RewardTransform
    floor: float
    floor_transformed: float
    threshold: float
    threshold_transformed: float
    secant_slope: float
    floor_value_transformed: float
    degenerate: bool

    @property
    def pair(self) -> FundamentalPair:
        return self.transform.pair

    def _boundary_floor(self) -> bool:
        return self.floor <= self.pair.interval[0]

    def value(self, x: float) -> float:
        """Expected discounted reward of the threshold rule started at x."""
        pair = self.pair
        pair._check_interior(x)
        if self.degenerate or x >= self.threshold:
            return self.transform.reward(x)
        if not self._boundary_floor() and x <= self.floor:
            return self.transform.reward(x)
        line = self.floor_value_transformed + self.secant_slope * (
            pair.psi(x) - self.floor_transformed
        )
        return math.exp(pair.log_phi_minus(x)) * line

    def transformed_majorant(self, z: float) -> float:
        """The concave majorant of H pinned at the floor, in the stop coordinate."""
        if z <= 0:
            raise DomainError(f"the transformed coordinate is positive, got {z}")
        if self.degenerate or z >= self.threshold_transformed:
            return self.transform.transformed(z)
        if not self._boundary_floor() and z <= self.floor_transformed:
            return self.transform.transformed(z)
        return self.floor_value_transformed + self.secant_slope * (z - self.floor_transformed)

    def premium(self, x: float) -> float:
        """Value of the threshold rule over simply waiting for the floor.

        Defined for interior floors and x at or above the floor.
        """
        if self._boundary_floor():
            raise DomainError("the premium needs an interior floor")
        if x < self.floor:
            raise DomainError(f"start {x} lies below the floor {self.floor}")
        pair = self.pair
        pair._check_interior(x)
        if not self.degenerate and x < self.threshold:
            h_gap = self.transform.transformed_at_x(self.threshold) - self.transform.transformed_at_x(self.floor)
            weight = (pair.psi(x) - self.floor_transformed) / (
                self.threshold_transformed - self.floor_transformed
            )
            return math.exp(pair.log_phi_minus(x)) * h_gap * weight
        discount = math.exp(pair.log_phi_minus(x) - pair.log_phi_minus(self.floor))
        return self.transform.reward(x) - self.transform.reward(self.floor) * discount


def solve_fixed_stop(transform: RewardTransform, floor: Optional[float] = None) -> FixedStopSolution:
    """Optimal sell threshold above a fixed floor.

    floor = None (or the left endpoint itself) puts the floor at the
    boundary, i.e. the stop constraint never binds.
    """
    pair = transform.pair
    l, r = pair.interval
    if floor is None:
        floor = l
    if not (l <= floor < r):
        raise DomainError(f"floor {floor} outside [{l}, {r})")

    if floor <= l:
        z_floor, h_floor = 0.0, 0.0
    else:
        z_floor = pair.psi(floor)
        h_floor = transform.transformed_at_x(floor)

    z_switch = transform.convexity_switch_z
    if z_floor >= z_switch:
        return FixedStopSolution(
            transform=transform,
            floor=floor,
            floor_transformed=z_floor,
            threshold=floor,
            threshold_transformed=z_floor,
            secant_slope=0.0,
            floor_value_transformed=h_floor,
            degenerate=True,
        )

    x_switch = transform.convexity_switch_x

    def secant(x: float) -> float:
        return (transform.transformed_at_x(x) - h_floor) / (pair.psi(x) - z_floor)

    lo = x_switch * (1.0 + 1e-9) if x_switch > 0 else x_switch + 1e-9
    hi0 = x_switch * 8.0 if x_switch > 0 else x_switch + 8.0
    peak, peak_val = _search.max_with_expansion(
        secant, lo, hi0, what="secant slope of the transformed reward"
    )
    vertex = _search.parabolic_refine(secant, peak, 1e-5 * (1.0 + abs(peak)))
    if vertex is not None:
        b_secant = vertex
    else:
        b_secant = _search.leftmost_within(secant, lo, peak, _search.plateau_level(peak_val))

    # smooth pasting: first downcrossing of H'(z) through the secant slope
    def pasting_gap(x: float) -> float:
        return transform.transformed_deriv_at_x(x) - secant(x)

    b_paste = _smallest_downcrossing(pasting_gap, lo, peak, b_secant)

    z_secant, z_paste = pair.psi(b_secant), pair.psi(b_paste)
    if abs(z_secant - z_paste) > _ROUTE_AGREEMENT_TOL * (1.0 + abs(z_paste)):
        raise NumericFailureError(
            "secant-maximization and smooth-pasting routes disagree on the "
            f"sell threshold: {b_secant} vs {b_paste}"
        )

    threshold = b_paste
    z_b = pair.psi(threshold)
    slope = (transform.transformed_at_x(threshold) - h_floor) / (z_b - z_floor)
    return FixedStopSolution(
        transform=transform,
        floor=floor,
        floor_transformed=z_floor,
        threshold=threshold,
        threshold_transformed=z_b,
        secant_slope=slope,
        floor_value_transformed=h_floor,
        degenerate=False,
    )


def _smallest_downcrossing(fn, lo: float, peak: float, fallback: float) -> float:
    """First sign change of fn from + to - on (lo, ~peak*1.5)."""
    hi = peak * 1.5 if peak > 0 else peak + 1.0
    grid = _search.geometric_or_linear(lo, hi, 257)
    prev_x, prev_v = None, None
    for g in grid:
        v = fn(float(g))
        if prev_v is not None and prev_v > 0.0 >= v:
            return brentq(fn, prev_x, float(g), xtol=1e-13)
        prev_x, prev_v = float(g), v
    # the crossing can hide between grid nodes straddling a very sharp peak
    return fallback


# ----------------------------------------------------------------------
# entry problem
# ----------------------------------------------------------------------

@dataclass
class ShapeCertificate:
    """Numeric record of the concave-to-convex switch of the entry objective."""

    ok: bool
    switch_location: float
    detail: str


@dataclass
class FixedAcquisitionSolution:
    """Optimal buy window feeding the fixed-floor sell rule."""

    liquidation: FixedStopSolution
    entry_pair: FundamentalPair
    entry_cost: float
    no_entry: bool
    entry_lower: float
    entry_upper: float
    entry_lower_transformed: float
    entry_upper_transformed: float
    certificate: Optional[ShapeCertificate]

    def net_gain(self, x: float) -> float:
        """Sell-rule value minus purchase price minus the entry cost."""
        return self.liquidation.value(x) - self.liquidation.transform.reward(x) - self.entry_cost

    def value(self, x: float) -> float:
        """Expected discounted net gain of the optimal entry rule."""
        pair = self.entry_pair
        pair._check_interior(x)
        if self.no_entry:
            return 0.0
        if x < self.entry_lower:
            scale = math.exp(pair.log_phi_plus(x) - pair.log_phi_plus(self.entry_lower))
            return self.net_gain(self.entry_lower) * scale
        if x > self.entry_upper:
            scale = math.exp(pair.log_phi_minus(x) - pair.log_phi_minus(self.entry_upper))
            return self.net_gain(self.entry_upper) * scale
        return self.net_gain(x)


def solve_fixed_acquisition(
    liquidation: FixedStopSolution,
    entry_cost: float,
    entry_pair: Optional[FundamentalPair] = None,
) -> FixedAcquisitionSolution:
    """Optimal entry window for buying into the fixed-floor sell rule.

    entry_pair discounts the search phase; it defaults to the sell-side
    pair and may use a lower rate, never a higher one.
    """
    sell_pair = liquidation.pair
    if entry_pair is None:
        entry_pair = sell_pair
    if entry_pair.model is not sell_pair.model:
        raise DomainError("entry and sell phases must share one model")
    if entry_pair.q > sell_pair.q + 1e-15:
        raise DomainError(
            f"entry rate {entry_pair.q} must not exceed the sell rate {sell_pair.q}"
        )
    if entry_cost < 0:
        raise DomainError(f"entry cost must be nonnegative, got {entry_cost}")

    if liquidation.degenerate:
        return _no_entry_solution(liquidation, entry_pair, entry_cost)

    def net(x: float) -> float:
        return liquidation.value(x) - liquidation.transform.reward(x) - entry_cost

    def k_of(x: float) -> float:
        return net(x) * math.exp(-entry_pair.log_phi_minus(x))

    l = sell_pair.interval[0]
    region_lo = liquidation.floor if liquidation.floor > l else min(
        0.05 * liquidation.threshold, sell_pair.anchor * 0.05
    )
    region_hi = liquidation.threshold
    lo = region_lo + 1e-9 * (region_hi - region_lo)
    hi = region_hi - 1e-9 * (region_hi - region_lo)

    grid = _search.geometric_or_linear(lo, hi, 300)
    x_upper, k_peak, _ = _search.refined_max(k_of, grid, side="right")
    if k_peak <= 0.0:
        return _no_entry_solution(liquidation, entry_pair, entry_cost)

    def ratio(x: float) -> float:
        return k_of(x) / entry_pair.psi(x)

    grid_lo = _search.geometric_or_linear(lo, x_upper, 300)
    x_lower, _, _ = _search.refined_max(ratio, grid_lo, side="left")

    if not (liquidation.floor <= x_lower <= x_upper < liquidation.threshold):
        raise NumericFailureError(
            f"entry window [{x_lower}, {x_upper}] escaped the continuation "
            f"region ({liquidation.floor}, {liquidation.threshold})"
        )

    certificate = _concavity_switch_certificate(k_of, entry_pair, lo, hi)
    if not certificate.ok:
        raise AssumptionError(
            "single concave-to-convex switch of the entry objective",
            certificate.detail,
        )

    return FixedAcquisitionSolution(
        liquidation=liquidation,
        entry_pair=entry_pair,
        entry_cost=entry_cost,
        no_entry=False,
        entry_lower=x_lower,
        entry_upper=x_upper,
        entry_lower_transformed=entry_pair.psi(x_lower),
        entry_upper_transformed=entry_pair.psi(x_upper),
        certificate=certificate,
    )


def _no_entry_solution(liquidation, entry_pair, entry_cost) -> FixedAcquisitionSolution:
    return FixedAcquisitionSolution(
        liquidation=liquidation,
        entry_pair=entry_pair,
        entry_cost=entry_cost,
        no_entry=True,
        entry_lower=math.nan,
        entry_upper=math.nan,
        entry_lower_transformed=math.nan,
        entry_upper_transformed=math.nan,
        certificate=None,
    )


def _concavity_switch_certificate(k_of, entry_pair, lo: float, hi: float) -> ShapeCertificate:
    xs = _search.geometric_or_linear(lo, hi, 200)
    zs = np.array([entry_pair.psi(float(x)) for x in xs])
    ks = np.array([k_of(float(x)) for x in xs])
    # scale both axes to order one so a steep psi cannot overflow the
    # divided differences; positive rescaling preserves curvature signs.
    # points whose transformed coordinate collapses below double resolution
    # cannot support a curvature claim, so the certificate covers z down to
    # 1e-13 of the range and treats anything deeper as numerically flat
    z_scale = float(np.max(zs))
    k_scale = float(np.max(np.abs(ks))) or 1.0
    resolvable = zs >= 1e-13 * z_scale
    zs_r = zs[resolvable]
    u = zs_r / z_scale
    w = ks[resolvable] / k_scale
    u0, u1, u2 = u[:-2], u[1:-1], u[2:]
    w0, w1, w2 = w[:-2], w[1:-1], w[2:]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        d2 = 2.0 * (
            w0 / ((u1 - u0) * (u2 - u0))
            - w1 / ((u1 - u0) * (u2 - u1))
            + w2 / ((u2 - u1) * (u2 - u0))
        )
    good = np.isfinite(d2)
    d2 = d2[good]
    mid_z = zs_r[1:-1][good]
    tol = 1e-8
    signs = np.where(d2 > tol, 1, np.where(d2 < -tol, -1, 0))
    nonzero = signs[signs != 0]
    switches = int(np.sum(np.diff(nonzero) != 0))
    if len(nonzero) == 0:
        return ShapeCertificate(True, float(zs_r[0]), "objective numerically affine")
    if switches == 0 and nonzero[0] == -1:
        return ShapeCertificate(True, float(zs_r[-1]), "concave throughout, switch at the far edge")
    if switches == 1 and nonzero[0] == -1 and nonzero[-1] == 1:
        first_pos = int(np.nonzero(signs == 1)[0][0])
        return ShapeCertificate(True, float(mid_z[first_pos]), "")
    return ShapeCertificate(
        False,
        math.nan,
        f"curvature sign pattern has {switches} switches starting {nonzero[0]}",
    )
