"""Sell rules with a floor that trails the running maximum.

The floor is a function of the running max, so the state is the pair
(price, max).  On the diagonal the transformed value solves a first-order
linear recursion driven by the hazard of the max advancing before the floor
is hit; off the diagonal everything reduces to two-sided exit weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from . import _search
from .diffusion import FundamentalPair, RewardTransform
from .errors import (
    AssumptionError,
    DomainError,
    IllConditionedFloorError,
    NumericFailureError,
)
from .fixed_stop import (
    FixedStopSolution,
    ShapeCertificate,
    _concavity_switch_certificate,
    solve_fixed_stop,
)

_ROUTE_AGREEMENT_TOL = 1e-8
_FLOOR_GAP_TOL = 1e-12
_MASS_CAP = 5e-3


def _scaled(log_factor: float, value: float) -> float:
    """value * exp(log_factor) without overflowing on the way."""
    if value == 0.0:
        return 0.0
    return math.copysign(math.exp(log_factor + math.log(abs(value))), value)


class FloorSpec:
    """Floor level as a function of the running maximum."""

    def __init__(self, fn: Callable[[float], float], description: str):
        self._fn = fn
        self.description = description

    @classmethod
    def percentage(cls, drawdown: float) -> "FloorSpec":
        """Floor a fixed fraction below the max: floor = (1 - drawdown) * max."""
        if not 0.0 < drawdown < 1.0:
            raise DomainError(f"drawdown fraction must lie in (0, 1), got {drawdown}")
        keep = 1.0 - drawdown
        return cls(lambda m: keep * m, f"percentage drawdown {drawdown}")

    @classmethod
    def absolute(cls, gap: float) -> "FloorSpec":
        """Floor a fixed distance below the max: floor = max - gap."""
        if not gap > 0.0:
            raise DomainError(f"floor gap must be positive, got {gap}")
        return cls(lambda m: m - gap, f"absolute gap {gap}")

    @classmethod
    def from_callable(cls, fn: Callable[[float], float]) -> "FloorSpec":
        return cls(fn, "custom floor")

    def __call__(self, m: float) -> float:
        return self._fn(m)

    def __repr__(self) -> str:
        return f"FloorSpec({self.description})"


@dataclass
class TrailingStopSolution:
    """Sell threshold and value surface for one trailing floor."""

    transform: RewardTransform
    floor: FloorSpec
    threshold: float
    threshold_transformed: float
    never_liquidate: bool
    truncation_tolerance: float
    _diag_sol: object = field(default=None, init=False, repr=False)
    _diag_lo: float = field(default=math.inf, init=False, repr=False)
    _exit_sol: object = field(default=None, init=False, repr=False)
    _exit_lo: float = field(default=math.inf, init=False, repr=False)
    _exit_query_lo: float = field(default=math.inf, init=False, repr=False)
    _exit_trunc: float = field(default=-math.inf, init=False, repr=False)
    _exit_query_hi: float = field(default=-math.inf, init=False, repr=False)
    _fixed_cache: dict = field(default_factory=dict, init=False, repr=False)

    @property
    def pair(self) -> FundamentalPair:
        return self.transform.pair

    # -- floor geometry ---------------------------------------------------

    def clamped_floor(self, m: float) -> float:
        """Floor level below max m, clamped to the closure of the interval."""
        fm = self.floor(m)
        if fm >= m:
            raise DomainError(
                f"floor {fm} does not sit strictly below the running max {m}"
            )
        return max(fm, self.pair.interval[0])

    def _floor_pieces(self, m: float) -> tuple[float, float, float]:
        """(floor, psi at floor, transformed reward at floor)."""
        fm = self.clamped_floor(m)
        if fm <= self.pair.interval[0]:
            return fm, 0.0, 0.0
        return fm, self.pair.psi(fm), self.transform.transformed_at_x(fm)

    def advance_hazard(self, m: float) -> float:
        """Rate, per unit of max level, of the max advancing before a floor hit."""
        fm = self.clamped_floor(m)
        if fm <= self.pair.interval[0]:
            gap = 1.0
        else:
            gap = -math.expm1(min(self.pair.log_psi(fm) - self.pair.log_psi(m), 0.0))
            if gap < _FLOOR_GAP_TOL:
                raise IllConditionedFloorError(
                    f"floor {fm} is too close to the max {m} to resolve"
                )
        return self.pair.psi_log_deriv(m) / gap

    def _hazard_integral(self, m_lo: float, m_hi: float) -> float:
        val, _ = quad(self.advance_hazard, m_lo, m_hi, limit=300, epsabs=1e-12, epsrel=1e-11)
        return val

    def discounted_upcross_mass(self, m_lo: float, m_hi: float) -> float:
        """Expected discount collected on reaching m_hi before the trailing floor."""
        pair = self.pair
        log_mass = (
            pair.log_phi_minus(m_lo) - pair.log_phi_minus(m_hi)
            - self._hazard_integral(m_lo, m_hi)
        )
        return math.exp(log_mass)

    # -- diagonal recursion -------------------------------------------------

    def _recursion_rhs(self, m: float, vals: np.ndarray) -> list[float]:
        _, _, h_floor = self._floor_pieces(m)
        return [self.advance_hazard(m) * (vals[0] - h_floor)]

    def _extend_left(self, target: float) -> float:
        l = self.pair.interval[0]
        ref = self.threshold if math.isfinite(self.threshold) else self.pair.anchor
        if math.isinf(l) or l < 0.0:
            return target - 0.05 * (ref - target) - 1e-6
        return max(l + (target - l) * 1e-9, target - 0.1 * (target - l))

    def _solve_recursion(self, start: float, start_val: float, lo: float, atol: float):
        # atol=0 keeps the error control relative, which the huge dynamic
        # range of the decaying solution needs; the terminal value must then
        # be nonzero.
        sol = solve_ivp(
            self._recursion_rhs,
            (start, lo),
            [start_val],
            method="DOP853",
            dense_output=True,
            rtol=1e-11,
            atol=atol,
        )
        if not sol.success:
            raise NumericFailureError(f"diagonal recursion failed: {sol.message}")
        return sol.sol

    def _ensure_diagonal(self, x_bar: float) -> None:
        if self._diag_sol is not None and x_bar >= self._diag_lo:
            return
        lo = self._extend_left(x_bar)
        start_val = self.transform.transformed_at_x(self.threshold)
        self._diag_sol = self._solve_recursion(self.threshold, start_val, lo, atol=0.0)
        self._diag_lo = lo

    def diagonal_transformed(self, x_bar: float) -> float:
        """Transformed value at a fresh maximum (price equal to the max)."""
        self.pair._check_interior(x_bar)
        if self.never_liquidate:
            return self._floor_exit_transformed(x_bar)
        if x_bar >= self.threshold:
            return self.transform.transformed_at_x(x_bar)
        self._ensure_diagonal(x_bar)
        return float(self._diag_sol(x_bar)[0])

    def diagonal_value(self, x_bar: float) -> float:
        """Value at a fresh maximum, in reward units."""
        if not self.never_liquidate and x_bar >= self.threshold:
            self.pair._check_interior(x_bar)
            return self.transform.reward(x_bar)
        return _scaled(self.pair.log_phi_minus(x_bar), self.diagonal_transformed(x_bar))

    # -- floor-only baseline ------------------------------------------------

    def _pick_truncation(self, query_hi: float) -> float:
        ref = self.threshold if math.isfinite(self.threshold) else self.pair.anchor
        cand = max(1.5 * query_hi, 1.5 * ref, self._exit_trunc)
        geometric = self.pair.interval[0] >= 0.0
        for _ in range(40):
            mass = self.discounted_upcross_mass(query_hi, cand)
            bound = mass * abs(self.transform.reward(cand))
            if mass <= _MASS_CAP and bound <= self.truncation_tolerance:
                return cand
            cand = cand * 1.4 if geometric else cand + max(1.0, 0.4 * (cand - query_hi))
        raise NumericFailureError(
            "could not find a truncation level with negligible upcrossing mass"
        )

    def _ensure_floor_exit(self, lo_needed: float, hi_needed: float) -> None:
        covered = (
            self._exit_sol is not None
            and lo_needed >= self._exit_lo
            and hi_needed <= self._exit_query_hi
        )
        self._exit_query_lo = min(self._exit_query_lo, lo_needed)
        if covered:
            return
        query_hi = max(hi_needed, self._exit_query_hi)
        if self._exit_sol is not None and query_hi > self._exit_query_hi:
            # grow geometrically so an ascending sweep rebuilds O(log) times
            query_hi = max(query_hi, 1.4 * self._exit_query_hi)
        trunc = self._pick_truncation(query_hi)
        lo = self._extend_left(self._exit_query_lo)
        _, _, h_floor = self._floor_pieces(trunc)
        hazard = self.advance_hazard(trunc)
        step = 1e-3 / hazard
        seed = h_floor * -math.expm1(-hazard * step)
        if seed != 0.0:
            # one frozen-coefficient step inward gives a nonzero terminal,
            # so the integration can run under purely relative control
            self._exit_sol = self._solve_recursion(trunc - step, seed, lo, atol=0.0)
        else:
            self._exit_sol = self._solve_recursion(trunc, 0.0, lo, atol=1e-14)
        self._exit_lo = lo
        self._exit_trunc = trunc
        self._exit_query_hi = query_hi

    def _floor_exit_transformed(self, x_bar: float) -> float:
        self._ensure_floor_exit(x_bar, x_bar)
        return float(self._exit_sol(x_bar)[0])

    def truncation_error_bound(self, x_bar: float) -> float:
        """Bound on the baseline's truncation error at max level x_bar."""
        self._ensure_floor_exit(x_bar, x_bar)
        mass = self.discounted_upcross_mass(x_bar, self._exit_trunc)
        return mass * abs(self.transform.reward(self._exit_trunc))

    def floor_only_value(self, x: float, x_bar: float) -> float:
        """Expected discounted reward of waiting for the floor, never selling early."""
        x, x_bar = self._check_state(x, x_bar)
        g_bar = self._floor_exit_transformed(x_bar)
        if x == x_bar:
            return _scaled(self.pair.log_phi_minus(x_bar), g_bar)
        return self._two_sided_split(x, x_bar, g_bar)

    # -- value surface --------------------------------------------------------

    def _check_state(self, x: float, x_bar: float) -> tuple[float, float]:
        pair = self.pair
        pair._check_interior(x_bar)
        pair._check_interior(x)
        slack = 1e-12 * (1.0 + abs(x_bar))
        if x > x_bar + slack:
            raise DomainError(f"start {x} exceeds its running max {x_bar}")
        fm = self.clamped_floor(x_bar)
        if fm > pair.interval[0] and x < fm - slack:
            raise DomainError(
                f"start {x} lies below the trailing floor {fm}; the rule has stopped"
            )
        return min(max(x, fm), x_bar), x_bar

    def _two_sided_split(self, x: float, x_bar: float, diag_transformed: float) -> float:
        """Weight the floor payoff against the diagonal payoff from inside."""
        pair = self.pair
        fm, z_floor, _ = self._floor_pieces(x_bar)
        z, z_bar = pair.psi(x), pair.psi(x_bar)
        w1 = (z_bar - z) / (z_bar - z_floor)
        w2 = 1.0 - w1
        log_phi_x = pair.log_phi_minus(x)
        if fm <= pair.interval[0]:
            floor_part = 0.0
        else:
            floor_part = w1 * _scaled(
                log_phi_x - pair.log_phi_minus(fm), self.transform.reward(fm)
            )
        return floor_part + w2 * _scaled(log_phi_x, diag_transformed)

    def _fixed_at(self, x_bar: float) -> FixedStopSolution:
        """Fixed-floor solution once the max has frozen the floor at f(x_bar)."""
        fm = self.clamped_floor(x_bar)
        if fm not in self._fixed_cache:
            floor_arg = None if fm <= self.pair.interval[0] else fm
            self._fixed_cache[fm] = solve_fixed_stop(self.transform, floor_arg)
        return self._fixed_cache[fm]

    def value(self, x: float, x_bar: float) -> float:
        """Value of the optimal sell rule under the trailing floor at (x, max)."""
        x, x_bar = self._check_state(x, x_bar)
        if self.never_liquidate:
            return self.floor_only_value(x, x_bar)
        if x_bar >= self.threshold:
            return self._fixed_at(x_bar).value(x)
        if x == x_bar:
            return self.diagonal_value(x_bar)
        return self._two_sided_split(x, x_bar, self.diagonal_transformed(x_bar))

    def premium(self, x: float, x_bar: float) -> float:
        """Value of the sell option over waiting for the floor, at (x, max)."""
        x, x_bar = self._check_state(x, x_bar)
        if self.never_liquidate:
            return 0.0
        pair = self.pair
        if x_bar < self.threshold:
            b = self.threshold
            _, z_floor, _ = self._floor_pieces(x_bar)
            z, z_bar = pair.psi(x), pair.psi(x_bar)
            w2 = (z - z_floor) / (z_bar - z_floor)
            g_at_b = _scaled(pair.log_phi_minus(b), self._floor_exit_transformed(b))
            log_discount = (
                pair.log_phi_minus(x) - pair.log_phi_minus(b)
                - self._hazard_integral(x_bar, b)
            )
            return w2 * _scaled(log_discount, self.transform.reward(b) - g_at_b)
        frozen = self._fixed_at(x_bar)
        if not frozen.degenerate and x < frozen.threshold:
            b = frozen.threshold
            _, z_floor, _ = self._floor_pieces(x_bar)
            weight = (pair.psi(x) - z_floor) / (pair.psi(b) - z_floor)
            gap = self.transform.reward(b) - self.floor_only_value(b, x_bar)
            return weight * _scaled(pair.log_phi_minus(x) - pair.log_phi_minus(b), gap)
        return self.transform.reward(x) - self.floor_only_value(x, x_bar)


def _validate_floor(pair: FundamentalPair, floor: FloorSpec) -> None:
    l, r = pair.interval
    if l == 0.0 and math.isinf(r):
        probes = np.geomspace(pair.anchor / 64.0, pair.anchor * 64.0, 33)
    elif math.isfinite(l) and math.isfinite(r):
        inset = 1e-6 * (r - l)
        probes = np.linspace(l + inset, r - inset, 33)
    else:
        probes = np.linspace(pair.anchor - 20.0, pair.anchor + 20.0, 33)
        probes = probes[(probes > l) & (probes < r)]
    prev = -math.inf
    for m in probes:
        fm = floor(float(m))
        if not fm < m:
            raise DomainError(
                f"floor must sit strictly below the running max; got floor({m}) = {fm}"
            )
        if fm >= r:
            raise DomainError(f"floor({m}) = {fm} escapes the state interval")
        if fm < prev - 1e-12 * (1.0 + abs(fm)):
            raise DomainError("floor must be non-decreasing in the running max")
        prev = fm


def solve_trailing_stop(
    transform: RewardTransform,
    floor: FloorSpec,
    *,
    search_cap: Optional[float] = None,
    truncation_tolerance: float = 1e-6,
) -> TrailingStopSolution:
    """Optimal sell threshold on the running max under a trailing floor.

    The threshold is the root of the gap between the transformed reward's
    derivative and its secant back to the floor; it is cross-checked against
    the fixed point of the frozen-floor threshold map.  search_cap limits how
    far the search may look; with no sign change up to the cap the result is
    flagged never_liquidate.
    """
    if not isinstance(floor, FloorSpec):
        raise DomainError("floor must be a FloorSpec")
    pair = transform.pair
    _validate_floor(pair, floor)
    l, r = pair.interval

    def floor_pieces(m: float) -> tuple[float, float]:
        fm = max(floor(m), l)
        if fm <= l:
            return 0.0, 0.0
        return pair.psi(fm), transform.transformed_at_x(fm)

    def gamma(m: float) -> float:
        z_floor, h_floor = floor_pieces(m)
        secant = (transform.transformed_at_x(m) - h_floor) / (pair.psi(m) - z_floor)
        return transform.transformed_deriv_at_x(m) - secant

    x_switch = transform.convexity_switch_x
    lo = x_switch * (1.0 + 1e-9) if x_switch > 0 else x_switch + 1e-9
    if gamma(lo) <= 0.0:
        raise NumericFailureError(
            "derivative-secant gap is not positive just past the convexity switch"
        )

    def bracket_on(a: float, b: float, n: int) -> Optional[tuple[float, float]]:
        grid = _search.geometric_or_linear(a, b, n)
        prev = a
        for m in grid[1:]:
            if gamma(float(m)) <= 0.0:
                return prev, float(m)
            prev = float(m)
        return None

    if search_cap is not None:
        if not lo < search_cap < r:
            raise DomainError(f"search cap {search_cap} outside ({lo}, {r})")
        found = bracket_on(lo, min(search_cap, _largest_searchable(pair, r)), 129)
    else:
        found = None
        farthest = _largest_searchable(pair, r)
        hi = 4.0 * x_switch if x_switch > 0 else x_switch + 4.0
        left = lo
        for _ in range(60):
            hi = min(hi, farthest)
            found = bracket_on(left, hi, 65)
            if found is not None or hi >= farthest:
                break
            left, hi = hi, hi * 2.0 if hi > 0 else hi + 4.0

    if found is None:
        return TrailingStopSolution(
            transform=transform,
            floor=floor,
            threshold=r,
            threshold_transformed=math.inf,
            never_liquidate=True,
            truncation_tolerance=truncation_tolerance,
        )

    threshold = float(brentq(gamma, found[0], found[1], xtol=1e-13))

    # independent route: the threshold is a fixed point of the frozen-floor map
    frozen_floor = max(floor(threshold), l)
    frozen = solve_fixed_stop(transform, None if frozen_floor <= l else frozen_floor)
    if abs(frozen.threshold - threshold) > _ROUTE_AGREEMENT_TOL * (1.0 + abs(threshold)):
        raise NumericFailureError(
            "derivative-secant root and frozen-floor fixed point disagree on the "
            f"sell threshold: {threshold} vs {frozen.threshold}"
        )

    return TrailingStopSolution(
        transform=transform,
        floor=floor,
        threshold=threshold,
        threshold_transformed=pair.psi(threshold),
        never_liquidate=False,
        truncation_tolerance=truncation_tolerance,
    )


def _largest_searchable(pair: FundamentalPair, r: float) -> float:
    """Largest level the threshold search may probe without overflowing."""
    hi = pair.anchor if pair.anchor > 0 else 1.0
    for _ in range(200):
        step = hi * 1.5 if hi > 0 else hi + 2.0
        if step >= r or pair.log_psi(step) > 600.0:
            return hi
        hi = step
    return hi


def diagonal_by_quadrature(solution: TrailingStopSolution, points, n_nodes: int = 400):
    """Transformed diagonal value by explicit exponential-kernel quadrature.

    Independent of the recursion solver; used to cross-check it.  All points
    must lie at or below the sell threshold.
    """
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    b = solution.threshold
    if solution.never_liquidate or not math.isfinite(b):
        raise DomainError("quadrature route needs a finite sell threshold")
    if np.any(pts > b) or np.any(pts <= solution.pair.interval[0]):
        raise DomainError("points must lie inside the interval, at or below the threshold")

    lo = float(pts.min())
    nodes = np.linspace(lo, b, n_nodes + 1)
    seg = np.empty(n_nodes)
    for i in range(n_nodes):
        seg[i], _ = quad(
            solution.advance_hazard, nodes[i], nodes[i + 1], epsabs=1e-13, epsrel=1e-12
        )
    cum_to_top = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    to_top = CubicSpline(nodes, cum_to_top)

    transform = solution.transform
    h_top = transform.transformed_at_x(b)

    def floor_transformed(v: float) -> float:
        fm = solution.clamped_floor(v)
        if fm <= solution.pair.interval[0]:
            return 0.0
        return transform.transformed_at_x(fm)

    out = np.empty_like(pts)
    for k, p in enumerate(pts):
        if p >= b:
            out[k] = h_top
            continue
        j_total = float(to_top(p))

        def integrand(v: float) -> float:
            j_here = j_total - float(to_top(v))
            return floor_transformed(v) * math.exp(-j_here) * solution.advance_hazard(v)

        val, _ = quad(integrand, p, b, limit=300, epsabs=1e-12, epsrel=1e-10)
        out[k] = math.exp(-j_total) * h_top + val
    return out if np.ndim(points) else float(out[0])


@dataclass
class TrailingAcquisitionSolution:
    """Optimal buy level feeding the trailing-floor sell rule."""

    trailing: TrailingStopSolution
    entry_pair: FundamentalPair
    entry_cost: float
    no_entry: bool
    entry_threshold: float
    entry_threshold_transformed: float
    certificate: Optional[ShapeCertificate]

    def net_gain(self, x: float) -> float:
        """Trailing-rule value at a fresh max minus price minus the entry cost."""
        return (
            self.trailing.diagonal_value(x)
            - self.trailing.transform.reward(x)
            - self.entry_cost
        )

    def value(self, x: float) -> float:
        """Expected discounted net gain of the optimal entry rule."""
        pair = self.entry_pair
        pair._check_interior(x)
        if self.no_entry:
            return 0.0
        if x <= self.entry_threshold:
            return self.net_gain(x)
        scale = math.exp(pair.log_phi_minus(x) - pair.log_phi_minus(self.entry_threshold))
        return self.net_gain(self.entry_threshold) * scale


def solve_trailing_acquisition(
    trailing: TrailingStopSolution,
    entry_cost: float,
    entry_pair: Optional[FundamentalPair] = None,
) -> TrailingAcquisitionSolution:
    """Optimal entry level for buying into the trailing-floor sell rule.

    Entry happens on a downcrossing, so the rule is a single threshold: buy
    the first time the price is at or below it.  entry_pair discounts the
    search phase and defaults to the sell-side pair; its rate must not
    exceed the sell rate.
    """
    sell_pair = trailing.pair
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

    def transformed_net(x: float) -> float:
        net = (
            trailing.diagonal_value(x)
            - trailing.transform.reward(x)
            - entry_cost
        )
        return _scaled(-entry_pair.log_phi_minus(x), net)

    ref = trailing.threshold if math.isfinite(trailing.threshold) else sell_pair.anchor * 32.0
    lo = min(0.05 * ref, sell_pair.anchor * 0.05)
    hi = ref * (1.0 - 1e-9)
    # once the frozen floor clears the convexity switch the sell rule is an
    # immediate sale, so the net gain sits below the entry cost for good
    switch = trailing.transform.convexity_switch_x
    if trailing.clamped_floor(hi) >= switch > trailing.clamped_floor(lo):
        hi = float(
            brentq(lambda m: trailing.clamped_floor(m) - switch, lo, hi, xtol=1e-10)
        )
    grid = _search.geometric_or_linear(lo, hi, 300)
    x_entry, peak, _ = _search.refined_max(transformed_net, grid, side="right")
    if peak <= 0.0:
        return TrailingAcquisitionSolution(
            trailing=trailing,
            entry_pair=entry_pair,
            entry_cost=entry_cost,
            no_entry=True,
            entry_threshold=math.nan,
            entry_threshold_transformed=math.nan,
            certificate=None,
        )

    certificate = _concavity_switch_certificate(transformed_net, entry_pair, lo, hi)
    if not certificate.ok:
        raise AssumptionError(
            "single concave-to-convex switch of the entry objective",
            certificate.detail,
        )

    return TrailingAcquisitionSolution(
        trailing=trailing,
        entry_pair=entry_pair,
        entry_cost=entry_cost,
        no_entry=False,
        entry_threshold=x_entry,
        entry_threshold_transformed=entry_pair.psi(x_entry),
        certificate=certificate,
    )
