"""Linear diffusions and their fundamental first-passage machinery.

A model is a drift/volatility pair on an open interval with natural
boundaries.  For each discount rate q > 0 the Sturm-Liouville problem
(L - q)u = 0 has a positive increasing solution ``phi_plus`` and a positive
decreasing solution ``phi_minus``; their ratio ``psi = phi_plus/phi_minus``
is strictly increasing with psi -> 0 at the left boundary and psi -> inf at
the right one.  All internal arithmetic runs on log phi to stay usable deep
in the tails, where the raw solutions overflow double precision.

Two backends are provided:

* ``ExpOrnsteinUhlenbeck``: the log-price is an OU process; phi_plus/minus
  come from parabolic cylinder functions in closed form.
* ``GenericDiffusion``: numeric construction.  The log-derivative
  m = u'/u of each solution solves the Riccati equation
  m' = 2(q - mu(x) m)/sigma^2(x) - m^2, for which forward integration is
  attracted to the increasing solution and backward integration to the
  decreasing one; integrating (m, integral of m) jointly yields log phi
  directly with no overflow.  Truncation points near the boundaries are
  pushed outward until probe outputs stop moving.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import specialfn
from .errors import (
    AssumptionError,
    DegenerateIntervalError,
    DomainError,
    NumericFailureError,
    UnsupportedModelError,
    UnsupportedRewardError,
)


# ----------------------------------------------------------------------
# models
# ----------------------------------------------------------------------

class ExpOrnsteinUhlenbeck:
    """Price process whose logarithm mean-reverts: d ln X = lam (theta - ln X) dt + sigma dW.

    In price coordinates the drift is x (lam (theta - ln x) + sigma^2/2) and
    the volatility sigma * x, on the interval (0, inf); both endpoints are
    natural.
    """

    def __init__(self, lam: float, theta: float, sigma: float):
        if lam <= 0 or sigma <= 0:
            raise DomainError(f"need lam > 0 and sigma > 0, got lam={lam}, sigma={sigma}")
        self.lam = float(lam)
        self.theta = float(theta)
        self.sigma = float(sigma)
        self.interval = (0.0, math.inf)

    def drift(self, x):
        return x * (self.lam * (self.theta - np.log(x)) + 0.5 * self.sigma**2)

    def vol(self, x):
        return self.sigma * x

    def default_anchor(self) -> float:
        return math.exp(self.theta)


class GenericDiffusion:
    """A diffusion given by plain drift/vol callables on an open interval.

    Both boundaries must be natural: the numeric construction assumes the
    process neither reaches nor starts from them.
    """

    def __init__(
        self,
        drift: Callable[[float], float],
        vol: Callable[[float], float],
        interval: tuple[float, float],
        anchor: float,
        natural_boundaries: bool = True,
    ):
        if not natural_boundaries:
            raise UnsupportedModelError("only natural boundaries are supported")
        l, r = interval
        if not (l < anchor < r):
            raise DomainError(f"anchor {anchor} outside interval {interval}")
        self.drift = drift
        self.vol = vol
        self.interval = (float(l), float(r))
        self._anchor = float(anchor)

    def default_anchor(self) -> float:
        return self._anchor


# ----------------------------------------------------------------------
# fundamental pair
# ----------------------------------------------------------------------

class FundamentalPair:
    """phi_plus, phi_minus, psi and friends for one (model, q, anchor).

    Subclasses fill in the three log primitives; everything else is shared.
    Normalization: phi_plus(anchor) = phi_minus(anchor) = 1, hence
    psi(anchor) = 1.
    """

    def __init__(self, model, q: float, anchor: float):
        if q <= 0:
            raise DomainError(f"discount rate must be positive, got {q}")
        self.model = model
        self.q = float(q)
        self.anchor = float(anchor)
        self.interval = model.interval

    # --- log primitives (implemented by backends) ---

    def log_phi_plus(self, x: float) -> float:
        raise NotImplementedError

    def log_phi_minus(self, x: float) -> float:
        raise NotImplementedError

    def phi_plus_log_deriv(self, x: float) -> float:
        """(log phi_plus)'(x), positive."""
        raise NotImplementedError

    def phi_minus_log_deriv(self, x: float) -> float:
        """(log phi_minus)'(x), negative."""
        raise NotImplementedError

    # --- shared surface ---

    def left_query_bound(self) -> float:
        """Infimum of the prices the backend can evaluate.

        Closed-form backends cover the whole interval; numeric ones stop at
        their resolved truncation.
        """
        return self.interval[0]

    def _check_interior(self, x: float) -> None:
        l, r = self.interval
        if not (l < x < r) or not math.isfinite(x):
            raise DomainError(f"point {x} outside the open interval ({l}, {r})")

    def phi_plus(self, x: float) -> float:
        return math.exp(self.log_phi_plus(x))

    def phi_minus(self, x: float) -> float:
        return math.exp(self.log_phi_minus(x))

    def phi_minus_deriv(self, x: float) -> float:
        return self.phi_minus(x) * self.phi_minus_log_deriv(x)

    def log_psi(self, x: float) -> float:
        return self.log_phi_plus(x) - self.log_phi_minus(x)

    def psi(self, x: float) -> float:
        return math.exp(self.log_psi(x))

    def psi_log_deriv(self, x: float) -> float:
        return self.phi_plus_log_deriv(x) - self.phi_minus_log_deriv(x)

    def psi_deriv(self, x: float) -> float:
        return self.psi(x) * self.psi_log_deriv(x)

    def psi_inverse(self, z: float) -> float:
        """x with psi(x) = z, by bracketing bisection on log psi."""
        if z <= 0 or not math.isfinite(z):
            raise DomainError(f"psi takes positive values, got target {z}")
        target = math.log(z)
        t_lo, t_hi = self._bracket_log_psi(target)
        f = lambda t: self.log_psi(math.exp(t)) - target
        t = brentq(f, t_lo, t_hi, xtol=1e-14, maxiter=200)
        return math.exp(t)

    def _bracket_log_psi(self, target: float) -> tuple[float, float]:
        l, r = self.interval
        t = math.log(self.anchor)
        v = self.log_psi(math.exp(t))
        step = 1.0
        t_lo = t_hi = t
        if v < target:
            while v < target:
                t_hi += step
                step *= 2.0
                if math.exp(t_hi) >= r:
                    t_hi = math.log(r) - 1e-12 if math.isfinite(r) else t_hi
                v = self.log_psi(math.exp(t_hi))
                t_lo = t_hi - step / 2.0 if v < target else t_lo
            t_lo = t
        else:
            while v > target:
                t_lo -= step
                step *= 2.0
                if math.exp(t_lo) <= l:
                    t_lo = math.log(l) + 1e-12 if l > 0 else t_lo
                v = self.log_psi(math.exp(t_lo))
            t_hi = t
        return t_lo, t_hi


class _ExpOUPair(FundamentalPair):
    def __init__(self, model: ExpOrnsteinUhlenbeck, q: float, anchor: float):
        super().__init__(model, q, anchor)
        self.nu = -q / model.lam
        self._scale = math.sqrt(2.0 * model.lam) / model.sigma
        wk = self._w(anchor)
        self._norm_plus = 0.25 * wk * wk + specialfn.log_dv(self.nu, -wk)
        self._norm_minus = 0.25 * wk * wk + specialfn.log_dv(self.nu, wk)

    def _w(self, x: float) -> float:
        self._check_interior(x)
        return self._scale * (math.log(x) - self.model.theta)

    def log_phi_plus(self, x: float) -> float:
        w = self._w(x)
        return 0.25 * w * w + specialfn.log_dv(self.nu, -w) - self._norm_plus

    def log_phi_minus(self, x: float) -> float:
        w = self._w(x)
        return 0.25 * w * w + specialfn.log_dv(self.nu, w) - self._norm_minus

    def phi_plus_log_deriv(self, x: float) -> float:
        w = self._w(x)
        ratio = math.exp(specialfn.log_dv(self.nu - 1.0, -w) - specialfn.log_dv(self.nu, -w))
        return -self.nu * ratio * self._scale / x

    def phi_minus_log_deriv(self, x: float) -> float:
        w = self._w(x)
        ratio = math.exp(specialfn.log_dv(self.nu - 1.0, w) - specialfn.log_dv(self.nu, w))
        return self.nu * ratio * self._scale / x


class _GenericPair(FundamentalPair):
    """Riccati-shooting construction for arbitrary drift/vol.

    Integration runs in an internal coordinate: log price for models on
    (0, inf), plain price otherwise.  Misinitialization at the truncated
    boundary decays at a fixed exponential rate per unit of internal
    coordinate, so pushing the truncation outward by a constant amount per
    refinement level gives geometric convergence of the probe outputs.
    """

    def __init__(self, model: GenericDiffusion, q: float, anchor: float,
                 rtol: float = 1e-11, probes: Optional[list[float]] = None):
        super().__init__(model, q, anchor)
        self._rtol = rtol
        l, r = model.interval
        self._log_coord = (l == 0.0 and math.isinf(r))
        if probes is None:
            probes = self._default_probes()
        self._probes = probes
        self._build_with_refinement()

    def _default_probes(self) -> list[float]:
        l, r = self.interval
        a = self.anchor
        lo = a / 8 if l <= 0 else max(l + 0.25 * (a - l), a / 8)
        hi = a * 8 if math.isinf(r) else min(r - 0.25 * (r - a), a * 8)
        return list(np.geomspace(lo, hi, 7)) if l >= 0 else list(np.linspace(lo, hi, 7))

    def _to_internal(self, x: float) -> float:
        return math.log(x) if self._log_coord else x

    def _trunc_candidates(self, level: int) -> tuple[float, float]:
        l, r = self.interval
        a = self._to_internal(self.anchor)
        if self._log_coord:
            span = 4.0 + 3.0 * level
            return a - span, a + span
        span = 2.0 ** (4 + 2 * level)
        lo = a - span if math.isinf(l) else l + (a - l) / span
        hi = a + span if math.isinf(r) else r - (r - a) / span
        return lo, hi

    def _build_with_refinement(self) -> None:
        prev = None
        for level in range(8):
            lo, hi = self._trunc_candidates(level)
            self._integrate(lo, hi)
            cur = np.array([self.log_psi(p) for p in self._probes])
            if prev is not None and np.max(np.abs(cur - prev)) < 1e-9:
                return
            prev = cur
        raise NumericFailureError(
            "fundamental solutions did not stabilize under boundary truncation refinement"
        )

    def _coeffs(self, t: float) -> tuple[float, float]:
        """Half-squared-vol and effective drift in the internal coordinate."""
        x = math.exp(t) if self._log_coord else t
        s2 = 0.5 * float(self.model.vol(x)) ** 2
        mu = float(self.model.drift(x))
        if self._log_coord:
            return s2 / (x * x), mu / x - s2 / (x * x)
        return s2, mu

    def _local_slope(self, t: float, increasing: bool) -> float:
        # frozen-coefficient root of a n^2 + b n - q = 0
        a, b = self._coeffs(t)
        disc = math.sqrt(b * b + 4.0 * a * self.q)
        return (-b + disc) / (2 * a) if increasing else (-b - disc) / (2 * a)

    def _rhs(self, t, state):
        n = state[0]
        a, b = self._coeffs(t)
        return [(self.q - b * n) / a - n * n, n]

    def _integrate(self, lo: float, hi: float) -> None:
        kw = dict(method="DOP853", rtol=self._rtol, atol=1e-12, dense_output=True)
        up = solve_ivp(self._rhs, (lo, hi), [self._local_slope(lo, True), 0.0], **kw)
        dn = solve_ivp(self._rhs, (hi, lo), [self._local_slope(hi, False), 0.0], **kw)
        if not (up.success and dn.success):
            raise NumericFailureError("Riccati integration failed: " + up.message + dn.message)
        self._lo, self._hi = lo, hi
        self._up, self._dn = up.sol, dn.sol
        t_anchor = self._to_internal(self.anchor)
        self._up_ref = float(up.sol(t_anchor)[1])
        self._dn_ref = float(dn.sol(t_anchor)[1])

    def _eval(self, sol, x: float) -> tuple[float, float]:
        t = self._to_internal(x)
        if not (self._lo <= t <= self._hi):
            raise DomainError(
                f"point {x} outside the resolved range of the numeric backend"
            )
        n, big_l = sol(t)
        return float(n), float(big_l)

    def left_query_bound(self) -> float:
        return math.exp(self._lo) if self._log_coord else self._lo

    def log_phi_plus(self, x: float) -> float:
        self._check_interior(x)
        _, big_l = self._eval(self._up, x)
        return big_l - self._up_ref

    def log_phi_minus(self, x: float) -> float:
        self._check_interior(x)
        _, big_l = self._eval(self._dn, x)
        return big_l - self._dn_ref

    def phi_plus_log_deriv(self, x: float) -> float:
        n, _ = self._eval(self._up, x)
        return n / x if self._log_coord else n

    def phi_minus_log_deriv(self, x: float) -> float:
        n, _ = self._eval(self._dn, x)
        return n / x if self._log_coord else n


def build_fundamental_pair(model, q: float, anchor: Optional[float] = None) -> FundamentalPair:
    """Construct phi_plus/phi_minus/psi for the model at rate q.

    The anchor is the normalization point kappa with phi_+-(kappa) = 1; it
    defaults to the model's long-run level.  Downstream outputs in price
    space are invariant to this choice.
    """
    if anchor is None:
        anchor = model.default_anchor()
    if isinstance(model, ExpOrnsteinUhlenbeck):
        return _ExpOUPair(model, q, anchor)
    if isinstance(model, GenericDiffusion):
        return _GenericPair(model, q, anchor)
    raise UnsupportedModelError(f"unknown model type {type(model).__name__}")


# ----------------------------------------------------------------------
# exit transforms
# ----------------------------------------------------------------------

def _log_diff(log_a: float, log_b: float) -> float:
    """log(e^a - e^b) for a > b."""
    return log_a + math.log1p(-math.exp(min(log_b - log_a, -1e-300)))


def two_sided_exit(pair: FundamentalPair, x: float, y: float, z: float) -> tuple[float, float]:
    """Discounted exit transforms of the interval (y, z) started at x.

    Returns (down, up) with
      down = E_x[e^{-q tau^-(y)}; tau^-(y) < tau^+(z)]
      up   = E_x[e^{-q tau^+(z)}; tau^+(z) < tau^-(y)]
    """
    if y == z:
        raise DegenerateIntervalError(f"barriers coincide at {y}")
    if not (y <= x <= z):
        raise DomainError(f"need y <= x <= z, got y={y}, x={x}, z={z}")
    if x == y and x == z:
        raise DegenerateIntervalError("empty interval")
    if x == y:
        return 1.0, 0.0
    if x == z:
        return 0.0, 1.0
    lpx, lpy, lpz = (pair.log_psi(t) for t in (x, y, z))
    lmx, lmy, lmz = (pair.log_phi_minus(t) for t in (x, y, z))
    down = math.exp(lmx - lmy + _log_diff(lpz, lpx) - _log_diff(lpz, lpy))
    up = math.exp(lmx - lmz + _log_diff(lpx, lpy) - _log_diff(lpz, lpy))
    return down, up


def passage_down(pair: FundamentalPair, x: float, y: float) -> float:
    """E_x[e^{-q tau^-(y)}] for x >= y (trivially 1 at x = y)."""
    if x < y:
        raise DomainError(f"need x >= y, got x={x}, y={y}")
    return math.exp(pair.log_phi_minus(x) - pair.log_phi_minus(y))


def passage_up(pair: FundamentalPair, x: float, z: float) -> float:
    """E_x[e^{-q tau^+(z)}] for x <= z."""
    if x > z:
        raise DomainError(f"need x <= z, got x={x}, z={z}")
    return math.exp(pair.log_phi_plus(x) - pair.log_phi_plus(z))


# ----------------------------------------------------------------------
# reward transform
# ----------------------------------------------------------------------

@dataclass
class AssumptionReport:
    """Outcome of the numeric shape checks on the transformed reward."""

    vanishes_at_zero: bool
    single_convexity_switch: bool
    sign_change_below_switch: bool
    slope_gap_positive: bool

    def ok(self) -> bool:
        return (
            self.vanishes_at_zero
            and self.single_convexity_switch
            and self.sign_change_below_switch
            and self.slope_gap_positive
        )


class RewardTransform:
    """The reward h carried through the phi_minus / psi change of variables.

    ``transformed`` evaluates H(z) = h(x)/phi_minus(x) with z = psi(x); the
    x-space entry points avoid the psi inversion and are what the solvers
    use in hot loops.

    Attributes:
        convexity_switch_x: price where the generator residual (L - q)h
            changes sign; H is convex below its psi-image and concave above.
        convexity_switch_z: that point in the transformed coordinate (z0).
        sign_change_z: z below which H < 0 and above which H > 0 (z1); 0.0
            when the reward is positive near the left boundary.
        slope_at_infinity: the limiting right-derivative of H.
    """

    def __init__(self, pair: FundamentalPair, reward, reward_deriv=None,
                 generator_residual=None, probe_interval=None):
        self.pair = pair
        self.reward = reward
        self.reward_deriv = reward_deriv
        self.generator_residual = generator_residual
        self._probe = probe_interval or self._default_probe()
        self.convexity_switch_x = self._locate_convexity_switch()
        self.convexity_switch_z = pair.psi(self.convexity_switch_x)
        self.sign_change_z = self._locate_sign_change()
        self.slope_at_infinity = self._estimate_slope_at_infinity()
        self.assumption_report = self._check_assumptions()
        if not self.assumption_report.ok():
            rep = self.assumption_report
            for name, flag in [
                ("transformed reward vanishes at the left boundary", rep.vanishes_at_zero),
                ("single convexity switch", rep.single_convexity_switch),
                ("sign change below the convexity switch", rep.sign_change_below_switch),
                ("slope gap at infinity", rep.slope_gap_positive),
            ]:
                if not flag:
                    raise AssumptionError(name)

    def _default_probe(self):
        a = self.pair.anchor
        return (a / 64.0, a * 16.0)

    # --- x-space entry points (no inversion) ---

    def transformed_at_x(self, x: float) -> float:
        return self.reward(x) * math.exp(-self.pair.log_phi_minus(x))

    def transformed_deriv_at_x(self, x: float) -> float:
        """H'(psi(x)), analytic when the reward derivative is available."""
        if self.reward_deriv is None:
            h = 1e-6 * (1.0 + abs(x))
            num = self.transformed_at_x(x + h) - self.transformed_at_x(x - h)
            return num / (2 * h) / self.pair.psi_deriv(x)
        hp = self.reward_deriv(x)
        hv = self.reward(x)
        lm = self.pair.phi_minus_log_deriv(x)
        return (hp - hv * lm) * math.exp(-self.pair.log_phi_minus(x)) / self.pair.psi_deriv(x)

    # --- z-space surface ---

    def transformed(self, z: float) -> float:
        return self.transformed_at_x(self.pair.psi_inverse(z))

    def left_deriv(self, z: float) -> float:
        step = 1e-6 * (1.0 + abs(z))
        return (self.transformed(z) - self.transformed(z - step)) / step

    def right_deriv(self, z: float) -> float:
        step = 1e-6 * (1.0 + abs(z))
        return (self.transformed(z + step) - self.transformed(z)) / step

    # --- construction helpers ---

    def _locate_convexity_switch(self) -> float:
        lo, hi = self._probe
        if self.generator_residual is not None:
            return self._root_of_single_sign_change(self.generator_residual, lo, hi)
        # fall back to second differences of H along an x grid, skipping
        # points whose transformed coordinate is too extreme for stable
        # divided differences
        xs = np.geomspace(lo, hi, 400)
        log_zs = np.array([self.pair.log_psi(float(t)) for t in xs])
        xs = xs[np.abs(log_zs) <= 300.0]
        zs = np.exp(log_zs[np.abs(log_zs) <= 300.0])
        hs = np.array([self.transformed_at_x(float(t)) for t in xs])
        d2 = _divided_second_differences(zs, hs)
        sign = np.sign(d2)
        flips = np.nonzero(np.diff(sign) < 0)[0]
        if len(flips) != 1:
            raise UnsupportedRewardError(
                f"expected one convex-to-concave switch, found {len(flips)}"
            )
        return float(xs[flips[0] + 1])

    def _root_of_single_sign_change(self, fn, lo: float, hi: float) -> float:
        xs = np.geomspace(lo, hi, 257) if lo > 0 else np.linspace(lo, hi, 257)
        vals = np.array([fn(float(t)) for t in xs])
        sign = np.sign(vals)
        changes = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
        if len(changes) == 0:
            raise UnsupportedRewardError("generator residual does not change sign on the probe grid")
        if len(changes) > 1:
            raise UnsupportedRewardError(
                f"generator residual changes sign {len(changes)} times; need exactly one"
            )
        i = changes[0]
        return brentq(fn, float(xs[i]), float(xs[i + 1]), xtol=1e-13)

    def _locate_sign_change(self) -> float:
        l = self.pair.interval[0]
        lo = self._probe[0]
        # walk toward the left boundary until the reward goes negative or we
        # give up and call it nonnegative throughout
        x = lo
        for _ in range(20):
            if self.reward(x) < 0.0:
                x1 = brentq(self.reward, x, self.convexity_switch_x, xtol=1e-15)
                return self.pair.psi(x1)
            if l == 0.0:
                x /= 10.0
            elif math.isinf(l):
                x -= 4.0 * (lo - x) + 1.0
            else:
                x = l + (x - l) / 10.0
        return 0.0

    def _estimate_slope_at_infinity(self) -> float:
        x_hi = self._probe[1]
        prev = None
        for _ in range(60):
            z_hi = self.pair.psi(x_hi)
            z_lo = 0.1 * z_hi
            s = (self.transformed(z_hi) - self.transformed(z_lo)) / (z_hi - z_lo)
            if prev is not None and abs(s - prev) < 1e-6:
                return s
            prev = s
            x_hi *= 1.6
        return prev

    def _deep_left_probe(self) -> float:
        """A price close to the left boundary that the backend can evaluate."""
        l = self.pair.interval[0]
        x = self._probe[0]
        if l == 0.0:
            deep = x / 1024.0
        elif math.isinf(l):
            deep = x - 64.0 * (1.0 + abs(x))
        else:
            deep = l + (x - l) / 1024.0
        bound = self.pair.left_query_bound()
        if math.isfinite(bound):
            deep = max(deep, bound + 1e-3 * (x - bound))
        return deep

    def _check_assumptions(self) -> AssumptionReport:
        pair = self.pair
        # the shape checks live near the convexity switch; keep the grid
        # inside a wide z window around it so steep psi cannot overflow the
        # divided differences
        log_z0 = math.log(self.convexity_switch_z)
        xs = np.geomspace(self._probe[0], self._probe[1], 300)
        log_zs = np.array([pair.log_psi(float(t)) for t in xs])
        keep = (log_zs >= log_z0 - 23.0) & (log_zs <= log_z0 + 18.5)
        if np.count_nonzero(keep) >= 50:
            xs, zs = xs[keep], np.exp(log_zs[keep])
        else:
            lo = max(self._probe[0], pair.psi_inverse(math.exp(log_z0 - 23.0)))
            hi = min(self._probe[1], pair.psi_inverse(math.exp(log_z0 + 18.5)))
            xs = np.geomspace(lo, hi, 300)
            zs = np.array([pair.psi(float(t)) for t in xs])
        hs = np.array([self.transformed_at_x(float(t)) for t in xs])
        scale = np.max(np.abs(hs))

        # decay at the left boundary: near the deepest evaluable point the
        # transformed reward must be negligible against its scale on the
        # grid and no larger than at the grid's own left edge
        h_deep = abs(self.transformed_at_x(self._deep_left_probe()))
        h_edge = abs(self.transformed_at_x(self._probe[0]))
        vanishes = h_deep <= max(1e-6, 0.05 * scale) and h_deep <= h_edge + 1e-9 * scale

        # convexity split across the located switch
        d2 = _divided_second_differences(zs, hs)
        z_mid = zs[1:-1]
        tol = 1e-7 * scale
        below = d2[z_mid < self.convexity_switch_z * 0.98]
        above = d2[z_mid > self.convexity_switch_z * 1.02]
        single = bool(np.all(below >= -tol) and np.all(above <= tol))

        sign_ok = self.sign_change_z < self.convexity_switch_z

        zs_upper = zs[zs > self.convexity_switch_z]
        hs_upper = hs[zs > self.convexity_switch_z]
        sup_ratio = float(np.max(hs_upper / zs_upper)) if len(zs_upper) else -math.inf
        slope_gap = sup_ratio > self.slope_at_infinity

        return AssumptionReport(vanishes, single, sign_ok, slope_gap)


def _divided_second_differences(x: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Second divided differences on a non-uniform grid (sign of f'')."""
    x0, x1, x2 = x[:-2], x[1:-1], x[2:]
    f0, f1, f2 = f[:-2], f[1:-1], f[2:]
    return 2.0 * (f0 / ((x1 - x0) * (x2 - x0)) - f1 / ((x1 - x0) * (x2 - x1)) + f2 / ((x2 - x1) * (x2 - x0)))


def build_reward_transform(pair: FundamentalPair, reward, reward_deriv=None,
                           generator_residual=None, probe_interval=None) -> RewardTransform:
    """Build H = h/phi_minus along psi and verify its standing shape assumptions."""
    return RewardTransform(pair, reward, reward_deriv, generator_residual, probe_interval)


def linear_reward_transform(pair: FundamentalPair, cost: float,
                            probe_interval=None) -> RewardTransform:
    """Reward h(x) = x - cost with its closed-form generator residual."""
    model = pair.model
    if not isinstance(model, ExpOrnsteinUhlenbeck):
        return build_reward_transform(
            pair, lambda x: x - cost, reward_deriv=lambda x: 1.0,
            probe_interval=probe_interval,
        )
    lam, theta, sig, q = model.lam, model.theta, model.sigma, pair.q

    def residual(x: float) -> float:
        return (lam * (theta - math.log(x)) + 0.5 * sig * sig - q) * x + q * cost

    return build_reward_transform(
        pair,
        lambda x: x - cost,
        reward_deriv=lambda x: 1.0,
        generator_residual=residual,
        probe_interval=probe_interval,
    )
