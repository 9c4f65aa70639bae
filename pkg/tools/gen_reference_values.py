"""Generate pinned reference values for the test suite.

Everything here is computed with mpmath at high precision, independently of
the library implementation:

* parabolic cylinder values D_nu(x), both as raw values and as logs, via
  mpmath.pcfd (self-checked against the erfc identity for nu = -1 and the
  integral representation before anything is emitted);
* integral-representation values on the special-function test grid;
* fundamental-solution spot values (log phi+/-, psi) for the exponential
  OU model at the default parameter set, straight from the closed form;
* the root of the generator residual (L - q)h for the linear reward;
* two-sided exit transforms at one configured triple.

Output is written to tests/reference_values.py as plain dict literals.

Run from the repo root:  python tools/gen_reference_values.py
"""

from __future__ import annotations

import io
import math
import os

import mpmath as mp

OUT_PATH = os.path.join(os.path.dirname(__file__), "..", "tests", "reference_values.py")

# Default model parameter set used across the test suite.
LAM = mp.mpf("0.6")
THETA = mp.mpf("1")
SIGMA = mp.mpf("0.2")
Q = mp.mpf("0.05")
C0 = mp.mpf("0.02")

NU_DEFAULT = -Q / LAM  # -1/12


def pcfd(nu, x):
    return mp.pcfd(mp.mpf(nu), mp.mpf(x))


def pcfd_integral(nu, x):
    """D_nu(x) for nu < 0 via the integral representation.

    D_nu(x) = e^{-x^2/4} / Gamma(-nu) * int_0^inf t^{-nu-1} e^{-t^2/2 - x t} dt

    The substitution t = s^p with p >= 2/(-nu) removes the endpoint
    singularity t^{-nu-1}, without which tanh-sinh quadrature stalls at
    about 1e-12 relative accuracy.
    """
    nu = mp.mpf(nu)
    x = mp.mpf(x)
    assert nu < 0
    p = 1 if nu <= -1 else int(mp.ceil(2 / (-nu)))

    def integrand(s):
        t = s ** p
        return p * s ** (-p * nu - 1) * mp.e ** (-t * t / 2 - x * t)

    peak = max(mp.mpf("0.5"), abs(x) + 2) ** (mp.mpf(1) / p)
    val = mp.quad(integrand, [0, peak, 2 * peak, 4 * peak, mp.inf], maxdegree=10)
    return mp.e ** (-x * x / 4) / mp.gamma(-nu) * val


def self_check():
    mp.mp.dps = 60
    # erfc identity for nu = -1.
    for x in ["-3.0", "-0.7", "0.0", "1.1", "4.0"]:
        x = mp.mpf(x)
        lhs = pcfd(-1, x)
        rhs = mp.e ** (x * x / 4) * mp.sqrt(mp.pi / 2) * mp.erfc(x / mp.sqrt(2))
        assert abs(lhs - rhs) / rhs < mp.mpf("1e-50"), (x, lhs, rhs)
    # integral representation agrees with pcfd.
    for nu in ["-2", "-1", "-0.0833333333333333333333333333333"]:
        for x in ["-6", "-1.5", "0", "2", "6"]:
            a = pcfd(nu, x)
            b = pcfd_integral(nu, x)
            assert abs(a - b) / a < mp.mpf("1e-40"), (nu, x, a, b)
    # D_0(x) = exp(-x^2/4).
    for x in ["-5", "0.3", "7"]:
        x = mp.mpf(x)
        assert abs(pcfd(0, x) - mp.e ** (-x * x / 4)) < mp.mpf("1e-55")
    print("self checks passed")


def fmt(v, dps=22):
    return mp.nstr(mp.mpf(v), dps, strip_zeros=False)


def log_phi_minus(x, q=Q, kappa=None):
    """log of the decreasing fundamental solution, normalized at kappa."""
    if kappa is None:
        kappa = mp.e ** THETA
    nu = -q / LAM
    wk = mp.sqrt(2 * LAM) / SIGMA * (mp.log(kappa) - THETA)
    w = mp.sqrt(2 * LAM) / SIGMA * (mp.log(x) - THETA)
    return (w * w / 4 + mp.log(pcfd(nu, w))) - (wk * wk / 4 + mp.log(pcfd(nu, wk)))


def log_phi_plus(x, q=Q, kappa=None):
    """log of the increasing fundamental solution, normalized at kappa."""
    if kappa is None:
        kappa = mp.e ** THETA
    nu = -q / LAM
    wk = mp.sqrt(2 * LAM) / SIGMA * (mp.log(kappa) - THETA)
    w = mp.sqrt(2 * LAM) / SIGMA * (mp.log(x) - THETA)
    return (w * w / 4 + mp.log(pcfd(nu, -w))) - (wk * wk / 4 + mp.log(pcfd(nu, -wk)))


def log_psi(x, q=Q, kappa=None):
    return log_phi_plus(x, q, kappa) - log_phi_minus(x, q, kappa)


def main():
    self_check()
    mp.mp.dps = 80

    buf = io.StringIO()
    buf.write('"""Pinned reference values, generated by tools/gen_reference_values.py.\n\n')
    buf.write("Do not edit by hand; rerun the generator instead.  All values were\n")
    buf.write("computed with mpmath at 80 significant digits and rounded to 22.\n")
    buf.write('"""\n\n')

    # ------------------------------------------------------------------
    # Parabolic cylinder: log D_nu(x) on a dense band-covering grid.
    # ------------------------------------------------------------------
    nus = ["-5", "-3.5", "-2", "-1", "-0.5", str(mp.mpf(-1) / 12), "-0.02"]
    xs = (
        ["-54", "-36", "-20", "-12", "-10", "-8", "-6.5", "-6", "-5.5", "-4.5", "-3", "-1.5"]
        + ["0", "0.75", "1.5", "2", "3", "4", "4.5", "5"]
        + ["5.25", "5.5", "6", "6.5", "7", "7.5", "8", "8.5", "9", "9.5", "10", "10.5", "11", "11.5", "12"]
        + ["14", "16", "20", "28", "36", "54"]
    )
    buf.write("# log D_nu(x): {(nu, x): log_value}\n")
    buf.write("LOG_CYLINDER = {\n")
    for nu in nus:
        for x in xs:
            v = mp.log(pcfd(nu, x))
            buf.write(f"    ({float(mp.mpf(nu))!r}, {float(mp.mpf(x))!r}): {fmt(v)},\n")
    buf.write("}\n\n")

    # Raw values where they are comfortably representable.
    buf.write("# D_nu(x) raw values on a small grid\n")
    buf.write("CYLINDER_VALUES = {\n")
    for nu in nus:
        for x in ["-6", "-2.5", "-1", "0", "0.5", "2", "4", "5"]:
            v = pcfd(nu, x)
            buf.write(f"    ({float(mp.mpf(nu))!r}, {float(mp.mpf(x))!r}): {fmt(v)},\n")
    buf.write("}\n\n")

    # Integral-representation values on the acceptance grid (these are the
    # frozen copy; the live test also recomputes the oracle with scipy).
    buf.write("# integral-representation D_nu(x) on the acceptance grid\n")
    buf.write("CYLINDER_INTEGRAL_GRID = {\n")
    grid_nus = ["-2", "-1", str(mp.mpf(-1) / 12)]
    grid_xs = [mp.mpf(-6) + mp.mpf("0.75") * k for k in range(17)]  # -6 .. 6
    for nu in grid_nus:
        for x in grid_xs:
            v = pcfd_integral(nu, x)
            buf.write(f"    ({float(mp.mpf(nu))!r}, {float(x)!r}): {fmt(v)},\n")
    buf.write("}\n\n")

    d10 = pcfd(-1, 0)
    buf.write(f"D_MINUS_ONE_AT_ZERO = {fmt(d10)}\n")
    dtw = pcfd_integral(mp.mpf(-1) / 12, mp.mpf("1.5"))
    buf.write(f"D_TWELFTH_AT_1_5 = {fmt(dtw)}\n\n")

    # ------------------------------------------------------------------
    # Exponential OU fundamental solutions at the default parameters.
    # ------------------------------------------------------------------
    spots = ["0.003", "0.05", "0.5", "1.0", "2.0", "2.8845", "5.0", "9.0", "20.0", "500.0", "2500.0"]
    buf.write("# {x: (log phi_plus, log phi_minus, log psi)} at lam=0.6, theta=1, sigma=0.2, q=0.05\n")
    buf.write("EXP_OU_LOG_FUNDAMENTALS = {\n")
    for x in spots:
        lp = log_phi_plus(mp.mpf(x))
        lm = log_phi_minus(mp.mpf(x))
        buf.write(f"    {float(mp.mpf(x))!r}: ({fmt(lp)}, {fmt(lm)}, {fmt(lp - lm)}),\n")
    buf.write("}\n\n")

    # Same spots under a different anchor, for the invariance tests.
    buf.write("# anchor moved to kappa=1.7: {x: (log phi_plus, log phi_minus)}\n")
    buf.write("EXP_OU_LOG_FUNDAMENTALS_KAPPA_1_7 = {\n")
    for x in ["0.5", "2.0", "9.0"]:
        lp = log_phi_plus(mp.mpf(x), kappa=mp.mpf("1.7"))
        lm = log_phi_minus(mp.mpf(x), kappa=mp.mpf("1.7"))
        buf.write(f"    {float(mp.mpf(x))!r}: ({fmt(lp)}, {fmt(lm)}),\n")
    buf.write("}\n\n")

    # psi'(x) at a few points by high-precision differentiation.
    buf.write("# {x: psi'(x)} at the default parameters\n")
    buf.write("EXP_OU_PSI_DERIV = {\n")
    for x in ["0.5", "1.0", "2.0", "2.8845", "5.0"]:
        d = mp.diff(lambda t: mp.e ** log_psi(t), mp.mpf(x))
        buf.write(f"    {float(mp.mpf(x))!r}: {fmt(d)},\n")
    buf.write("}\n\n")

    # ------------------------------------------------------------------
    # Generator residual root for h(x) = x - c0:
    # (lam*(theta - ln x) + sigma^2/2 - q) * x + q*c0 = 0.
    # ------------------------------------------------------------------
    def gen_residual(x):
        return (LAM * (THETA - mp.log(x)) + SIGMA * SIGMA / 2 - Q) * x + Q * C0

    x0 = mp.findroot(gen_residual, mp.mpf("2.6"))
    buf.write(f"GENERATOR_RESIDUAL_ROOT = {fmt(x0)}\n")
    buf.write(f"Z0_AT_DEFAULTS = {fmt(mp.e ** log_psi(x0))}\n")
    # Sign change of the reward itself (trivially c0, but through psi).
    buf.write(f"Z1_AT_DEFAULTS = {fmt(mp.e ** log_psi(C0))}\n\n")

    # ------------------------------------------------------------------
    # Two-sided exit transforms at (x, y, z) = (2.0, 1.5, 2.5).
    # ------------------------------------------------------------------
    x, y, z = mp.mpf(2), mp.mpf("1.5"), mp.mpf("2.5")
    psix, psiy, psiz = (mp.e ** log_psi(t) for t in (x, y, z))
    ratio_y = mp.e ** (log_phi_minus(x) - log_phi_minus(y))
    ratio_z = mp.e ** (log_phi_minus(x) - log_phi_minus(z))
    down = ratio_y * (psiz - psix) / (psiz - psiy)
    up = ratio_z * (psix - psiy) / (psiz - psiy)
    buf.write(f"EXIT_DOWN_2_15_25 = {fmt(down)}\n")
    buf.write(f"EXIT_UP_2_15_25 = {fmt(up)}\n")

    with open(OUT_PATH, "w") as fh:
        fh.write(buf.getvalue())
    print(f"wrote {os.path.normpath(OUT_PATH)}")


if __name__ == "__main__":
    main()
