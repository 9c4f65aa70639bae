"""Generate pinned reference values for the trailing-floor solver tests.

Everything is computed with mpmath straight from the closed forms for the
exponential OU model, sharing no code with the library's solvers:

* the sell threshold is a root of the derivative-secant gap found with
  mpmath's own root finder, cross-checked against the frozen-floor fixed
  point computed by the brute-force single-floor machinery;
* diagonal values come from the exponential-kernel integral representation
  evaluated by Richardson-extrapolated composite Simpson (two resolutions,
  h^4 term eliminated), never from an ODE solver;
* premiums are closed forms in those pieces, each asserted against the
  value-minus-baseline identity before anything is emitted.

Run from the repo root:  python3 tools/gen_trailing_references.py
(writes tests/trailing_references.py; takes a few minutes)
"""

from __future__ import annotations

import io
import os
import time

import mpmath as mp

from gen_reference_values import LAM, THETA, SIGMA, Q, C0, fmt, log_phi_minus, log_psi
from gen_solver_references import big_h, psi, reward, solve_threshold, value_fixed

OUT_PATH = os.path.join(os.path.dirname(__file__), "..", "tests", "trailing_references.py")

DRAWDOWN = mp.mpf("0.3")
KEEP = 1 - DRAWDOWN
ENTRY_COST = 2 * C0

S_SCALE = mp.sqrt(2 * LAM) / SIGMA
NU = -Q / LAM

TRUNC_NEAR = mp.mpf(20)
TRUNC_FAR = mp.mpf(48)


def w_of(x):
    return S_SCALE * (mp.log(x) - THETA)


def ratio_d(z):
    """D_(nu-1)(z) / D_nu(z), the ratio driving all log derivatives."""
    return mp.pcfd(NU - 1, z) / mp.pcfd(NU, z)


def dlog_phi_minus(x):
    return NU * ratio_d(w_of(x)) * S_SCALE / x


def dlog_psi(x):
    w = w_of(x)
    return -NU * (ratio_d(w) + ratio_d(-w)) * S_SCALE / x


def phi_minus(x):
    return mp.e ** log_phi_minus(x)


def big_h_deriv_x(x):
    return (1 - (x - C0) * dlog_phi_minus(x)) * mp.e ** (-log_phi_minus(x))


def floor_of(m):
    return KEEP * m


def h_floor(m):
    fm = floor_of(m)
    return (fm - C0) * mp.e ** (-log_phi_minus(fm))


def kappa(v):
    return dlog_psi(v) / (1 - mp.e ** (log_psi(floor_of(v)) - log_psi(v)))


def gamma(m):
    """Derivative of the transformed reward minus its secant to the floor."""
    zf = psi(floor_of(m))
    deriv_z = big_h_deriv_x(m) / (psi(m) * dlog_psi(m))
    return deriv_z - (big_h(m) - h_floor(m)) / (psi(m) - zf)


def exp_kernel(lo, hi, terminal, n):
    """Value at lo of the exponential-kernel integral with the given terminal.

    Composite Simpson at two resolutions with Richardson extrapolation of
    the h^4 term; returns (value, error estimate).  n must be a multiple
    of 8.
    """
    assert n % 8 == 0
    lo, hi = mp.mpf(lo), mp.mpf(hi)
    h = (hi - lo) / n
    xs = [lo + i * h for i in range(n + 1)]
    kap = [kappa(x) for x in xs]
    f_vals = [h_floor(x) * k for x, k in zip(xs, kap)]

    def total(s):
        j_cum = {0: mp.mpf(0)}
        acc = mp.mpf(0)
        for k0 in range(0, n, 2 * s):
            acc += (s * h / 3) * (kap[k0] + 4 * kap[k0 + s] + kap[k0 + 2 * s])
            j_cum[k0 + 2 * s] = acc
        w_vals = [f_vals[i] * mp.e ** (-j_cum[i]) for i in range(0, n + 1, 2 * s)]
        outer = mp.mpf(0)
        for j in range(0, len(w_vals) - 1, 2):
            outer += (2 * s * h / 3) * (w_vals[j] + 4 * w_vals[j + 1] + w_vals[j + 2])
        return outer + terminal * mp.e ** (-acc)

    fine, coarse = total(1), total(2)
    return (16 * fine - coarse) / 15, abs(fine - coarse) / 15


def hazard_only(lo, hi, n):
    """Integral of the advance hazard, same extrapolation scheme."""
    assert n % 8 == 0
    lo, hi = mp.mpf(lo), mp.mpf(hi)
    h = (hi - lo) / n
    kap = [kappa(lo + i * h) for i in range(n + 1)]

    def total(s):
        acc = mp.mpf(0)
        for k0 in range(0, n, 2 * s):
            acc += (s * h / 3) * (kap[k0] + 4 * kap[k0 + s] + kap[k0 + 2 * s])
        return acc

    fine, coarse = total(1), total(2)
    return (16 * fine - coarse) / 15


def check(err, val, what):
    # err is the removed h^4 term; the extrapolated result is ~100x closer
    assert err <= mp.mpf("3e-9") * abs(val) + mp.mpf("1e-15"), (what, err, val)


def main():
    mp.mp.dps = 30
    t0 = time.time()

    # sell threshold: root of the derivative-secant gap
    b_star = mp.findroot(gamma, mp.mpf("2.88"), tol=mp.mpf("1e-26"), maxsteps=60)
    assert gamma(b_star * (1 - mp.mpf("1e-5"))) > 0 > gamma(b_star * (1 + mp.mpf("1e-5")))
    assert abs(b_star - mp.mpf("2.8845")) < mp.mpf("1e-3"), b_star
    print(f"[{time.time()-t0:7.1f}s] threshold {fmt(b_star)}", flush=True)

    # independent route: fixed point of the frozen-floor threshold map
    bb = solve_threshold(KEEP * b_star)
    assert abs(bb - b_star) < mp.mpf("1e-10") * (1 + b_star), (bb, b_star)
    print(f"[{time.time()-t0:7.1f}s] frozen-floor fixed point agrees: {fmt(bb)}", flush=True)

    z_star = psi(b_star)
    assert abs(z_star - mp.mpf("1.0674")) < mp.mpf("1e-3"), z_star

    h_at_b = big_h(b_star)

    # diagonal values below the threshold
    diag = {}
    diag_pts = [mp.mpf(1), mp.mpf("1.5"), mp.mpf(2), mp.mpf("2.5")]
    for p in diag_pts:
        val, err = exp_kernel(p, b_star, h_at_b, 2000)
        check(err, val, ("diag", p))
        diag[p] = val
        print(f"[{time.time()-t0:7.1f}s] diag {float(p)}: {fmt(val)} (est {mp.nstr(err, 3)})", flush=True)
    diag[b_star] = h_at_b

    # floor-only baseline (no sell decision, wait for the floor)
    base = {}
    for p, trunc, n in [
        (mp.mpf(2), TRUNC_NEAR, 4000),
        (mp.mpf("2.5"), TRUNC_NEAR, 4000),
        (mp.mpf(3), TRUNC_NEAR, 4000),
        (b_star, TRUNC_NEAR, 4000),
        (mp.mpf(5), TRUNC_FAR, 12000),
        (mp.mpf(20), TRUNC_FAR, 8000),
    ]:
        val, err = exp_kernel(p, trunc, mp.mpf(0), n)
        check(err, val, ("base", p))
        base[p] = val
        print(f"[{time.time()-t0:7.1f}s] base {float(p)}: {fmt(val)} (est {mp.nstr(err, 3)})", flush=True)

    # truncation cleanliness: dropped tail is far below the report precision
    j_2_near = hazard_only(2, TRUNC_NEAR, 2000)
    rel_near = mp.e ** (-j_2_near) * base[mp.mpf(20)] / base[mp.mpf(2)]
    assert rel_near < mp.mpf("1e-14"), rel_near
    j_20_far = hazard_only(20, TRUNC_FAR, 2000)
    rel_far = mp.e ** (-j_20_far) * big_h(TRUNC_FAR) / base[mp.mpf(20)]
    assert rel_far < mp.mpf("1e-14"), rel_far

    # gluing consistency: integrate to 20 and append the discounted tail
    g5_direct = base[mp.mpf(5)]
    g5_short, _ = exp_kernel(5, TRUNC_NEAR, mp.mpf(0), 2000)
    j_5_near = hazard_only(5, TRUNC_NEAR, 2000)
    g5_glued = g5_short + mp.e ** (-j_5_near) * base[mp.mpf(20)]
    assert abs(g5_glued - g5_direct) < mp.mpf("3e-10") * abs(g5_direct), (g5_glued, g5_direct)
    print(f"[{time.time()-t0:7.1f}s] baseline gluing consistent", flush=True)

    # difference identity: (diag - base) decays at exactly the hazard rate
    j_25_b = hazard_only(mp.mpf("2.5"), b_star, 2000)
    lhs = diag[mp.mpf("2.5")] - base[mp.mpf("2.5")]
    rhs = mp.e ** (-j_25_b) * (h_at_b - base[b_star])
    assert abs(lhs - rhs) < mp.mpf("1e-10") * abs(rhs), (lhs, rhs)
    print(f"[{time.time()-t0:7.1f}s] difference identity holds", flush=True)

    def chord(x, x_bar, top):
        zf = psi(floor_of(x_bar))
        zx, zbar = psi(x), psi(x_bar)
        w1 = (zbar - zx) / (zbar - zf)
        return phi_minus(x) * (h_floor(x_bar) * w1 + top * (1 - w1))

    values = {
        (1.8, 2.0): chord(mp.mpf("1.8"), mp.mpf(2), diag[mp.mpf(2)]),
        (1.5, 2.0): chord(mp.mpf("1.5"), mp.mpf(2), diag[mp.mpf(2)]),
        (2.2, 2.5): chord(mp.mpf("2.2"), mp.mpf("2.5"), diag[mp.mpf("2.5")]),
        (3.5, 3.5): reward(mp.mpf("3.5")),
    }
    b_frozen_30 = solve_threshold(floor_of(mp.mpf(3)))
    values[(2.2, 3.0)] = value_fixed(mp.mpf("2.2"), floor_of(mp.mpf(3)), b_frozen_30)

    base_offdiag_2_25 = chord(mp.mpf(2), mp.mpf("2.5"), base[mp.mpf("2.5")])

    # premium below the threshold, with the value-minus-baseline identity
    x, x_bar = mp.mpf(2), mp.mpf("2.5")
    zf = psi(floor_of(x_bar))
    w2 = (psi(x) - zf) / (psi(x_bar) - zf)
    j_xbar_b = hazard_only(x_bar, b_star, 2000)
    gap_b = reward(b_star) - phi_minus(b_star) * base[b_star]
    p_below = w2 * mp.e ** (log_phi_minus(x) - log_phi_minus(b_star) - j_xbar_b) * gap_b
    ident = chord(x, x_bar, diag[x_bar]) - base_offdiag_2_25
    assert abs(p_below - ident) < mp.mpf("1e-10") * abs(p_below), (p_below, ident)
    print(f"[{time.time()-t0:7.1f}s] premium below: {fmt(p_below)}", flush=True)

    # premium above the threshold (floor frozen, price inside the window)
    x, x_bar = mp.mpf("2.2"), mp.mpf(3)
    zf = psi(floor_of(x_bar))
    g_at_b30 = chord(b_frozen_30, x_bar, base[x_bar])
    weight = (psi(x) - zf) / (psi(b_frozen_30) - zf)
    p_above = weight * mp.e ** (log_phi_minus(x) - log_phi_minus(b_frozen_30)) * (
        reward(b_frozen_30) - g_at_b30
    )
    ident = values[(2.2, 3.0)] - chord(x, x_bar, base[x_bar])
    assert abs(p_above - ident) < mp.mpf("1e-10") * abs(p_above), (p_above, ident)
    print(f"[{time.time()-t0:7.1f}s] premium above: {fmt(p_above)}", flush=True)

    p_diag_20 = reward(mp.mpf(20)) - phi_minus(20) * base[mp.mpf(20)]
    ratio_20 = p_diag_20 / 20
    assert mp.mpf("0.25") < ratio_20 < mp.mpf("0.32"), ratio_20
    print(f"[{time.time()-t0:7.1f}s] premium ratio at 20: {fmt(ratio_20)}", flush=True)

    # entry level for the buy side, discounting at the same rate
    def a_of(x):
        val, err = exp_kernel(x, b_star, h_at_b, 1200)
        check(err, val, ("entry diag", x))
        return val

    def entry_obj_deriv(x):
        a_val = a_of(x)
        return (
            kappa(x) * (a_val - h_floor(x))
            - big_h_deriv_x(x)
            + ENTRY_COST * dlog_phi_minus(x) * mp.e ** (-log_phi_minus(x))
        )

    b_entry = mp.findroot(entry_obj_deriv, mp.mpf("1.95"), tol=mp.mpf("1e-22"), maxsteps=40)
    b_entry_again = mp.findroot(entry_obj_deriv, mp.mpf("1.8"), tol=mp.mpf("1e-22"), maxsteps=40)
    assert abs(b_entry - b_entry_again) < mp.mpf("1e-10"), (b_entry, b_entry_again)
    assert entry_obj_deriv(b_entry - mp.mpf("0.01")) > 0 > entry_obj_deriv(b_entry + mp.mpf("0.01"))
    assert abs(b_entry - mp.mpf("1.9488")) < mp.mpf("1e-3"), b_entry
    z_entry = psi(b_entry)
    assert abs(z_entry - mp.mpf("0.5441")) < mp.mpf("1e-3"), z_entry
    print(f"[{time.time()-t0:7.1f}s] entry threshold {fmt(b_entry)}", flush=True)

    def entry_h1(x, a_val):
        return a_val - big_h(x) - ENTRY_COST * mp.e ** (-log_phi_minus(x))

    h1_at_entry = entry_h1(b_entry, a_of(b_entry))
    assert h1_at_entry > 0
    for probe in [b_entry - mp.mpf("0.3"), b_entry + mp.mpf("0.3")]:
        assert entry_h1(probe, a_of(probe)) < h1_at_entry

    entry_values = {
        1.0: phi_minus(1) * entry_h1(mp.mpf(1), diag[mp.mpf(1)]),
        2.5: phi_minus(mp.mpf("2.5")) * h1_at_entry,
    }
    print(f"[{time.time()-t0:7.1f}s] entry values done", flush=True)

    out = io.StringIO()
    out.write('"""Pinned reference values for the trailing-floor solver tests.\n\n')
    out.write("Generated by tools/gen_trailing_references.py; do not edit by hand.\n")
    out.write('"""\n\n')
    out.write(f"TRAILING_THRESHOLD = {fmt(b_star)}\n")
    out.write(f"PSI_AT_TRAILING_THRESHOLD = {fmt(z_star)}\n\n")
    out.write("# max level -> transformed value at a fresh max\n")
    out.write("TRAILING_DIAGONAL = {\n")
    for p, val in diag.items():
        out.write(f"    {fmt(p)}: {fmt(val)},\n")
    out.write("}\n\n")
    out.write("# (price, max) -> value of the optimal sell rule\n")
    out.write("TRAILING_VALUES = {\n")
    for key, val in values.items():
        out.write(f"    {key}: {fmt(val)},\n")
    out.write("}\n\n")
    out.write("# max level -> transformed floor-only baseline at a fresh max\n")
    out.write("FLOOR_ONLY_DIAGONAL = {\n")
    for p, val in base.items():
        out.write(f"    {fmt(p)}: {fmt(val)},\n")
    out.write("}\n\n")
    out.write(f"FLOOR_ONLY_OFFDIAG_2_25 = {fmt(base_offdiag_2_25)}\n\n")
    out.write(f"PREMIUM_BELOW_THRESHOLD_2_25 = {fmt(p_below)}\n")
    out.write(f"PREMIUM_ABOVE_THRESHOLD_22_30 = {fmt(p_above)}\n")
    out.write(f"PREMIUM_DIAG_AT_20 = {fmt(p_diag_20)}\n")
    out.write(f"PREMIUM_RATIO_AT_20 = {fmt(ratio_20)}\n\n")
    out.write(f"ENTRY_THRESHOLD = {fmt(b_entry)}\n")
    out.write(f"PSI_AT_ENTRY_THRESHOLD = {fmt(z_entry)}\n")
    out.write("# price -> value of the optimal entry rule\n")
    out.write("ENTRY_VALUES = {\n")
    for key, val in entry_values.items():
        out.write(f"    {key}: {fmt(val)},\n")
    out.write("}\n\n")
    out.write(f"DRAWDOWN_USED = {fmt(DRAWDOWN)}\n")
    out.write(f"ENTRY_COST_USED = {fmt(ENTRY_COST)}\n")

    with open(OUT_PATH, "w") as fh:
        fh.write(out.getvalue())
    print(f"[{time.time()-t0:7.1f}s] wrote {os.path.abspath(OUT_PATH)}", flush=True)


if __name__ == "__main__":
    main()
