"""Generate pinned reference values for the single-floor solver tests.

Everything is brute force at high precision: thresholds come from dense
grid scans refined by golden section on mpmath numbers, values from the
closed-form transform identities, with no reuse of the library's search or
pasting logic.  Self-checks assert the secant/derivative sandwich at every
reported threshold before anything is emitted.

Run from the repo root:  python3 tools/gen_solver_references.py
(appends nothing; writes tests/fixed_stop_references.py)
"""

from __future__ import annotations

import io
import os

import mpmath as mp

from gen_reference_values import LAM, THETA, SIGMA, Q, C0, log_phi_minus, log_phi_plus, log_psi, fmt

OUT_PATH = os.path.join(os.path.dirname(__file__), "..", "tests", "fixed_stop_references.py")

X_SWITCH = mp.mpf("2.587375789303332538099")  # root of the generator residual


def reward(x):
    return x - C0


def big_h(x, q=Q):
    """H at z = psi(x), parametrized by the price."""
    return reward(x) * mp.e ** (-log_phi_minus(x, q))


def psi(x, q=Q):
    return mp.e ** (log_psi(x, q))


def golden_max(fn, lo, hi, iters=140):
    """Golden-section maximum of a unimodal fn on [lo, hi]."""
    inv = (mp.sqrt(5) - 1) / 2
    a, b = mp.mpf(lo), mp.mpf(hi)
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            fd = fn(d)
    return (a + b) / 2


def grid_argmax(fn, lo, hi, n=600):
    xs = [lo * (hi / lo) ** (mp.mpf(i) / (n - 1)) for i in range(n)]
    vals = [fn(x) for x in xs]
    i = max(range(n), key=lambda k: vals[k])
    lo_b = xs[max(i - 1, 0)]
    hi_b = xs[min(i + 1, n - 1)]
    return golden_max(fn, lo_b, hi_b)


def solve_threshold(y):
    """b(y): maximizer of the secant slope of H past the convexity switch."""
    if y == 0:
        zy, hy = mp.mpf(0), mp.mpf(0)
    else:
        zy, hy = psi(y), big_h(y)

    def slope(x):
        return (big_h(x) - hy) / (psi(x) - zy)

    b = grid_argmax(slope, X_SWITCH * (1 + mp.mpf("1e-8")), mp.mpf(60))
    # sandwich check: the secant slope at the maximum matches H'
    s = slope(b)
    hprime = mp.diff(lambda t: big_h(t), b) / mp.diff(lambda t: psi(t), b)
    assert abs(hprime - s) < mp.mpf("1e-12") * (1 + abs(s)), (y, b, hprime, s)
    return b


def value_fixed(x, y, b):
    if y > 0 and psi(y) >= psi(X_SWITCH):
        return reward(x)
    zy = psi(y) if y > 0 else mp.mpf(0)
    hy = big_h(y) if y > 0 else mp.mpf(0)
    if x >= b or (y > 0 and x <= y):
        return reward(x)
    s = (big_h(b) - hy) / (psi(b) - zy)
    return mp.e ** log_phi_minus(x) * (hy + s * (psi(x) - zy))


def premium_fixed(x, y, b):
    degenerate = b is None or psi(y) >= psi(X_SWITCH)
    if not degenerate and y < x < b:
        zy, zb, zx = psi(y), psi(b), psi(x)
        return mp.e ** log_phi_minus(x) * (big_h(b) - big_h(y)) * (zx - zy) / (zb - zy)
    return reward(x) - reward(y) * mp.e ** (log_phi_minus(x) - log_phi_minus(y))


def acquisition_window(y, b, cost, q_entry):
    """Brute-force entry window for the buy-then-liquidate problem."""

    def net(x):
        return value_fixed(x, y, b) - reward(x) - cost

    def k_of(x):
        return net(x) * mp.e ** (-log_phi_minus(x, q_entry))

    def ratio(x):
        return k_of(x) / psi(x, q_entry)

    eps = mp.mpf("1e-7")
    x_hi = grid_argmax(k_of, y * (1 + eps), b * (1 - eps))
    x_lo = grid_argmax(ratio, y * (1 + eps), x_hi)
    assert y < x_lo <= x_hi < b, (y, x_lo, x_hi, b)
    assert k_of(x_hi) > 0
    return x_lo, x_hi


def entry_value(x, y, b, cost, q_entry, x_lo, x_hi):
    def net(t):
        return value_fixed(t, y, b) - reward(t) - cost

    if x < x_lo:
        return net(x_lo) * mp.e ** (log_phi_plus(x, q_entry) - log_phi_plus(x_lo, q_entry))
    if x > x_hi:
        return net(x_hi) * mp.e ** (log_phi_minus(x, q_entry) - log_phi_minus(x_hi, q_entry))
    return net(x)


def main():
    mp.mp.dps = 40

    floors = [mp.mpf(0), mp.mpf("0.8"), mp.mpf("1.5"), mp.mpf("2.0")]
    thresholds = {y: solve_threshold(y) for y in floors}
    for y1, y2 in zip(floors, floors[1:]):
        assert thresholds[y1] >= thresholds[y2] - mp.mpf("1e-20")

    value_samples = [
        (mp.mpf("2.0"), mp.mpf("1.5")),
        (mp.mpf("2.8"), mp.mpf("0.8")),
        (mp.mpf("1.0"), mp.mpf("0.8")),
        (mp.mpf("2.0"), mp.mpf(0)),
        (mp.mpf("4.5"), mp.mpf("1.5")),
    ]
    premium_samples = [
        (mp.mpf("2.0"), mp.mpf("1.5")),
        (mp.mpf("3.2"), mp.mpf("1.5")),
        (mp.mpf("2.0"), mp.mpf("0.8")),
        (mp.mpf("2.9"), mp.mpf("2.7")),
    ]

    buf = io.StringIO()
    buf.write('"""Pinned values for the single-floor solver, generated by\n')
    buf.write("tools/gen_solver_references.py.  Do not edit by hand.\n")
    buf.write('"""\n\n')

    buf.write("# {floor: threshold}; floor 0.0 means the floor sits at the boundary\n")
    buf.write("FIXED_THRESHOLDS = {\n")
    for y in floors:
        buf.write(f"    {fmt(y, 4)}: {fmt(thresholds[y])},\n")
    buf.write("}\n\n")

    buf.write("# {(x, floor): value}\n")
    buf.write("FIXED_VALUES = {\n")
    for x, y in value_samples:
        b = thresholds[y]
        buf.write(f"    ({fmt(x, 4)}, {fmt(y, 4)}): {fmt(value_fixed(x, y, b))},\n")
    buf.write("}\n\n")

    buf.write("# {(x, floor): premium of the threshold rule over stopping at the floor}\n")
    buf.write("FIXED_PREMIUMS = {\n")
    for x, y in premium_samples:
        degenerate = psi(y) >= psi(X_SWITCH)
        b = None if degenerate else thresholds.get(y, None) or solve_threshold(y)
        buf.write(f"    ({fmt(x, 4)}, {fmt(y, 4)}): {fmt(premium_fixed(x, y, b))},\n")
    buf.write("}\n\n")

    y_acq = mp.mpf("1.5")
    b_acq = thresholds[y_acq]
    cost = mp.mpf("0.04")
    x_lo, x_hi = acquisition_window(y_acq, b_acq, cost, Q)
    buf.write("# entry window and entry values at floor 1.5, entry cost 0.04, same rate\n")
    buf.write(f"ACQ_SAME_RATE_LOWER = {fmt(x_lo)}\n")
    buf.write(f"ACQ_SAME_RATE_UPPER = {fmt(x_hi)}\n")
    buf.write("ACQ_SAME_RATE_VALUES = {\n")
    for x in [mp.mpf("1.6"), mp.mpf("2.0"), mp.mpf("2.6")]:
        v = entry_value(x, y_acq, b_acq, cost, Q, x_lo, x_hi)
        buf.write(f"    {fmt(x, 4)}: {fmt(v)},\n")
    buf.write("}\n\n")

    q_entry = mp.mpf("0.03")
    x_lo2, x_hi2 = acquisition_window(y_acq, b_acq, cost, q_entry)
    buf.write("# same but discounting the entry phase at rate 0.03\n")
    buf.write(f"ACQ_SLOW_RATE_LOWER = {fmt(x_lo2)}\n")
    buf.write(f"ACQ_SLOW_RATE_UPPER = {fmt(x_hi2)}\n")

    with open(OUT_PATH, "w") as fh:
        fh.write(buf.getvalue())
    print("wrote", os.path.normpath(OUT_PATH))
    for y in floors:
        print(f"  b({float(y)}) = {fmt(thresholds[y], 18)}")
    print(f"  entry window same rate: [{fmt(x_lo, 18)}, {fmt(x_hi, 18)}]")
    print(f"  entry window q=0.03:    [{fmt(x_lo2, 18)}, {fmt(x_hi2, 18)}]")


if __name__ == "__main__":
    main()
