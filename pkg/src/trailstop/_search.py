"""Bracketed maximization and plateau-edge location for the solvers.

The optimizers here assume unimodal objectives (grid scan to bracket, then
golden section).  Threshold selection rules ask for the smallest or largest
maximizer, so after the peak is found the flanks are bisected for the
outermost point still within a tolerance band of the maximum; for a strict
peak this collapses back to the peak itself.
"""

from __future__ import annotations

import math
from typing import Callable, Optional

import numpy as np

from .errors import NoFiniteThresholdError

_INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def geometric_or_linear(lo: float, hi: float, n: int) -> np.ndarray:
    if lo > 0:
        return np.geomspace(lo, hi, n)
    return np.linspace(lo, hi, n)


def golden_max(fn: Callable[[float], float], lo: float, hi: float,
               rel_tol: float = 1e-12, max_iter: int = 200) -> float:
    a, b = lo, hi
    c, d = b - _INV_GOLDEN * (b - a), a + _INV_GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(max_iter):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _INV_GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_GOLDEN * (b - a)
            fd = fn(d)
        if b - a <= rel_tol * (abs(a) + abs(b)):
            break
    return 0.5 * (a + b)


def bracketed_max(fn: Callable[[float], float], grid: np.ndarray,
                  rel_tol: float = 1e-12) -> tuple[float, float]:
    """Peak of a unimodal fn: coarse argmax on the grid, golden refinement."""
    vals = np.array([fn(float(g)) for g in grid])
    i = int(np.argmax(vals))
    lo = float(grid[max(i - 1, 0)])
    hi = float(grid[min(i + 1, len(grid) - 1)])
    if lo == hi:
        return lo, float(vals[i])
    x = golden_max(fn, lo, hi, rel_tol=rel_tol)
    return x, fn(x)


def max_with_expansion(fn: Callable[[float], float], lo: float, hi: float,
                       grow: float = 3.0, max_rounds: int = 40, n: int = 96,
                       what: str = "objective") -> tuple[float, float]:
    """Like bracketed_max, but pushes the right edge out until the peak is interior."""
    for _ in range(max_rounds):
        grid = geometric_or_linear(lo, hi, n)
        vals = np.array([fn(float(g)) for g in grid])
        i = int(np.argmax(vals))
        if i < n - 2:
            x = golden_max(fn, float(grid[max(i - 1, 0)]), float(grid[i + 1]))
            return x, fn(x)
        hi = hi * grow if lo > 0 else lo + (hi - lo) * grow
    raise NoFiniteThresholdError(
        f"the {what} kept increasing out to the search cap; no finite maximizer found"
    )


def parabolic_refine(fn: Callable[[float], float], x0: float,
                     half_width: float, n: int = 21) -> Optional[float]:
    """Vertex of a least-squares parabola through fn near x0.

    Point evaluations of a smooth objective locate its peak only to about
    sqrt(noise/curvature); fitting across a window averages the noise away.
    Returns None when the curvature is indistinguishable from the noise
    (a flat segment) or the vertex escapes the window.
    """
    xs = np.linspace(x0 - half_width, x0 + half_width, n)
    fs = np.array([fn(float(x)) for x in xs])
    t = xs - x0
    design = np.vstack([t * t, t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(design, fs, rcond=None)
    a, b, _ = coef
    noise = float(np.std(design @ coef - fs))
    if a >= 0.0 or abs(a) * half_width * half_width < 30.0 * (noise + 1e-305):
        return None
    vertex = x0 - b / (2.0 * a)
    if abs(vertex - x0) > half_width:
        return None
    return float(vertex)


def refined_max(fn: Callable[[float], float], grid: np.ndarray,
                side: str = "peak") -> tuple[float, float, bool]:
    """Peak location with parabolic refinement, or a plateau edge.

    side picks which maximizer to report when the top is flat: "left" for
    the smallest, "right" for the largest, "peak" for whatever golden
    section returned.  The final flag says whether a plateau was detected.
    """
    x_star, f_star = bracketed_max(fn, grid)
    vertex = parabolic_refine(fn, x_star, 1e-5 * (1.0 + abs(x_star)))
    if vertex is not None:
        return vertex, fn(vertex), False
    level = plateau_level(f_star)
    if side == "left":
        edge = leftmost_within(fn, float(grid[0]), x_star, level)
    elif side == "right":
        edge = rightmost_within(fn, x_star, float(grid[-1]), level)
    else:
        edge = x_star
    return edge, f_star, True


def leftmost_within(fn: Callable[[float], float], lo: float, peak: float,
                    level: float, iters: int = 100) -> float:
    """Smallest x in [lo, peak] with fn(x) >= level, assuming fn rises toward peak."""
    if fn(lo) >= level:
        return lo
    a, b = lo, peak
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if fn(mid) >= level:
            b = mid
        else:
            a = mid
        if b - a <= 1e-13 * (abs(a) + abs(b)) + 1e-300:
            break
    return b


def rightmost_within(fn: Callable[[float], float], peak: float, hi: float,
                     level: float, iters: int = 100) -> float:
    """Largest x in [peak, hi] with fn(x) >= level, assuming fn falls past peak."""
    if fn(hi) >= level:
        return hi
    a, b = peak, hi
    for _ in range(iters):
        mid = 0.5 * (a + b)
        if fn(mid) >= level:
            a = mid
        else:
            b = mid
        if b - a <= 1e-13 * (abs(a) + abs(b)) + 1e-300:
            break
    return a


def plateau_level(peak_value: float) -> float:
    return peak_value - 1e-11 * (1.0 + abs(peak_value))
