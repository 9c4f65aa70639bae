"""Command line front end.

Four subcommands share one TOML configuration:

* ``solve``  prints the thresholds and regime flags and writes them as CSV.
* ``curves`` writes the transformed-reward and value curves with their
  pasting points marked, plus the sell-option premium.
* ``sweep``  re-solves across one parameter range.
* ``verify`` cross-checks the analytic values against Monte Carlo and
  exits nonzero when any z score leaves the 3-sigma band.

Exit codes: 0 success, 1 verify mismatch, 2 bad configuration or domain
input, 3 a standing shape assumption failed, 4 the simulation horizon was
too short, 5 other numeric failure.
"""

import argparse
import math
import sys
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import report
from .config import RunConfig, load_config
from .diffusion import (
    ExpOrnsteinUhlenbeck,
    FundamentalPair,
    GenericDiffusion,
    RewardTransform,
    build_fundamental_pair,
    build_reward_transform,
    linear_reward_transform,
    two_sided_exit,
)
from .errors import (
    AssumptionError,
    ConfigError,
    DomainError,
    HorizonError,
    TrailstopError,
    UnsupportedModelError,
    UnsupportedRewardError,
)
from .fixed_stop import solve_fixed_stop
from .simulate import (
    PathConfig,
    StrategySpec,
    configure_threads,
    simulate_exit_probabilities,
    simulate_value,
)
from .trailing_stop import (
    FloorSpec,
    TrailingAcquisitionSolution,
    TrailingStopSolution,
    solve_trailing_acquisition,
    solve_trailing_stop,
)


def _interp_with_linear_tails(table):
    xs = np.array([p[0] for p in table], dtype=float)
    ys = np.array([p[1] for p in table], dtype=float)
    lo_slope = (ys[1] - ys[0]) / (xs[1] - xs[0])
    hi_slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])

    def fn(x: float) -> float:
        if x <= xs[0]:
            return float(ys[0] + lo_slope * (x - xs[0]))
        if x >= xs[-1]:
            return float(ys[-1] + hi_slope * (x - xs[-1]))
        return float(np.interp(x, xs, ys))

    return fn


def build_model(cfg: RunConfig):
    m = cfg.model
    if m.backend == "exp_ou":
        return ExpOrnsteinUhlenbeck(m.lam, m.theta, m.sigma)
    return GenericDiffusion(
        _interp_with_linear_tails(m.drift_table),
        _interp_with_linear_tails(m.vol_table),
        interval=m.interval,
        anchor=m.anchor,
    )


def build_transform(cfg: RunConfig, pair: FundamentalPair) -> RewardTransform:
    if cfg.reward.kind == "linear":
        return linear_reward_transform(pair, cfg.costs.c0)
    return build_reward_transform(pair, _interp_with_linear_tails(cfg.reward.table))


def build_floor(cfg: RunConfig) -> FloorSpec:
    if cfg.floor.kind == "percentage":
        return FloorSpec.percentage(cfg.floor.alpha)
    return FloorSpec.absolute(cfg.floor.a)


@dataclass
class SolvedProblem:
    """Everything the report commands need, solved once."""

    model: object
    pair: FundamentalPair
    transform: RewardTransform
    trailing: TrailingStopSolution
    acquisition: TrailingAcquisitionSolution


def solve_problem(cfg: RunConfig) -> SolvedProblem:
    model = build_model(cfg)
    pair = build_fundamental_pair(model, cfg.rates.q)
    transform = build_transform(cfg, pair)
    trailing = solve_trailing_stop(transform, build_floor(cfg))
    if cfg.rates.qhat == cfg.rates.q:
        entry_pair = pair
    else:
        entry_pair = build_fundamental_pair(model, cfg.rates.qhat)
    acquisition = solve_trailing_acquisition(trailing, cfg.costs.c, entry_pair)
    return SolvedProblem(model, pair, transform, trailing, acquisition)


# ---------------------------------------------------------------- solve


def cmd_solve(cfg: RunConfig) -> int:
    solved = solve_problem(cfg)
    transform, trailing, acq = solved.transform, solved.trailing, solved.acquisition
    rows = [
        ("reward_switch_x", transform.convexity_switch_x),
        ("reward_switch_z", transform.convexity_switch_z),
        ("reward_sign_change_z", transform.sign_change_z),
        ("sell_threshold", trailing.threshold),
        ("sell_threshold_z", trailing.threshold_transformed),
        ("entry_threshold", acq.entry_threshold),
        ("entry_threshold_z", acq.entry_threshold_transformed),
        ("never_liquidate", trailing.never_liquidate),
        ("no_entry", acq.no_entry),
    ]
    for name, value in rows:
        print(f"{name} = {report.fmt(value)}")
    path = report.outdir_path(cfg.output.directory, "solve.csv")
    report.write_csv(path, ("quantity", "value"), rows)
    print(f"wrote {path}")
    if cfg.output.fixed_table:
        _write_fixed_table(cfg, solved)
    return 0


def _write_fixed_table(cfg: RunConfig, solved: SolvedProblem) -> None:
    """Fixed-stop thresholds seen from each running max, for comparison."""
    xs = np.linspace(cfg.grids.x_lo, cfg.grids.x_hi, cfg.grids.resolution)
    rows = []
    for x_bar in xs:
        floor_level = solved.trailing.clamped_floor(float(x_bar))
        fixed = solve_fixed_stop(solved.transform, floor_level)
        rows.append(
            (
                float(x_bar),
                floor_level,
                None if fixed.degenerate else fixed.threshold,
                "degenerate" if fixed.degenerate else "",
            )
        )
    path = report.outdir_path(cfg.output.directory, "fixed_thresholds.csv")
    report.write_csv(path, ("x_bar", "floor", "sell_threshold", "marker"), rows)
    print(f"wrote {path}")


# ---------------------------------------------------------------- curves


def _sorted_with_pasting(rows, pasting_row):
    """Merge the threshold row into the grid, keeping the sort by column 0."""
    out = list(rows)
    if pasting_row is not None and math.isfinite(pasting_row[0]):
        out.append(pasting_row)
        out.sort(key=lambda r: r[0])
    return out


def cmd_curves(cfg: RunConfig) -> int:
    solved = solve_problem(cfg)
    pair, transform = solved.pair, solved.transform
    trailing, acq = solved.trailing, solved.acquisition
    entry_pair = acq.entry_pair
    xs = np.linspace(cfg.grids.x_lo, cfg.grids.x_hi, cfg.grids.resolution)
    b = trailing.threshold
    outdir = cfg.output.directory
    written = []

    def h_transformed(x: float) -> float:
        return transform.transformed_at_x(x)

    def net_transformed(x: float) -> float:
        return acq.net_gain(x) * math.exp(-entry_pair.log_phi_minus(x))

    # transformed reward and transformed diagonal value against z
    rows = [
        (pair.psi(float(x)), h_transformed(float(x)),
         trailing.diagonal_transformed(float(x)), "")
        for x in xs
    ]
    pasting = None
    if math.isfinite(b):
        pasting = (trailing.threshold_transformed, h_transformed(b),
                   trailing.diagonal_transformed(b), "pasting")
    rows = _sorted_with_pasting(rows, pasting)
    path = report.outdir_path(outdir, "transformed_reward.csv")
    report.write_csv(path, ("z", "reward_transformed", "value_transformed", "marker"), rows)
    zs = [r[0] for r in rows]
    zlim = (0.0, min(max(zs), 2.5 * trailing.threshold_transformed)) if math.isfinite(b) else None
    report.render_lines(
        path[:-4] + ".png",
        [(zs, [r[1] for r in rows], "reward (transformed)", "--"),
         (zs, [r[2] for r in rows], "value at a fresh max (transformed)", "-")],
        xlabel="z", ylabel="H", title="transformed reward vs value",
        markers=[(trailing.threshold_transformed, "pasting")] if math.isfinite(b) else [],
        xlim=zlim,
    )
    written.append(path)

    # reward and diagonal value against price
    rows = [
        (float(x), transform.reward(float(x)), trailing.diagonal_value(float(x)), "")
        for x in xs
    ]
    pasting = None
    if math.isfinite(b):
        pasting = (b, transform.reward(b), trailing.diagonal_value(b), "pasting")
    rows = _sorted_with_pasting(rows, pasting)
    path = report.outdir_path(outdir, "diagonal_value.csv")
    report.write_csv(path, ("x", "reward", "value", "marker"), rows)
    xcol = [r[0] for r in rows]
    xlim = (min(xcol), min(max(xcol), 2.0 * b)) if math.isfinite(b) else None
    report.render_lines(
        path[:-4] + ".png",
        [(xcol, [r[1] for r in rows], "reward", "--"),
         (xcol, [r[2] for r in rows], "value at a fresh max", "-")],
        xlabel="x", ylabel="value", title="sell value along the diagonal",
        markers=[(b, "pasting")] if math.isfinite(b) else [],
        xlim=xlim,
    )
    written.append(path)

    # transformed entry objective and its concave majorant
    b_entry = acq.entry_threshold
    if acq.no_entry:
        majorant_tail = 0.0
    else:
        majorant_tail = net_transformed(b_entry)
    rows = []
    for x in xs:
        x = float(x)
        net_t = net_transformed(x)
        if acq.no_entry:
            maj = 0.0
        elif x <= b_entry:
            maj = net_t
        else:
            maj = majorant_tail
        rows.append((entry_pair.psi(x), net_t, maj, ""))
    pasting = None
    if not acq.no_entry:
        pasting = (acq.entry_threshold_transformed, net_transformed(b_entry),
                   majorant_tail, "pasting")
    rows = _sorted_with_pasting(rows, pasting)
    path = report.outdir_path(outdir, "entry_transformed.csv")
    report.write_csv(path, ("z", "net_gain_transformed", "concave_majorant", "marker"), rows)
    zs = [r[0] for r in rows]
    zlim = None
    if not acq.no_entry:
        zlim = (0.0, min(max(zs), 3.0 * acq.entry_threshold_transformed))
    report.render_lines(
        path[:-4] + ".png",
        [(zs, [r[1] for r in rows], "entry objective (transformed)", "--"),
         (zs, [r[2] for r in rows], "concave majorant", "-")],
        xlabel="z", ylabel="value", title="transformed entry objective",
        markers=[] if acq.no_entry else [(acq.entry_threshold_transformed, "pasting")],
        xlim=zlim,
    )
    written.append(path)

    # entry net gain and the buy-and-trail value against price
    rows = [
        (float(x), acq.net_gain(float(x)), acq.value(float(x)), "")
        for x in xs
    ]
    pasting = None
    if not acq.no_entry:
        pasting = (b_entry, acq.net_gain(b_entry), acq.value(b_entry), "pasting")
    rows = _sorted_with_pasting(rows, pasting)
    path = report.outdir_path(outdir, "entry_value.csv")
    report.write_csv(path, ("x", "net_gain", "value", "marker"), rows)
    xcol = [r[0] for r in rows]
    xlim = None
    if not acq.no_entry and math.isfinite(b):
        xlim = (min(xcol), min(max(xcol), 1.5 * b))
    report.render_lines(
        path[:-4] + ".png",
        [(xcol, [r[1] for r in rows], "net gain of entering now", "--"),
         (xcol, [r[2] for r in rows], "entry value", "-")],
        xlabel="x", ylabel="value", title="buy-then-trail value",
        markers=[] if acq.no_entry else [(b_entry, "pasting")],
        xlim=xlim,
    )
    written.append(path)

    # premium of the sell barrier over waiting for the floor, at fresh maxima
    rows = [
        (float(x), trailing.premium(float(x), float(x)),
         float(x) - trailing.clamped_floor(float(x)), "")
        for x in xs
    ]
    pasting = None
    if math.isfinite(b):
        pasting = (b, trailing.premium(b, b), b - trailing.clamped_floor(b), "pasting")
    rows = _sorted_with_pasting(rows, pasting)
    path = report.outdir_path(outdir, "premium.csv")
    report.write_csv(path, ("x", "premium", "max_loss", "marker"), rows)
    xcol = [r[0] for r in rows]
    report.render_lines(
        path[:-4] + ".png",
        [(xcol, [r[1] for r in rows], "sell-option premium", "-"),
         (xcol, [r[2] for r in rows], "distance to the floor", "--")],
        xlabel="x", ylabel="value", title="premium at a fresh max",
        markers=[(b, "pasting")] if math.isfinite(b) else [],
    )
    written.append(path)

    for path in written:
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------- sweep


def _sweep_solver(cfg: RunConfig):
    """Return fn(value) -> (trailing, acquisition) for the swept parameter."""
    parameter = cfg.sweep.parameter
    if cfg.model.backend != "exp_ou" and parameter in ("sigma", "lam"):
        raise ConfigError(f"sweeping '{parameter}' needs the exp_ou backend")
    if cfg.reward.kind != "linear" and parameter == "c0":
        raise ConfigError("sweeping 'c0' needs the linear reward")

    def full(model_args=None, cost=None, alpha=None):
        if model_args is None:
            model = build_model(cfg)
        else:
            model = ExpOrnsteinUhlenbeck(*model_args)
        pair = build_fundamental_pair(model, cfg.rates.q)
        c0 = cfg.costs.c0 if cost is None else cost
        if cfg.reward.kind == "linear":
            transform = linear_reward_transform(pair, c0)
        else:
            transform = build_transform(cfg, pair)
        floor = build_floor(cfg) if alpha is None else FloorSpec.percentage(alpha)
        trailing = solve_trailing_stop(transform, floor)
        if cfg.rates.qhat == cfg.rates.q:
            entry_pair = pair
        else:
            entry_pair = build_fundamental_pair(model, cfg.rates.qhat)
        acq = solve_trailing_acquisition(trailing, cfg.costs.c, entry_pair)
        return trailing, acq

    m = cfg.model
    if parameter == "alpha":
        if cfg.floor.kind != "percentage":
            raise ConfigError("sweeping 'alpha' needs the percentage floor")
        return lambda v: full(alpha=v)
    if parameter == "sigma":
        return lambda v: full(model_args=(m.lam, m.theta, v))
    if parameter == "lam":
        return lambda v: full(model_args=(v, m.theta, m.sigma))
    return lambda v: full(cost=v)


def cmd_sweep(cfg: RunConfig) -> int:
    if cfg.sweep is None:
        raise ConfigError("the sweep command needs a [sweep] section")
    solver = _sweep_solver(cfg)
    values = np.linspace(cfg.sweep.lo, cfg.sweep.hi, cfg.sweep.steps)
    rows = []
    for v in values:
        trailing, acq = solver(float(v))
        rows.append(
            (
                float(v),
                trailing.threshold,
                trailing.transform.convexity_switch_x,
                None if acq.no_entry else acq.entry_threshold,
                "no_entry" if acq.no_entry else "",
            )
        )
    header = (cfg.sweep.parameter, "sell_threshold", "reward_switch_x",
              "entry_threshold", "marker")
    path = report.outdir_path(cfg.output.directory, "sweep.csv")
    report.write_csv(path, header, rows)
    vcol = [r[0] for r in rows]
    entry = [math.nan if r[3] is None else r[3] for r in rows]
    report.render_lines(
        path[:-4] + ".png",
        [(vcol, [r[1] for r in rows], "sell threshold", "-"),
         (vcol, [r[2] for r in rows], "reward switch", "--"),
         (vcol, entry, "entry threshold", "-.")],
        xlabel=cfg.sweep.parameter, ylabel="price level",
        title=f"thresholds across {cfg.sweep.parameter}",
    )
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------- verify


@dataclass
class _Check:
    label: str
    family: str
    x: float
    lower: Optional[float]
    upper: Optional[float]
    running_max: Optional[float]
    analytic: float
    estimate: float
    stderr: float

    @property
    def z(self) -> float:
        if self.stderr == 0.0:
            return 0.0 if self.estimate == self.analytic else math.inf
        return (self.estimate - self.analytic) / self.stderr


def _verify_checks(cfg: RunConfig, solved_cache: dict) -> list:
    mc = cfg.mc
    q = cfg.rates.q
    c0 = cfg.costs.c0
    model = build_model(cfg)
    pcfg = PathConfig(model=model, dt=mc.dt, horizon=mc.horizon,
                      seed=mc.seed, n_paths=mc.n_paths)
    pair = build_fundamental_pair(model, q)
    transform = build_transform(cfg, pair)

    def trailing() -> TrailingStopSolution:
        if "trailing" not in solved_cache:
            solved_cache["trailing"] = solve_trailing_stop(transform, build_floor(cfg))
        return solved_cache["trailing"]

    def floor_args() -> dict:
        if cfg.floor.kind == "percentage":
            return {"drawdown": cfg.floor.alpha}
        return {"gap": cfg.floor.a}

    value_runs: dict = {}

    def value_run(family: str, x: float, x_bar: float):
        key = (family, x, x_bar)
        if key in value_runs:
            return value_runs[key]
        sol = trailing()
        if family == "trailing_value":
            analytic = sol.value(x, x_bar)
            if sol.never_liquidate:
                strat = StrategySpec.plain_trailing((x, x_bar), reward_cost=c0,
                                                    **floor_args())
            else:
                strat = StrategySpec.barrier_or_trailing(
                    (x, x_bar), barrier=sol.threshold, reward_cost=c0, **floor_args()
                )
        else:
            analytic = sol.floor_only_value(x, x_bar)
            strat = StrategySpec.plain_trailing((x, x_bar), reward_cost=c0,
                                                **floor_args())
        est = simulate_value(pcfg, strat, q)
        value_runs[key] = (analytic, est)
        return value_runs[key]

    checks = []
    for pt in mc.points:
        if pt.family == "exit":
            down, up = two_sided_exit(pair, pt.x, pt.lower, pt.upper)
            est = simulate_exit_probabilities(pcfg, pt.lower, pt.upper, q, pt.x)
            checks.append(_Check(f"exit_down@{pt.x:g}", "exit_down", pt.x,
                                 pt.lower, pt.upper, None, down,
                                 est.down, est.down_stderr))
            checks.append(_Check(f"exit_up@{pt.x:g}", "exit_up", pt.x,
                                 pt.lower, pt.upper, None, up,
                                 est.up, est.up_stderr))
        elif pt.family == "fixed_value":
            fixed = solve_fixed_stop(transform, pt.lower)
            if fixed.degenerate:
                raise ConfigError(
                    f"fixed_value point x={pt.x:g} stops at once for floor "
                    f"{pt.lower:g}; move the floor below the reward switch"
                )
            strat = StrategySpec.fixed_two_sided((pt.x, pt.x), pt.lower,
                                                 fixed.threshold, reward_cost=c0)
            est = simulate_value(pcfg, strat, q)
            checks.append(_Check(f"fixed_value@{pt.x:g}", "fixed_value", pt.x,
                                 pt.lower, fixed.threshold, None,
                                 fixed.value(pt.x), est.mean, est.stderr))
        elif pt.family in ("trailing_value", "floor_baseline"):
            analytic, est = value_run(pt.family, pt.x, pt.max)
            checks.append(_Check(f"{pt.family}@{pt.x:g}", pt.family, pt.x,
                                 None, None, pt.max, analytic,
                                 est.mean, est.stderr))
        else:
            v_analytic, v_est = value_run("trailing_value", pt.x, pt.max)
            g_analytic, g_est = value_run("floor_baseline", pt.x, pt.max)
            sol = trailing()
            checks.append(_Check(
                f"premium@{pt.x:g}", "premium", pt.x, None, None, pt.max,
                sol.premium(pt.x, pt.max),
                v_est.mean - g_est.mean,
                math.hypot(v_est.stderr, g_est.stderr),
            ))
    return checks


def cmd_verify(cfg: RunConfig) -> int:
    if cfg.mc is None or not cfg.mc.points:
        raise ConfigError("the verify command needs an [mc] section with points")
    if cfg.reward.kind != "linear":
        raise ConfigError("verify supports the linear reward only")
    checks = _verify_checks(cfg, {})
    rows = []
    for c in checks:
        rows.append((c.family, c.x, c.lower, c.upper, c.running_max,
                     c.analytic, c.estimate, c.stderr, c.z))
        print(f"{c.label}: analytic={c.analytic:.12g} mc={c.estimate:.12g} "
              f"stderr={c.stderr:.3g} z={c.z:+.2f}")
    path = report.outdir_path(cfg.output.directory, "verify.csv")
    report.write_csv(
        path,
        ("family", "x", "lower", "upper", "max", "analytic", "estimate",
         "stderr", "z"),
        rows,
    )
    report.render_zscores(path[:-4] + ".png", [c.label for c in checks],
                          [c.z for c in checks])
    print(f"wrote {path}")
    ok = all(abs(c.z) <= 3.0 for c in checks)
    print(f"verify: {'PASS' if ok else 'FAIL'} "
          f"({len(checks)} checks, 3 sigma gate)")
    return 0 if ok else 1


# ---------------------------------------------------------------- main


_DISPATCH = {
    "solve": cmd_solve,
    "curves": cmd_curves,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trailstop",
        description="thresholds, curves and Monte Carlo checks for "
                    "trading rules with a trailing stop",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("solve", "print and save the optimal thresholds"),
        ("curves", "save the value and premium curves with pasting markers"),
        ("sweep", "re-solve across one parameter range"),
        ("verify", "cross-check analytic values against Monte Carlo"),
    ]:
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True, help="TOML configuration file")
        s.add_argument("--out", help="output directory (overrides the config)")
        s.add_argument("--seed", type=int, help="simulation seed (overrides the config)")
        s.add_argument("--threads", type=int, help="worker threads (overrides TRAILSTOP_THREADS)")
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.out is not None:
        cfg = replace(cfg, output=replace(cfg.output, directory=args.out))
    if args.seed is not None:
        if cfg.mc is None:
            raise ConfigError("--seed given but the config has no [mc] section")
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must fit an unsigned 64-bit integer")
        cfg = replace(cfg, mc=replace(cfg.mc, seed=args.seed))
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg = _apply_overrides(cfg, args)
        configure_threads(args.threads)
        return _DISPATCH[args.command](cfg)
    except ConfigError as exc:
        print(f"bad configuration: {exc}", file=sys.stderr)
        return 2
    except AssumptionError as exc:
        print(str(exc), file=sys.stderr)
        return 3
    except (DomainError, UnsupportedModelError, UnsupportedRewardError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except HorizonError as exc:
        print(f"horizon too short: {exc}", file=sys.stderr)
        return 4
    except TrailstopError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
