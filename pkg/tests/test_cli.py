import csv
import io
import math
import textwrap
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path

import pytest

from trailstop import AssumptionError, cli
from trailstop.report import fmt

SWITCH_X = 2.587375789303333
SWITCH_Z = 0.9474293694625457
SELL_THRESHOLD = 2.884463136217666
SELL_THRESHOLD_Z = 1.0674036356240121
ENTRY_THRESHOLD = 1.9488307667488003
ENTRY_THRESHOLD_Z = 0.5441261940599932
PREMIUM_RATIO_AT_20 = 0.2989814684535531

QUICK = textwrap.dedent(
    """
    [model]
    backend = "exp_ou"
    lam = 0.6
    theta = 1.0
    sigma = 0.2

    [reward]
    kind = "linear"

    [rates]
    q = 0.05
    qhat = 0.05

    [costs]
    c0 = 0.02
    c = 0.04

    [floor]
    kind = "percentage"
    alpha = 0.3

    [grids]
    x_lo = 1.0
    x_hi = 20.0
    resolution = 40

    [output]
    directory = "out"
    format = "csv"
    """
)

VERIFY_POINTS = textwrap.dedent(
    """
    [mc]
    dt = 0.001
    horizon = 185.0
    seed = 20240817
    n_paths = 5000

    [[mc.points]]
    family = "exit"
    x = 2.0
    lower = 1.5
    upper = 2.5

    [[mc.points]]
    family = "fixed_value"
    x = 2.0
    lower = 1.5

    [[mc.points]]
    family = "trailing_value"
    x = 2.0
    max = 2.0

    [[mc.points]]
    family = "floor_baseline"
    x = 2.0
    max = 2.0

    [[mc.points]]
    family = "premium"
    x = 2.0
    max = 2.0
    """
)


def run_cli(args):
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = cli.main(args)
    return code, out.getvalue(), err.getvalue()


def write_cfg(directory: Path, text: str, name: str = "run.toml") -> str:
    path = directory / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def read_rows(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, list(reader)


# ---------------------------------------------------------------- solve


@pytest.fixture(scope="module")
def solve_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("solve")
    cfg = write_cfg(base, QUICK.replace('format = "csv"', 'format = "csv"\nfixed_table = true'))
    code, out, err = run_cli(["solve", "--config", cfg, "--out", str(base / "out")])
    return code, out, err, base / "out"


def test_solve_exits_zero_and_prints_thresholds(solve_run):
    code, out, _, _ = solve_run
    assert code == 0
    assert f"sell_threshold = {fmt(SELL_THRESHOLD)}" in out
    assert f"entry_threshold = {fmt(ENTRY_THRESHOLD)}" in out
    assert "never_liquidate = false" in out
    assert "no_entry = false" in out


def test_solve_csv_carries_the_solution(solve_run):
    *_, outdir = solve_run
    header, rows = read_rows(outdir / "solve.csv")
    assert header == ["quantity", "value"]
    got = dict(rows)
    for name, want in [
        ("reward_switch_x", SWITCH_X),
        ("reward_switch_z", SWITCH_Z),
        ("sell_threshold", SELL_THRESHOLD),
        ("sell_threshold_z", SELL_THRESHOLD_Z),
        ("entry_threshold", ENTRY_THRESHOLD),
        ("entry_threshold_z", ENTRY_THRESHOLD_Z),
    ]:
        assert float(got[name]) == pytest.approx(want, rel=1e-9)


def test_solve_fixed_table_marks_degenerate_floors(solve_run):
    *_, outdir = solve_run
    header, rows = read_rows(outdir / "fixed_thresholds.csv")
    assert header == ["x_bar", "floor", "sell_threshold", "marker"]
    live = [r for r in rows if r[3] == ""]
    degenerate = [r for r in rows if r[3] == "degenerate"]
    assert live and degenerate
    # a frozen floor above the reward switch forces an immediate sale
    assert all(float(r[1]) >= SWITCH_X for r in degenerate)
    assert all(r[2] == "" for r in degenerate)
    for r in live:
        assert float(r[1]) < SWITCH_X
        assert float(r[2]) > float(r[1])


def test_solve_rejects_misconfigured_drawdown(tmp_path):
    cfg = write_cfg(tmp_path, QUICK.replace("alpha = 0.3", "alpha = 1.2"))
    code, _, err = run_cli(["solve", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 2
    assert "alpha" in err


def test_assumption_failure_exits_three_naming_the_clause(tmp_path, monkeypatch):
    def boom(cfg):
        raise AssumptionError("single convexity switch", "forced by test")

    monkeypatch.setattr(cli, "solve_problem", boom)
    cfg = write_cfg(tmp_path, QUICK)
    code, _, err = run_cli(["solve", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 3
    assert "single convexity switch" in err


# ---------------------------------------------------------------- curves


@pytest.fixture(scope="module")
def curves_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("curves")
    cfg = write_cfg(base, QUICK)
    code, out, err = run_cli(["curves", "--config", cfg, "--out", str(base / "out")])
    assert code == 0
    return base / "out"


CURVE_FILES = {
    "transformed_reward.csv": ["z", "reward_transformed", "value_transformed", "marker"],
    "diagonal_value.csv": ["x", "reward", "value", "marker"],
    "entry_transformed.csv": ["z", "net_gain_transformed", "concave_majorant", "marker"],
    "entry_value.csv": ["x", "net_gain", "value", "marker"],
    "premium.csv": ["x", "premium", "max_loss", "marker"],
}


def test_curves_writes_all_files_with_figures(curves_run):
    for name in CURVE_FILES:
        assert (curves_run / name).is_file()
        assert (curves_run / name.replace(".csv", ".png")).is_file()


@pytest.mark.parametrize("name", sorted(CURVE_FILES))
def test_curve_csv_format(curves_run, name):
    raw = (curves_run / name).read_bytes()
    assert b"\r" not in raw
    raw.decode("utf-8")
    header, rows = read_rows(curves_run / name)
    assert header == CURVE_FILES[name]
    assert len(rows) == 41  # grid plus the pasting row
    col0 = [float(r[0]) for r in rows]
    assert col0 == sorted(col0)
    markers = [r[3] for r in rows]
    assert markers.count("pasting") == 1
    for r in rows:
        for cell in r[:3]:
            # twelve significant digits, stable under reparsing
            assert fmt(float(cell)) == cell


@pytest.mark.parametrize(
    "name, want",
    [
        ("transformed_reward.csv", SELL_THRESHOLD_Z),
        ("diagonal_value.csv", SELL_THRESHOLD),
        ("entry_transformed.csv", ENTRY_THRESHOLD_Z),
        ("entry_value.csv", ENTRY_THRESHOLD),
        ("premium.csv", SELL_THRESHOLD),
    ],
)
def test_pasting_markers_sit_at_the_thresholds(curves_run, name, want):
    _, rows = read_rows(curves_run / name)
    marked = [r for r in rows if r[3] == "pasting"]
    assert len(marked) == 1
    assert float(marked[0][0]) == pytest.approx(want, rel=1e-9)


def test_transformed_value_dominates_reward_before_pasting(curves_run):
    _, rows = read_rows(curves_run / "transformed_reward.csv")
    for z, h, hf, marker in rows:
        z, h, hf = float(z), float(h), float(hf)
        if z < SELL_THRESHOLD_Z:
            assert hf >= h - 1e-9 * max(1.0, abs(h))
        if marker == "pasting":
            assert hf == pytest.approx(h, rel=1e-9)


def test_diagonal_value_pastes_onto_the_reward(curves_run):
    _, rows = read_rows(curves_run / "diagonal_value.csv")
    for x, h, v, _ in rows:
        x, h, v = float(x), float(h), float(v)
        assert v >= h - 1e-9 * max(1.0, abs(h))
        if x >= SELL_THRESHOLD:
            assert v == pytest.approx(h, rel=1e-9)


def test_entry_majorant_is_flat_beyond_pasting(curves_run):
    _, rows = read_rows(curves_run / "entry_transformed.csv")
    tail = None
    for z, net, maj, marker in rows:
        z, net, maj = float(z), float(net), float(maj)
        assert maj >= net - 1e-9 * max(1.0, abs(net))
        if z <= ENTRY_THRESHOLD_Z:
            assert maj == pytest.approx(net, rel=1e-9)
        else:
            tail = maj if tail is None else tail
            assert maj == tail


def test_entry_value_dominates_the_net_gain(curves_run):
    _, rows = read_rows(curves_run / "entry_value.csv")
    for x, net, v, marker in rows:
        x, net, v = float(x), float(net), float(v)
        assert v >= net - 1e-9 * max(1.0, abs(net))
        assert v >= 0.0
        if marker == "pasting":
            assert v == pytest.approx(net, rel=1e-9)


def test_premium_ratio_at_the_grid_end(curves_run):
    _, rows = read_rows(curves_run / "premium.csv")
    x, p = float(rows[-1][0]), float(rows[-1][1])
    assert x == 20.0
    ratio = p / x
    assert 0.25 <= ratio <= 0.32
    assert ratio == pytest.approx(PREMIUM_RATIO_AT_20, rel=1e-9)
    assert float(rows[-1][2]) == pytest.approx(0.3 * 20.0, rel=1e-12)


# ---------------------------------------------------------------- sweep


def test_sweep_rows_and_figure(tmp_path):
    text = QUICK + "\n[sweep]\nparameter = \"alpha\"\nlo = 0.25\nhi = 0.35\nsteps = 3\n"
    cfg = write_cfg(tmp_path, text)
    code, out, _ = run_cli(["sweep", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 0
    header, rows = read_rows(tmp_path / "o" / "sweep.csv")
    assert header == ["alpha", "sell_threshold", "reward_switch_x", "entry_threshold", "marker"]
    assert [float(r[0]) for r in rows] == [0.25, 0.3, 0.35]
    thresholds = [float(r[1]) for r in rows]
    assert thresholds == sorted(thresholds)
    assert float(rows[1][1]) == pytest.approx(SELL_THRESHOLD, rel=1e-9)
    assert all(r[4] == "" for r in rows)
    assert (tmp_path / "o" / "sweep.png").is_file()


def test_sweep_marks_no_entry_rows(tmp_path):
    text = QUICK + "\n[sweep]\nparameter = \"alpha\"\nlo = 0.02\nhi = 0.04\nsteps = 2\n"
    cfg = write_cfg(tmp_path, text)
    code, *_ = run_cli(["sweep", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 0
    _, rows = read_rows(tmp_path / "o" / "sweep.csv")
    assert rows[0][4] == "no_entry"
    assert rows[0][3] == ""
    assert rows[1][4] == ""
    assert float(rows[1][3]) > 0


def test_sweep_without_section_is_rejected(tmp_path):
    cfg = write_cfg(tmp_path, QUICK)
    code, _, err = run_cli(["sweep", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 2
    assert "sweep" in err


# ---------------------------------------------------------------- verify


@pytest.fixture(scope="module")
def verify_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("verify")
    cfg = write_cfg(base, QUICK + VERIFY_POINTS)
    code, out, err = run_cli(["verify", "--config", cfg, "--out", str(base / "out")])
    return cfg, code, out, base


def test_verify_passes_within_three_sigma(verify_run):
    _, code, out, base = verify_run
    assert code == 0
    assert "PASS" in out
    header, rows = read_rows(base / "out" / "verify.csv")
    assert header == ["family", "x", "lower", "upper", "max", "analytic",
                      "estimate", "stderr", "z"]
    assert [r[0] for r in rows] == ["exit_down", "exit_up", "fixed_value",
                                    "trailing_value", "floor_baseline", "premium"]
    assert all(abs(float(r[8])) <= 3.0 for r in rows)
    assert (base / "out" / "verify.png").is_file()


def test_verify_report_is_reproducible_for_a_seed(verify_run):
    cfg, *_, base = verify_run
    first = (base / "out" / "verify.csv").read_bytes()
    code, *_ = run_cli(["verify", "--config", cfg, "--out", str(base / "again")])
    assert code == 0
    assert (base / "again" / "verify.csv").read_bytes() == first
    code, *_ = run_cli(["verify", "--config", cfg, "--out", str(base / "other"),
                        "--seed", "31415"])
    assert code == 0
    assert (base / "other" / "verify.csv").read_bytes() != first


def test_verify_flags_an_inconsistent_analytic_value(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "two_sided_exit", lambda pair, x, y, z: (0.5, 0.5))
    text = QUICK + VERIFY_POINTS.replace("n_paths = 5000", "n_paths = 2000")
    cfg = write_cfg(tmp_path, text)
    code, out, _ = run_cli(["verify", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 1
    assert "FAIL" in out


def test_verify_detects_a_perturbed_sell_threshold():
    """A 5 percent barrier error must fail the value cross-check."""
    from trailstop import (ExpOrnsteinUhlenbeck, FloorSpec, PathConfig,
                           StrategySpec, build_fundamental_pair,
                           linear_reward_transform, simulate_value,
                           solve_trailing_stop)

    model = ExpOrnsteinUhlenbeck(0.6, 1.0, 0.2)
    pair = build_fundamental_pair(model, 0.05)
    sol = solve_trailing_stop(linear_reward_transform(pair, 0.02), FloorSpec.percentage(0.3))
    analytic = sol.value(2.0, 2.0)
    strat = StrategySpec.barrier_or_trailing(
        (2.0, 2.0), barrier=1.05 * sol.threshold, drawdown=0.3, reward_cost=0.02
    )
    cfg = PathConfig(model=model, dt=1e-3, horizon=185.0, seed=20240817, n_paths=100_000)
    est = simulate_value(cfg, strat, 0.05)
    z = (est.mean - analytic) / est.stderr
    # a suboptimal rule cannot beat the optimum, so the miss is one-sided
    assert z < -3.0


def test_verify_without_mc_section_is_rejected(tmp_path):
    cfg = write_cfg(tmp_path, QUICK)
    code, _, err = run_cli(["verify", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == 2
    assert "mc" in err


# ---------------------------------------------------------------- plumbing


def test_seed_override_requires_mc(tmp_path):
    cfg = write_cfg(tmp_path, QUICK)
    code, _, err = run_cli(["solve", "--config", cfg, "--out", str(tmp_path / "o"),
                            "--seed", "7"])
    assert code == 2
    assert "seed" in err


def test_missing_config_file(tmp_path):
    code, _, err = run_cli(["solve", "--config", str(tmp_path / "nope.toml")])
    assert code == 2


def test_invalid_thread_count(tmp_path):
    cfg = write_cfg(tmp_path, QUICK)
    code, _, err = run_cli(["solve", "--config", cfg, "--out", str(tmp_path / "o"),
                            "--threads", "0"])
    assert code == 2


def test_command_is_required():
    with pytest.raises(SystemExit):
        run_cli([])
