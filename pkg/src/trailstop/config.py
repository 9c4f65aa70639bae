"""Run configuration: a strict TOML schema with a round-tripping writer.

Every numeric constraint the solver modules enforce is re-checked here at
load time so a bad file fails before any work starts.  Unknown keys are
rejected everywhere; the schema is the contract.
"""

import math
from dataclasses import dataclass, fields
from typing import Optional

import tomli

from .errors import ConfigError

_SWEEPABLE = ("alpha", "sigma", "lam", "c0")
_POINT_FAMILIES = ("exit", "fixed_value", "trailing_value", "floor_baseline", "premium")


@dataclass(frozen=True)
class ModelBlock:
    backend: str = "exp_ou"
    lam: float = 0.6
    theta: float = 1.0
    sigma: float = 0.2
    drift_table: tuple = ()
    vol_table: tuple = ()
    interval: tuple = (0.0, math.inf)
    anchor: float = math.nan


@dataclass(frozen=True)
class RewardBlock:
    kind: str = "linear"
    table: tuple = ()


@dataclass(frozen=True)
class RatesBlock:
    q: float = 0.05
    qhat: float = 0.05


@dataclass(frozen=True)
class CostsBlock:
    c0: float = 0.02
    c: float = 0.04


@dataclass(frozen=True)
class FloorBlock:
    kind: str = "percentage"
    alpha: float = 0.3
    a: float = math.nan


@dataclass(frozen=True)
class GridsBlock:
    x_lo: float = 1.0
    x_hi: float = 20.0
    resolution: int = 120


@dataclass(frozen=True)
class SweepBlock:
    parameter: str = "alpha"
    lo: float = 0.1
    hi: float = 0.4
    steps: int = 7


@dataclass(frozen=True)
class McPoint:
    family: str
    x: float
    max: float = math.nan
    lower: float = math.nan
    upper: float = math.nan


@dataclass(frozen=True)
class McBlock:
    dt: float = 1e-3
    horizon: float = 185.0
    seed: int = 2024
    n_paths: int = 1_000_000
    points: tuple = ()


@dataclass(frozen=True)
class OutputBlock:
    directory: str = "out"
    format: str = "csv"
    fixed_table: bool = False


@dataclass(frozen=True)
class RunConfig:
    model: ModelBlock
    reward: RewardBlock
    rates: RatesBlock
    costs: CostsBlock
    floor: FloorBlock
    grids: GridsBlock
    output: OutputBlock
    sweep: Optional[SweepBlock] = None
    mc: Optional[McBlock] = None


def _check_keys(section: str, raw: dict, allowed) -> None:
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")


def _number(section: str, raw: dict, key: str, default=None):
    if key not in raw:
        if default is None:
            raise ConfigError(f"[{section}] is missing required key '{key}'")
        return default
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"[{section}] key '{key}' must be a number")
    return float(value)


def _integer(section: str, raw: dict, key: str, default=None):
    if key not in raw:
        if default is None:
            raise ConfigError(f"[{section}] is missing required key '{key}'")
        return default
    value = raw[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"[{section}] key '{key}' must be an integer")
    return value


def _table(section: str, raw: dict, key: str) -> tuple:
    pairs = raw.get(key, [])
    if not isinstance(pairs, list):
        raise ConfigError(f"[{section}] key '{key}' must be a list of [x, value] pairs")
    out = []
    for item in pairs:
        if (
            not isinstance(item, list)
            or len(item) != 2
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in item)
        ):
            raise ConfigError(f"[{section}] key '{key}' must be a list of [x, value] pairs")
        out.append((float(item[0]), float(item[1])))
    if out and any(out[i][0] >= out[i + 1][0] for i in range(len(out) - 1)):
        raise ConfigError(f"[{section}] key '{key}' must have strictly increasing x values")
    return tuple(out)


def _parse_model(raw: dict) -> ModelBlock:
    _check_keys(
        "model", raw,
        ("backend", "lam", "theta", "sigma", "drift_table", "vol_table", "interval", "anchor"),
    )
    backend = raw.get("backend", "exp_ou")
    if backend not in ("exp_ou", "generic"):
        raise ConfigError(f"[model] backend must be 'exp_ou' or 'generic', got {backend!r}")
    if backend == "exp_ou":
        lam = _number("model", raw, "lam", 0.6)
        theta = _number("model", raw, "theta", 1.0)
        sigma = _number("model", raw, "sigma", 0.2)
        if lam <= 0 or sigma <= 0:
            raise ConfigError("[model] needs lam > 0 and sigma > 0")
        for key in ("drift_table", "vol_table", "interval", "anchor"):
            if key in raw:
                raise ConfigError(f"[model] key '{key}' only applies to the generic backend")
        return ModelBlock(backend=backend, lam=lam, theta=theta, sigma=sigma)
    drift_table = _table("model", raw, "drift_table")
    vol_table = _table("model", raw, "vol_table")
    if len(drift_table) < 2 or len(vol_table) < 2:
        raise ConfigError("[model] generic backend needs drift_table and vol_table with >= 2 rows")
    if any(v <= 0 for _, v in vol_table):
        raise ConfigError("[model] vol_table values must be positive")
    interval_raw = raw.get("interval", [0.0, math.inf])
    if not (isinstance(interval_raw, list) and len(interval_raw) == 2):
        raise ConfigError("[model] interval must be [lo, hi]")
    lo, hi = float(interval_raw[0]), float(interval_raw[1])
    anchor = _number("model", raw, "anchor")
    if not lo < anchor < hi:
        raise ConfigError(f"[model] anchor {anchor} must lie inside the interval ({lo}, {hi})")
    for key in ("lam", "theta", "sigma"):
        if key in raw:
            raise ConfigError(f"[model] key '{key}' only applies to the exp_ou backend")
    return ModelBlock(
        backend=backend,
        lam=math.nan, theta=math.nan, sigma=math.nan,
        drift_table=drift_table, vol_table=vol_table,
        interval=(lo, hi), anchor=anchor,
    )


def _parse_reward(raw: dict) -> RewardBlock:
    _check_keys("reward", raw, ("kind", "table"))
    kind = raw.get("kind", "linear")
    if kind not in ("linear", "table"):
        raise ConfigError(f"[reward] kind must be 'linear' or 'table', got {kind!r}")
    table = _table("reward", raw, "table")
    if kind == "linear" and table:
        raise ConfigError("[reward] a linear reward takes no table")
    if kind == "table" and len(table) < 3:
        raise ConfigError("[reward] a tabulated reward needs at least 3 rows")
    return RewardBlock(kind=kind, table=table)


def _parse_rates(raw: dict) -> RatesBlock:
    _check_keys("rates", raw, ("q", "qhat"))
    q = _number("rates", raw, "q", 0.05)
    qhat = _number("rates", raw, "qhat", q)
    if q <= 0:
        raise ConfigError("[rates] q must be positive")
    if qhat <= 0:
        raise ConfigError("[rates] qhat must be positive")
    if qhat > q + 1e-15:
        raise ConfigError("[rates] qhat must not exceed q (the search phase discounts no faster)")
    return RatesBlock(q=q, qhat=qhat)


def _parse_costs(raw: dict) -> CostsBlock:
    _check_keys("costs", raw, ("c0", "c"))
    c0 = _number("costs", raw, "c0", 0.02)
    c = _number("costs", raw, "c", 0.04)
    if c0 < 0 or c < 0:
        raise ConfigError("[costs] c0 and c must be nonnegative")
    return CostsBlock(c0=c0, c=c)


def _parse_floor(raw: dict) -> FloorBlock:
    _check_keys("floor", raw, ("kind", "alpha", "a"))
    kind = raw.get("kind", "percentage")
    if kind not in ("percentage", "absolute"):
        raise ConfigError(f"[floor] kind must be 'percentage' or 'absolute', got {kind!r}")
    if kind == "percentage":
        if "a" in raw:
            raise ConfigError("[floor] key 'a' only applies to the absolute floor")
        alpha = _number("floor", raw, "alpha", 0.3)
        if not 0.0 < alpha < 1.0:
            raise ConfigError(f"[floor] alpha must lie in (0, 1), got {alpha}")
        return FloorBlock(kind=kind, alpha=alpha)
    if "alpha" in raw:
        raise ConfigError("[floor] key 'alpha' only applies to the percentage floor")
    a = _number("floor", raw, "a")
    if a <= 0:
        raise ConfigError(f"[floor] a must be positive, got {a}")
    return FloorBlock(kind=kind, alpha=math.nan, a=a)


def _parse_grids(raw: dict) -> GridsBlock:
    _check_keys("grids", raw, ("x_lo", "x_hi", "resolution"))
    x_lo = _number("grids", raw, "x_lo", 1.0)
    x_hi = _number("grids", raw, "x_hi", 20.0)
    resolution = _integer("grids", raw, "resolution", 120)
    if not 0 < x_lo < x_hi:
        raise ConfigError(f"[grids] needs 0 < x_lo < x_hi, got ({x_lo}, {x_hi})")
    if resolution < 2:
        raise ConfigError(f"[grids] resolution must be at least 2, got {resolution}")
    return GridsBlock(x_lo=x_lo, x_hi=x_hi, resolution=resolution)


def _parse_sweep(raw: dict) -> SweepBlock:
    _check_keys("sweep", raw, ("parameter", "lo", "hi", "steps"))
    parameter = raw.get("parameter")
    if parameter not in _SWEEPABLE:
        raise ConfigError(f"[sweep] parameter must be one of {_SWEEPABLE}, got {parameter!r}")
    lo = _number("sweep", raw, "lo")
    hi = _number("sweep", raw, "hi")
    steps = _integer("sweep", raw, "steps")
    if not lo < hi:
        raise ConfigError(f"[sweep] needs lo < hi, got ({lo}, {hi})")
    if steps < 2:
        raise ConfigError(f"[sweep] steps must be at least 2, got {steps}")
    if parameter == "alpha" and not (0.0 < lo and hi < 1.0):
        raise ConfigError("[sweep] alpha range must stay inside (0, 1)")
    if parameter in ("sigma", "lam") and lo <= 0.0:
        raise ConfigError(f"[sweep] {parameter} range must be positive")
    if parameter == "c0" and lo < 0.0:
        raise ConfigError("[sweep] c0 range must be nonnegative")
    return SweepBlock(parameter=parameter, lo=lo, hi=hi, steps=steps)


def _parse_point(idx: int, raw: dict) -> McPoint:
    section = f"mc.points[{idx}]"
    _check_keys(section, raw, ("family", "x", "max", "lower", "upper"))
    family = raw.get("family")
    if family not in _POINT_FAMILIES:
        raise ConfigError(f"[{section}] family must be one of {_POINT_FAMILIES}, got {family!r}")
    x = _number(section, raw, "x")
    if x <= 0:
        raise ConfigError(f"[{section}] x must be positive")
    if family == "exit":
        lower = _number(section, raw, "lower")
        upper = _number(section, raw, "upper")
        if not 0 < lower <= x <= upper:
            raise ConfigError(f"[{section}] needs 0 < lower <= x <= upper")
        if "max" in raw:
            raise ConfigError(f"[{section}] 'max' does not apply to exit points")
        return McPoint(family=family, x=x, lower=lower, upper=upper)
    if family == "fixed_value":
        lower = _number(section, raw, "lower")
        if not 0 < lower <= x:
            raise ConfigError(f"[{section}] needs 0 < lower <= x")
        for key in ("max", "upper"):
            if key in raw:
                raise ConfigError(f"[{section}] '{key}' does not apply to fixed_value points")
        return McPoint(family=family, x=x, lower=lower)
    running_max = _number(section, raw, "max")
    if not 0 < x <= running_max:
        raise ConfigError(f"[{section}] needs 0 < x <= max")
    for key in ("lower", "upper"):
        if key in raw:
            raise ConfigError(f"[{section}] '{key}' does not apply to {family} points")
    return McPoint(family=family, x=x, max=running_max)


def _parse_mc(raw: dict) -> McBlock:
    _check_keys("mc", raw, ("dt", "horizon", "seed", "n_paths", "points"))
    dt = _number("mc", raw, "dt", 1e-3)
    horizon = _number("mc", raw, "horizon", 185.0)
    seed = _integer("mc", raw, "seed", 2024)
    n_paths = _integer("mc", raw, "n_paths", 1_000_000)
    if dt <= 0:
        raise ConfigError("[mc] dt must be positive")
    if dt > horizon:
        raise ConfigError(f"[mc] dt {dt} exceeds the horizon {horizon}")
    if n_paths < 1:
        raise ConfigError("[mc] n_paths must be at least 1")
    if not 0 <= seed < 2**64:
        raise ConfigError("[mc] seed must fit an unsigned 64-bit integer")
    points_raw = raw.get("points", [])
    if not isinstance(points_raw, list):
        raise ConfigError("[mc] points must be an array of tables")
    points = tuple(
        _parse_point(i, p) if isinstance(p, dict) else _bad_point(i)
        for i, p in enumerate(points_raw)
    )
    return McBlock(dt=dt, horizon=horizon, seed=seed, n_paths=n_paths, points=points)


def _bad_point(idx: int):
    raise ConfigError(f"[mc.points[{idx}]] must be a table")


def _parse_output(raw: dict) -> OutputBlock:
    _check_keys("output", raw, ("directory", "format", "fixed_table"))
    directory = raw.get("directory", "out")
    if not isinstance(directory, str) or not directory:
        raise ConfigError("[output] directory must be a nonempty string")
    fmt = raw.get("format", "csv")
    if fmt != "csv":
        raise ConfigError(f"[output] only the 'csv' format is supported, got {fmt!r}")
    fixed_table = raw.get("fixed_table", False)
    if not isinstance(fixed_table, bool):
        raise ConfigError("[output] fixed_table must be a boolean")
    return OutputBlock(directory=directory, format=fmt, fixed_table=fixed_table)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a configuration document."""
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"configuration is not valid TOML: {exc}") from exc
    _check_keys(
        "top level", raw,
        ("model", "reward", "rates", "costs", "floor", "grids", "sweep", "mc", "output"),
    )
    for name in raw:
        if not isinstance(raw[name], dict):
            raise ConfigError(f"[{name}] must be a section")
    return RunConfig(
        model=_parse_model(raw.get("model", {})),
        reward=_parse_reward(raw.get("reward", {})),
        rates=_parse_rates(raw.get("rates", {})),
        costs=_parse_costs(raw.get("costs", {})),
        floor=_parse_floor(raw.get("floor", {})),
        grids=_parse_grids(raw.get("grids", {})),
        output=_parse_output(raw.get("output", {})),
        sweep=_parse_sweep(raw["sweep"]) if "sweep" in raw else None,
        mc=_parse_mc(raw["mc"]) if "mc" in raw else None,
    )


def load_config(path: str) -> RunConfig:
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_config(text)


def default_config_path() -> str:
    """Path of the packaged configuration with the worked-example defaults."""
    from importlib import resources

    return str(resources.files(__package__).joinpath("paper.cfg"))


# ---------------------------------------------------------------- writer


def _fmt_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return repr(value)
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, tuple):
        return "[" + ", ".join(_fmt_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize value of type {type(value).__name__}")


def _emit_block(lines, name, block, skip=()):
    lines.append(f"[{name}]")
    for field in fields(block):
        if field.name in skip:
            continue
        value = getattr(block, field.name)
        if isinstance(value, float) and math.isnan(value):
            continue
        if isinstance(value, tuple) and not value:
            continue
        lines.append(f"{field.name} = {_fmt_value(value)}")
    lines.append("")


def serialize_config(cfg: RunConfig) -> str:
    """Render a configuration so that parsing the text reproduces it."""
    lines = []
    model_skip = (
        ("drift_table", "vol_table", "interval", "anchor")
        if cfg.model.backend == "exp_ou"
        else ("lam", "theta", "sigma")
    )
    _emit_block(lines, "model", cfg.model, skip=model_skip)
    _emit_block(lines, "reward", cfg.reward)
    _emit_block(lines, "rates", cfg.rates)
    _emit_block(lines, "costs", cfg.costs)
    _emit_block(lines, "floor", cfg.floor)
    _emit_block(lines, "grids", cfg.grids)
    if cfg.sweep is not None:
        _emit_block(lines, "sweep", cfg.sweep)
    if cfg.mc is not None:
        _emit_block(lines, "mc", cfg.mc, skip=("points",))
        for point in cfg.mc.points:
            lines.append("[[mc.points]]")
            for field in fields(point):
                value = getattr(point, field.name)
                if isinstance(value, float) and math.isnan(value):
                    continue
                lines.append(f"{field.name} = {_fmt_value(value)}")
            lines.append("")
    _emit_block(lines, "output", cfg.output)
    return "\n".join(lines)
