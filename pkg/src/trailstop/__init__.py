"""Optimal trading thresholds for linear diffusions under a trailing stop."""

from .config import (
    RunConfig,
    default_config_path,
    load_config,
    parse_config,
    serialize_config,
)
from .diffusion import (
    ExpOrnsteinUhlenbeck,
    FundamentalPair,
    GenericDiffusion,
    RewardTransform,
    build_fundamental_pair,
    build_reward_transform,
    linear_reward_transform,
    passage_down,
    passage_up,
    two_sided_exit,
)
from .errors import (
    AccuracyError,
    AssumptionError,
    ConfigError,
    DegenerateIntervalError,
    DomainError,
    HorizonError,
    IllConditionedFloorError,
    NoFiniteThresholdError,
    NumericFailureError,
    RangeError,
    TrailstopError,
    UnsupportedModelError,
    UnsupportedRewardError,
)
from .fixed_stop import (
    FixedAcquisitionSolution,
    FixedStopSolution,
    solve_fixed_acquisition,
    solve_fixed_stop,
)
from .simulate import (
    ExitEstimate,
    PathConfig,
    SimulationEstimate,
    StrategySpec,
    configure_threads,
    simulate_exit_probabilities,
    simulate_log_terminal_moments,
    simulate_value,
)
from .trailing_stop import (
    FloorSpec,
    TrailingAcquisitionSolution,
    TrailingStopSolution,
    solve_trailing_acquisition,
    solve_trailing_stop,
)

__version__ = "0.1.0"

__all__ = [
    "AccuracyError",
    "AssumptionError",
    "ConfigError",
    "DegenerateIntervalError",
    "DomainError",
    "ExitEstimate",
    "ExpOrnsteinUhlenbeck",
    "FixedAcquisitionSolution",
    "FixedStopSolution",
    "FloorSpec",
    "FundamentalPair",
    "GenericDiffusion",
    "HorizonError",
    "IllConditionedFloorError",
    "NoFiniteThresholdError",
    "NumericFailureError",
    "PathConfig",
    "RangeError",
    "RewardTransform",
    "RunConfig",
    "SimulationEstimate",
    "StrategySpec",
    "TrailingAcquisitionSolution",
    "TrailingStopSolution",
    "TrailstopError",
    "UnsupportedModelError",
    "UnsupportedRewardError",
    "build_fundamental_pair",
    "build_reward_transform",
    "configure_threads",
    "default_config_path",
    "linear_reward_transform",
    "load_config",
    "parse_config",
    "passage_down",
    "passage_up",
    "serialize_config",
    "simulate_exit_probabilities",
    "simulate_log_terminal_moments",
    "simulate_value",
    "solve_fixed_acquisition",
    "solve_fixed_stop",
    "solve_trailing_acquisition",
    "solve_trailing_stop",
    "two_sided_exit",
    "__version__",
]
