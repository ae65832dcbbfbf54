from tiucb.harness.config import ExperimentConfig, load_config, parse_config
from tiucb.harness.runner import RunResult, execute, oracle, run, sweep_window, validate

__all__ = [
    "ExperimentConfig",
    "RunResult",
    "execute",
    "load_config",
    "oracle",
    "parse_config",
    "run",
    "sweep_window",
    "validate",
]
