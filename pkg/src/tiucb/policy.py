"""TI-UCB: trend-extrapolating UCB with two-window change detection and reset."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from tiucb.core import ArmState, Policy, RewardSample
from tiucb.errors import ConfigurationError
from tiucb.estimator import TrendAccumulator, predict_next

__all__ = [
    "TiUcbParams",
    "TiUcbPolicy",
    "TiUcbState",
    "default_gamma",
    "observe_and_detect",
    "select",
    "ucb_index",
]


def default_gamma(omega: int, delta: float) -> float:
    """Largest detection threshold for which a stable arm triggers with probability <= delta."""
    if omega < 2:
        raise ConfigurationError(f"omega must be >= 2, got {omega}")
    if not 0.0 < delta < 1.0:
        raise ConfigurationError(f"delta must lie in (0, 1), got {delta}")
    spread = 14.0 + 12.0 / abs(omega - 1)
    return math.sqrt((2.0 / omega) * spread**2 * math.log(2.0 / delta))


@dataclass(frozen=True)
class TiUcbParams:
    delta: float
    omega: int = 100
    gamma: float = 0.3
    exploration_scale: float = 16.0

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError(f"delta must lie in (0, 1), got {self.delta}")
        if self.omega < 1:
            raise ConfigurationError(f"omega must be >= 1, got {self.omega}")
        if self.gamma <= 0 or self.exploration_scale <= 0:
            raise ConfigurationError("gamma and exploration_scale must be positive")
        if self.omega >= 2 and self.gamma > default_gamma(self.omega, self.delta):
            warnings.warn(
                f"gamma={self.gamma} exceeds the admissible bound "
                f"{default_gamma(self.omega, self.delta):.4g} for omega={self.omega}, delta={self.delta}",
                stacklevel=3,
            )

    @classmethod
    def for_horizon(cls, horizon: int, **overrides) -> "TiUcbParams":
        if overrides.get("delta") is None:
            # delta must stay strictly below 1 even for horizon 1
            overrides["delta"] = 1.0 / max(horizon, 2)
        return cls(**overrides)

    def bonus(self, n: int) -> float:
        return self.exploration_scale * math.sqrt(2.0 * math.log(1.0 / self.delta) / n)


def ucb_index(arm: ArmState | TrendAccumulator, params: TiUcbParams) -> float:
    n = len(arm.values)
    if n == 0:
        return math.inf
    if n == 1:
        mu = arm.values[0]
    elif isinstance(arm, TrendAccumulator):
        mu = arm.predict_next()
    else:
        mu = predict_next(arm.observations)
    return mu + params.bonus(n)


@dataclass
class TiUcbState:
    arms: list[TrendAccumulator]
    last_reset: list[int]
    detections: list[tuple[int, int]] = field(default_factory=list)

    @classmethod
    def fresh(cls, n_arms: int) -> "TiUcbState":
        return cls([TrendAccumulator() for _ in range(n_arms)], [0] * n_arms)


def select(state: TiUcbState, params: TiUcbParams) -> int:
    best, best_idx = 0, -math.inf
    for i, arm in enumerate(state.arms):
        if not arm.values:
            return i
        idx = ucb_index(arm, params)
        if idx > best_idx:
            best, best_idx = i, idx
    return best


def observe_and_detect(
    state: TiUcbState, sample: RewardSample, params: TiUcbParams
) -> tuple[int, int] | None:
    acc = state.arms[sample.arm]
    acc.append(sample.value)
    if len(acc) < 2 * params.omega:
        return None
    mu_old, mu_new = acc.windowed(params.omega)
    if abs(mu_old - mu_new) <= params.gamma / 2:
        return None
    acc.clear(keep_last=True)
    state.last_reset[sample.arm] = sample.global_step
    event = (sample.arm, sample.global_step)
    state.detections.append(event)
    return event


class TiUcbPolicy(Policy):
    name = "ti-ucb"

    def __init__(self, n_arms: int, horizon: int, params: TiUcbParams | None = None, **overrides):
        super().__init__(n_arms)
        self.horizon = horizon
        self.params = params if params is not None else TiUcbParams.for_horizon(horizon, **overrides)
        self.reset()

    @property
    def detections(self) -> list[tuple[int, int]]:
        return self.state.detections

    def reset(self, seed=None) -> None:
        self.state = TiUcbState.fresh(self.n_arms)
        self._log_term = 2.0 * math.log(1.0 / self.params.delta)

    def select(self, t: int) -> int:
        # inlined ucb_index; this is the simulation hot path
        scale, log_term = self.params.exploration_scale, self._log_term
        best, best_idx = 0, -math.inf
        for i, arm in enumerate(self.state.arms):
            n = len(arm.values)
            if n == 0:
                return i
            mu = arm.values[0] if n == 1 else arm.predict_next()
            idx = mu + scale * math.sqrt(log_term / n)
            if idx > best_idx:
                best, best_idx = i, idx
        return best

    def observe(self, sample: RewardSample) -> tuple[int, int] | None:
        return observe_and_detect(self.state, sample, self.params)
