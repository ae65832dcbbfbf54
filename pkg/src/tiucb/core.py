"""Rested-bandit interaction contract: samples, arm state, policies, environments.

An arm's reward distribution depends only on how many times *that arm* has
been pulled. To keep this exact under any interleaving of pulls, every arm
draws its noise from its own random stream derived from ``(seed, arm)``.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from tiucb.errors import ConfigurationError, EmptyRunError

__all__ = [
    "ArmState",
    "ArmStream",
    "Environment",
    "Policy",
    "RewardSample",
    "arm_streams",
    "child_rng",
    "policy_seed",
    "run_episode",
]

# spawn-key namespaces under a master seed
_ARM_NS = 0
_POLICY_NS = 1


@dataclass(frozen=True, slots=True)
class RewardSample:
    arm: int
    pull_index: int
    global_step: int
    value: float


@dataclass(slots=True)
class ArmState:
    """Observation log of one arm since its last reset.

    ``values[k]`` is the reward seen at pull ``k + 1`` since the reset.
    """

    values: list[float] = field(default_factory=list)
    last_reset_step: int = 0

    @property
    def pulls_since_reset(self) -> int:
        return len(self.values)

    @property
    def observations(self) -> list[tuple[int, float]]:
        return [(k + 1, v) for k, v in enumerate(self.values)]

    def append(self, value: float) -> None:
        self.values.append(value)

    def reset(self, step: int, keep: list[float] | None = None) -> None:
        self.values = list(keep or [])
        self.last_reset_step = step


class ArmStream:
    """Buffered per-arm random stream.

    Draws are consumed strictly in order, so the k-th draw of an arm is the
    same no matter how pulls of other arms are interleaved.
    """

    __slots__ = ("_rng", "_normals", "_uniforms", "_ni", "_ui", "_block")

    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self._rng = rng
        self._block = block
        self._normals = np.empty(0)
        self._uniforms = np.empty(0)
        self._ni = 0
        self._ui = 0

    def standard_normal(self) -> float:
        if self._ni >= len(self._normals):
            self._normals = self._rng.standard_normal(self._block).tolist()
            self._ni = 0
        x = self._normals[self._ni]
        self._ni += 1
        return x

    def random(self) -> float:
        if self._ui >= len(self._uniforms):
            self._uniforms = self._rng.random(self._block).tolist()
            self._ui = 0
        u = self._uniforms[self._ui]
        self._ui += 1
        return u


def arm_streams(seed: int, n_arms: int) -> list[ArmStream]:
    return [
        ArmStream(np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_ARM_NS, i))))
        for i in range(n_arms)
    ]


def policy_seed(seed: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(_POLICY_NS,))


def child_rng(seed: np.random.SeedSequence | int | None, index: int) -> np.random.Generator:
    """Independent generator number ``index`` under ``seed``; repeatable, unlike ``spawn``."""
    if seed is None:
        return np.random.default_rng()
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.default_rng(np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, index)))


class Environment(ABC):
    """Rested environment: ``mean`` is a pure function of ``(arm, pull_index)``."""

    @property
    @abstractmethod
    def num_arms(self) -> int: ...

    @abstractmethod
    def mean(self, arm: int, pull_index: int) -> float: ...

    @abstractmethod
    def sample(self, arm: int, pull_index: int, rng) -> float:
        """Draw the reward of ``arm`` at its ``pull_index``-th pull from ``rng``."""

    @property
    def has_known_means(self) -> bool:
        return True

    def mean_table(self, horizon: int) -> np.ndarray:
        """Means for pulls ``1..horizon`` of every arm, shape ``(K, horizon)``."""
        return np.array(
            [[self.mean(i, n) for n in range(1, horizon + 1)] for i in range(self.num_arms)],
            dtype=float,
        )


class Policy(ABC):
    """Select/observe loop shared by TI-UCB and every baseline."""

    name = "policy"

    def __init__(self, n_arms: int):
        if n_arms < 1:
            raise ConfigurationError(f"need at least one arm, got {n_arms}")
        self.n_arms = n_arms

    @abstractmethod
    def select(self, t: int) -> int: ...

    @abstractmethod
    def observe(self, sample: RewardSample) -> None: ...

    @abstractmethod
    def reset(self, seed: np.random.SeedSequence | int | None = None) -> None:
        """Forget all history; randomized policies reseed from ``seed``."""


def run_episode(env: Environment, policy: Policy, horizon: int, seed: int) -> list[RewardSample]:
    """Play ``horizon`` rounds of ``policy`` against ``env``."""
    if horizon < 1:
        raise EmptyRunError(f"horizon must be >= 1, got {horizon}")
    k = env.num_arms
    if policy.n_arms != k:
        raise ConfigurationError(
            f"policy has {policy.n_arms} arms but environment has {k}"
        )
    streams = arm_streams(seed, k)
    policy.reset(policy_seed(seed))
    pulls = [0] * k
    samples = []
    for t in range(1, horizon + 1):
        arm = policy.select(t)
        pulls[arm] += 1
        n = pulls[arm]
        s = RewardSample(arm, n, t, env.sample(arm, n, streams[arm]))
        policy.observe(s)
        samples.append(s)
    return samples
