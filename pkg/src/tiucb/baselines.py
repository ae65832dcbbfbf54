"""Comparison policies: KL-UCB, SW-UCB, SW-TS, SW-KL-UCB, Rexp3, Ser4, greedy oracle.

Bounded-reward baselines map raw rewards affinely onto [0, 1] using the
experiment's configured reward bounds and clamp the result.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

from tiucb.core import ArmStream, Environment, Policy, RewardSample, child_rng
from tiucb.errors import ConfigurationError

__all__ = [
    "BaselineParams",
    "GreedyOracle",
    "KLUCB",
    "Rexp3",
    "SWKLUCB",
    "SWTS",
    "SWUCB",
    "Ser4",
    "SlidingWindow",
    "bernoulli_kl",
    "exp3_probabilities",
    "kl_ucb_index",
    "ser4_radius",
    "sw_ucb_index",
]

_EPS = 1e-15


def bernoulli_kl(p: float, q: float) -> float:
    p = min(max(p, _EPS), 1 - _EPS)
    q = min(max(q, _EPS), 1 - _EPS)
    return p * math.log(p / q) + (1 - p) * math.log((1 - p) / (1 - q))


def kl_budget(t: int, c: float) -> float:
    # log log t is negative or undefined below t = e; drop the correction there
    lt = math.log(t) if t > 1 else 0.0
    return lt + c * math.log(max(lt, 1.0))


def kl_ucb_index(mean: float, n: int, t: int, c: float = 3.0, tol: float = 1e-6) -> float:
    """Largest q in [mean, 1] with n * kl(mean, q) <= log t + c log log t, by bisection."""
    if n == 0:
        return math.inf
    mean = min(max(mean, 0.0), 1.0)
    if mean >= 1.0:
        return 1.0
    level = kl_budget(t, c) / n
    lo, hi = mean, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if bernoulli_kl(mean, mid) > level:
            hi = mid
        else:
            lo = mid
    return lo


def sw_ucb_index(mean: float, count: int, t: int, tau: int, xi: float) -> float:
    if count == 0:
        return math.inf
    return mean + math.sqrt(xi * math.log(min(t, tau)) / count)


def exp3_probabilities(log_weights: np.ndarray, gamma: float) -> np.ndarray:
    w = np.exp(log_weights - log_weights.max())
    k = len(log_weights)
    return (1.0 - gamma) * w / w.sum() + gamma / k


def ser4_radius(rounds: int, n_arms: int, delta: float) -> float:
    return math.sqrt(math.log(4.0 * n_arms * rounds**2 / delta) / (2.0 * rounds))


@dataclass(frozen=True)
class BaselineParams:
    horizon: int
    n_arms: int
    kl_ucb_c: float
    sw_ucb_tau: int
    sw_ucb_xi: float
    sw_ts_tau: int
    sw_kl_ucb_tau: int
    rexp3_batch: int
    rexp3_gamma: float
    ser4_delta: float
    ser4_epsilon: float
    ser4_phi: float
    ser4_switches: int

    @classmethod
    def resolve(cls, horizon: int, n_arms: int, **overrides) -> "BaselineParams":
        T, K = horizon, n_arms
        if T < 1 or K < 1:
            raise ConfigurationError("horizon and n_arms must be positive")
        logT = math.log(T) if T > 1 else 0.0
        variation = overrides.pop("rexp3_variation", K)
        klogk = K * math.log(K)
        batch = max(1, math.ceil(klogk ** (1 / 3) * (T / variation) ** (2 / 3)))
        gamma = min(1.0, math.sqrt(klogk / ((math.e - 1) * batch))) if K > 1 else 1.0
        switches = overrides.get("ser4_switches", K)
        d = dict(
            horizon=T,
            n_arms=K,
            kl_ucb_c=3.0,
            sw_ucb_tau=max(1, math.ceil(4 * math.sqrt(T * logT))),
            sw_ucb_xi=0.6,
            sw_ts_tau=max(1, math.ceil(math.sqrt(T))),
            sw_kl_ucb_tau=max(1, math.ceil(T ** 0.8)),
            rexp3_batch=batch,
            rexp3_gamma=gamma,
            ser4_delta=1.0 / T,
            ser4_epsilon=1.0 / (K * T),
            ser4_phi=min(1.0, math.sqrt(switches / (T * K) * math.log(K * T))) if K * T > 1 else 0.0,
            ser4_switches=switches,
        )
        unknown = set(overrides) - set(d)
        if unknown:
            raise ConfigurationError(f"unknown baseline parameters: {sorted(unknown)}")
        d.update(overrides)
        p = cls(**d)
        p._validate()
        return p

    def _validate(self) -> None:
        for name in ("sw_ucb_tau", "sw_ts_tau", "sw_kl_ucb_tau", "rexp3_batch"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        for name in ("rexp3_gamma", "ser4_delta"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must lie in (0, 1]")
        for name in ("ser4_epsilon", "ser4_phi"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")

    def as_dict(self) -> dict:
        return asdict(self)


class SlidingWindow:
    """Per-arm count and sum over the last ``tau`` global steps."""

    __slots__ = ("tau", "counts", "sums", "_buf")

    def __init__(self, n_arms: int, tau: int):
        self.tau = tau
        self.counts = [0] * n_arms
        self.sums = [0.0] * n_arms
        self._buf: deque[tuple[int, float]] = deque()

    def push(self, arm: int, value: float) -> None:
        self._buf.append((arm, value))
        self.counts[arm] += 1
        self.sums[arm] += value
        if len(self._buf) > self.tau:
            old, v = self._buf.popleft()
            self.counts[old] -= 1
            self.sums[old] -= v
            if self.counts[old] == 0:
                self.sums[old] = 0.0

    def mean(self, arm: int) -> float:
        return self.sums[arm] / self.counts[arm]


class _Bounded(Policy):
    def __init__(self, n_arms: int, bounds: tuple[float, float] = (0.0, 1.0)):
        super().__init__(n_arms)
        lo, hi = bounds
        if not hi > lo:
            raise ConfigurationError(f"invalid reward bounds {bounds}")
        self._lo, self._span = lo, hi - lo

    def unit(self, value: float) -> float:
        x = (value - self._lo) / self._span
        return 0.0 if x < 0.0 else 1.0 if x > 1.0 else x


class _IndexPolicy(_Bounded):
    def index(self, arm: int, t: int) -> float:
        raise NotImplementedError

    def select(self, t: int) -> int:
        best, best_idx = 0, -math.inf
        for i in range(self.n_arms):
            idx = self.index(i, t)
            if idx == math.inf:
                return i
            if idx > best_idx:
                best, best_idx = i, idx
        return best


class KLUCB(_IndexPolicy):
    name = "kl-ucb"

    def __init__(self, n_arms, c: float = 3.0, bounds=(0.0, 1.0)):
        super().__init__(n_arms, bounds)
        self.c = c
        self.reset()

    def reset(self, seed=None) -> None:
        self.counts = [0] * self.n_arms
        self.sums = [0.0] * self.n_arms

    def index(self, arm, t):
        n = self.counts[arm]
        if n == 0:
            return math.inf
        return kl_ucb_index(self.sums[arm] / n, n, t, self.c)

    def observe(self, sample: RewardSample) -> None:
        self.counts[sample.arm] += 1
        self.sums[sample.arm] += self.unit(sample.value)


class SWUCB(_IndexPolicy):
    name = "sw-ucb"

    def __init__(self, n_arms, tau: int, xi: float = 0.6, bounds=(0.0, 1.0)):
        super().__init__(n_arms, bounds)
        self.tau, self.xi = tau, xi
        self.reset()

    def reset(self, seed=None) -> None:
        self.window = SlidingWindow(self.n_arms, self.tau)

    def index(self, arm, t):
        w = self.window
        n = w.counts[arm]
        if n == 0:
            return math.inf
        return sw_ucb_index(w.sums[arm] / n, n, t, self.tau, self.xi)

    def observe(self, sample):
        self.window.push(sample.arm, self.unit(sample.value))


class SWKLUCB(_IndexPolicy):
    name = "sw-kl-ucb"

    def __init__(self, n_arms, tau: int, c: float = 3.0, bounds=(0.0, 1.0)):
        super().__init__(n_arms, bounds)
        self.tau, self.c = tau, c
        self.reset()

    def reset(self, seed=None) -> None:
        self.window = SlidingWindow(self.n_arms, self.tau)

    def index(self, arm, t):
        w = self.window
        n = w.counts[arm]
        if n == 0:
            return math.inf
        return kl_ucb_index(w.sums[arm] / n, n, min(t, self.tau), self.c)

    def observe(self, sample):
        self.window.push(sample.arm, self.unit(sample.value))


class SWTS(_Bounded):
    """Sliding-window Thompson sampling on Bernoulli-binarized rewards."""

    name = "sw-ts"

    def __init__(self, n_arms, tau: int, bounds=(0.0, 1.0)):
        super().__init__(n_arms, bounds)
        self.tau = tau
        self.reset()

    def reset(self, seed=None) -> None:
        # posterior draws and reward binarization use separate streams
        self.rng = child_rng(seed, 0)
        self._u = ArmStream(child_rng(seed, 1))
        self.window = SlidingWindow(self.n_arms, self.tau)

    def posterior(self, arm: int) -> tuple[float, float]:
        s = self.window.sums[arm]
        return 1.0 + s, 1.0 + self.window.counts[arm] - s

    def select(self, t):
        best, best_draw = 0, -1.0
        for i in range(self.n_arms):
            a, b = self.posterior(i)
            draw = self.rng.beta(a, b)
            if draw > best_draw:
                best, best_draw = i, draw
        return best

    def observe(self, sample):
        success = 1.0 if self._u.random() < self.unit(sample.value) else 0.0
        self.window.push(sample.arm, success)


class Rexp3(_Bounded):
    """Exp3 restarted every ``batch`` steps."""

    name = "rexp3"

    def __init__(self, n_arms, batch: int, gamma: float, bounds=(0.0, 1.0)):
        super().__init__(n_arms, bounds)
        self.batch, self.gamma = batch, gamma
        self.reset()

    def reset(self, seed=None) -> None:
        self._u = ArmStream(child_rng(seed, 0))
        self.log_weights = np.zeros(self.n_arms)
        self.probs = np.full(self.n_arms, 1.0 / self.n_arms)

    def select(self, t):
        if (t - 1) % self.batch == 0:
            self.log_weights = np.zeros(self.n_arms)
        self.probs = exp3_probabilities(self.log_weights, self.gamma)
        u = self._u.random()
        arm = int(np.searchsorted(np.cumsum(self.probs), u, side="right"))
        return min(arm, self.n_arms - 1)

    def observe(self, sample):
        p = self.probs[sample.arm]
        estimate = self.unit(sample.value) / p
        self.log_weights[sample.arm] += self.gamma * estimate / self.n_arms


class Ser4(_Bounded):
    """Successive elimination over randomized round-robin rounds, with random resets.

    Each step: with probability ``phi`` the surviving set and statistics are
    reset; then with probability ``epsilon`` an arm is drawn uniformly from all
    arms (its reward is not used for elimination); otherwise the next arm of
    the current shuffled round is played. After a round completes an arm is
    eliminated when the best empirical mean beats it by more than twice the
    confidence radius.
    """

    name = "ser4"

    def __init__(self, n_arms, delta: float, epsilon: float, phi: float, bounds=(0.0, 1.0)):
        super().__init__(n_arms, bounds)
        self.delta, self.epsilon, self.phi = delta, epsilon, phi
        self.reset()

    def reset(self, seed=None) -> None:
        # round order and the reset/exploration coins use separate streams
        self.rng = child_rng(seed, 0)
        self._u = ArmStream(child_rng(seed, 1))
        self.resets = 0
        self._restart()

    def _restart(self) -> None:
        self.survivors = list(range(self.n_arms))
        self.sums = [0.0] * self.n_arms
        self.rounds = 0
        self._queue: list[int] = []
        self._forced = False
        self.eliminations: list[tuple[int, int]] = []

    def select(self, t):
        if self.phi > 0 and self._u.random() < self.phi:
            self.resets += 1
            self._restart()
        if self.epsilon > 0 and self._u.random() < self.epsilon:
            self._forced = True
            return min(int(self._u.random() * self.n_arms), self.n_arms - 1)
        self._forced = False
        if not self._queue:
            self._queue = [self.survivors[j] for j in self.rng.permutation(len(self.survivors))]
        return self._queue.pop()

    def observe(self, sample):
        if self._forced:
            return
        self.sums[sample.arm] += self.unit(sample.value)
        if self._queue:
            return
        self.rounds += 1
        if len(self.survivors) == 1:
            return
        r = self.rounds
        means = {i: self.sums[i] / r for i in self.survivors}
        best = max(means.values())
        cut = 2.0 * ser4_radius(r, self.n_arms, self.delta)
        keep = [i for i in self.survivors if best - means[i] <= cut]
        for i in self.survivors:
            if i not in keep:
                self.eliminations.append((i, sample.global_step))
        self.survivors = keep


class GreedyOracle(Policy):
    """Plays the arm with the highest next-pull mean under the true means."""

    name = "greedy"

    def __init__(self, env: Environment):
        super().__init__(env.num_arms)
        self.env = env
        self.reset()

    def reset(self, seed=None) -> None:
        self.pulls = [0] * self.n_arms

    def select(self, t):
        best, best_mu = 0, -math.inf
        for i in range(self.n_arms):
            mu = self.env.mean(i, self.pulls[i] + 1)
            if mu > best_mu:
                best, best_mu = i, mu
        return best

    def observe(self, sample):
        self.pulls[sample.arm] += 1
