"""Reward-generating environments with rested (own-pull-count) dynamics.

Arm mean curves:

* exponential family   ``c * (1 - exp(-a n))``
* polynomial family    ``c * (1 - b * (n + b**(1/rho))**(-rho))``
* piecewise            linear ``a n + b`` until the change point, then a plateau
* constant

Observations add Gaussian noise. :class:`TraceEnvironment` replays recorded
per-arm reward sequences and :class:`CostAdjusted` subtracts an accumulated
finetuning cost from any inner environment.
"""
from __future__ import annotations

import csv
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from tiucb.core import Environment
from tiucb.errors import (
    ConfigurationError,
    TraceExhaustedError,
    TraceParseError,
    UnsupportedError,
)

TRACE_HEADER = ("arm", "pull_index", "reward")


class MeanCurve(ABC):
    """Expected reward of one arm as a function of its own pull count."""

    kind: str

    @abstractmethod
    def __call__(self, n: int) -> float: ...

    def params(self) -> dict:
        return {"type": self.kind, **asdict(self)}


@dataclass(frozen=True)
class ExpArm(MeanCurve):
    a: float
    c: float
    kind = "exp"

    def __post_init__(self):
        if not (0 < self.a <= 1 and 0 < self.c <= 1):
            raise ConfigurationError(f"exp arm needs a, c in (0, 1]: {self}")

    def __call__(self, n):
        return self.c * (1.0 - math.exp(-self.a * n))


@dataclass(frozen=True)
class PolyArm(MeanCurve):
    b: float
    c: float
    rho: float
    kind = "poly"

    def __post_init__(self):
        if not (self.b >= 0 and 0 < self.c <= 1 and 0 < self.rho <= 1):
            raise ConfigurationError(f"poly arm needs b >= 0, c and rho in (0, 1]: {self}")

    def __call__(self, n):
        if self.b == 0:
            return self.c
        # log space: b ** (1 / rho) overflows for small rho
        log_offset = math.log(self.b) / self.rho
        log_n = math.log(n) if n > 0 else -math.inf
        log_term = math.log(self.b) - self.rho * np.logaddexp(log_n, log_offset)
        return self.c * (1.0 - float(np.exp(log_term)))


@dataclass(frozen=True)
class PiecewiseLinearArm(MeanCurve):
    """``a n + b`` for ``n < change_point``, then ``plateau`` (continuous by default).

    A non-zero ``amplitude`` adds ``amplitude * sin(2 pi n / period)`` on top
    of the whole curve, a stand-in for the noisy trends of real training runs.
    """

    a: float
    b: float
    change_point: int
    plateau: float | None = None
    amplitude: float = 0.0
    period: float = 50.0
    kind = "piecewise"

    def __post_init__(self):
        if self.a <= 0:
            raise ConfigurationError(f"piecewise arm needs a positive slope: {self}")
        if self.change_point < 1:
            raise ConfigurationError(f"change point must be >= 1: {self}")
        if self.plateau is None:
            object.__setattr__(self, "plateau", self.a * self.change_point + self.b)

    def __call__(self, n):
        mu = self.a * n + self.b if n < self.change_point else self.plateau
        if self.amplitude:
            mu += self.amplitude * math.sin(2.0 * math.pi * n / self.period)
        return mu


@dataclass(frozen=True)
class ConstantArm(MeanCurve):
    value: float
    kind = "constant"

    def __call__(self, n):
        return self.value


@dataclass(frozen=True)
class SequenceArm(MeanCurve):
    """Explicit means for pulls ``1..len(values)``; the last value repeats afterwards."""

    values: tuple[float, ...]
    kind = "sequence"

    def __call__(self, n):
        if n < 1:
            return self.values[0]
        return self.values[min(n, len(self.values)) - 1]


ARM_TYPES = {cls.kind: cls for cls in (ExpArm, PolyArm, PiecewiseLinearArm, ConstantArm, SequenceArm)}


def arm_from_dict(d: dict) -> MeanCurve:
    d = dict(d)
    kind = d.pop("type")
    try:
        cls = ARM_TYPES[kind]
    except KeyError:
        raise ConfigurationError(f"unknown arm type {kind!r}") from None
    if kind == "sequence":
        d["values"] = tuple(d["values"])
    return cls(**d)


@dataclass(frozen=True)
class FamilyRanges:
    """Sampling ranges for the random exp/poly families (uniform draws)."""

    a: tuple[float, float] = (0.0, 1.0)
    c: tuple[float, float] = (0.0, 1.0)
    b: tuple[float, float] = (0.0, 10.0)
    rho: tuple[float, float] = (0.0, 1.0)


def _uniform_open_low(rng: np.random.Generator, lo: float, hi: float) -> float:
    # draws from (lo, hi]: numpy's random() is [0, 1)
    return float(hi - (hi - lo) * rng.random())


def sample_family(
    kinds: str | Sequence[str],
    n_arms: int | None = None,
    rng: np.random.Generator | int | None = None,
    ranges: FamilyRanges = FamilyRanges(),
) -> list[MeanCurve]:
    """Draw random arms; ``kinds`` is one family for all arms or one family per arm.

    Each arm draws from its own child generator so adding arms never changes
    the earlier ones.
    """
    if isinstance(kinds, str):
        if n_arms is None:
            raise ConfigurationError("n_arms is required with a single family")
        kinds = [kinds] * n_arms
    kinds = list(kinds)
    if n_arms is not None and n_arms != len(kinds):
        raise ConfigurationError(f"{len(kinds)} families given for {n_arms} arms")
    if not kinds:
        raise ConfigurationError("need at least one arm")
    ss = rng.bit_generator.seed_seq if isinstance(rng, np.random.Generator) else np.random.SeedSequence(rng)
    arms: list[MeanCurve] = []
    for kind, child in zip(kinds, ss.spawn(len(kinds))):
        g = np.random.default_rng(child)
        if kind == "exp":
            arms.append(ExpArm(a=_uniform_open_low(g, *ranges.a), c=_uniform_open_low(g, *ranges.c)))
        elif kind == "poly":
            arms.append(
                PolyArm(
                    b=float(ranges.b[0] + (ranges.b[1] - ranges.b[0]) * g.random()),
                    c=_uniform_open_low(g, *ranges.c),
                    rho=_uniform_open_low(g, *ranges.rho),
                )
            )
        else:
            raise ConfigurationError(f"unknown family {kind!r}")
    return arms


class CurveEnvironment(Environment):
    """Arms given by mean curves plus Gaussian noise of standard deviation ``noise_std``.

    If ``clip`` is set, observations are truncated to that interval (for
    policies that assume bounded rewards).
    """

    def __init__(self, arms: Sequence[MeanCurve], noise_std: float = 0.1, clip: tuple[float, float] | None = None):
        if not arms:
            raise ConfigurationError("need at least one arm")
        if noise_std < 0:
            raise ConfigurationError("noise_std must be >= 0")
        self.arms = list(arms)
        self.noise_std = noise_std
        self.clip = clip

    @property
    def num_arms(self):
        return len(self.arms)

    def mean(self, arm, pull_index):
        return self.arms[arm](pull_index)

    def sample(self, arm, pull_index, rng):
        x = self.arms[arm](pull_index)
        if self.noise_std:
            x += self.noise_std * rng.standard_normal()
        if self.clip is not None:
            lo, hi = self.clip
            x = lo if x < lo else hi if x > hi else x
        return x

    def describe(self) -> dict:
        return {
            "kind": "curves",
            "noise_std": self.noise_std,
            "clip": list(self.clip) if self.clip else None,
            "arms": [a.params() for a in self.arms],
        }


class TraceEnvironment(Environment):
    """Replays recorded per-arm reward sequences indexed by pull count.

    The recorded values double as the per-pull mean estimates unless
    ``known_means`` is false, in which case regret must be estimated from
    replications.
    """

    def __init__(self, traces: Sequence[Sequence[float]], noise_std: float = 0.0, known_means: bool = True):
        if not traces:
            raise ConfigurationError("trace needs at least one arm")
        self.traces = [list(map(float, t)) for t in traces]
        self.noise_std = noise_std
        self.known_means = known_means

    @property
    def num_arms(self):
        return len(self.traces)

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(len(t) for t in self.traces)

    @property
    def ragged(self) -> bool:
        return len(set(self.lengths)) > 1

    @property
    def has_known_means(self):
        return self.known_means

    def replay_value(self, arm: int, pull_index: int) -> float:
        return self._value(arm, pull_index)

    def _value(self, arm, pull_index):
        trace = self.traces[arm]
        if not 1 <= pull_index <= len(trace):
            raise TraceExhaustedError(
                f"arm {arm} pulled {pull_index} times but its trace has {len(trace)} entries"
            )
        return trace[pull_index - 1]

    def mean(self, arm, pull_index):
        if not self.known_means:
            raise UnsupportedError("trace environment has no per-pull mean estimates")
        return self._value(arm, pull_index)

    def sample(self, arm, pull_index, rng):
        x = self._value(arm, pull_index)
        if self.noise_std:
            x += self.noise_std * rng.standard_normal()
        return x

    def describe(self) -> dict:
        return {"kind": "trace", "lengths": list(self.lengths), "noise_std": self.noise_std}


def load_trace(path: str | Path, noise_std: float = 0.0, known_means: bool = True) -> TraceEnvironment:
    """Read a ``arm,pull_index,reward`` CSV.

    Rows may come in any order but every arm's pull indices must be exactly
    ``1..len``; arms must be numbered ``0..K-1``.
    """
    per_arm: dict[int, dict[int, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
            raise TraceParseError(f"expected header {','.join(TRACE_HEADER)}, got {header}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise TraceParseError(f"expected 3 fields, got {len(row)}", line=lineno)
            try:
                arm, idx, value = int(row[0]), int(row[1]), float(row[2])
            except ValueError as exc:
                raise TraceParseError(str(exc), line=lineno) from None
            if arm < 0 or idx < 1:
                raise TraceParseError("arm must be >= 0 and pull_index >= 1", line=lineno)
            if idx in per_arm.setdefault(arm, {}):
                raise TraceParseError(f"duplicate row for arm {arm} pull {idx}", line=lineno)
            per_arm[arm][idx] = value
    if not per_arm:
        raise TraceParseError("trace file has no rows")
    k = max(per_arm) + 1
    traces = []
    for arm in range(k):
        rows = per_arm.get(arm)
        if not rows:
            raise TraceParseError(f"arm {arm} has no rows")
        if sorted(rows) != list(range(1, len(rows) + 1)):
            raise TraceParseError(f"arm {arm} pull indices are not 1..{len(rows)}")
        traces.append([rows[i] for i in range(1, len(rows) + 1)])
    return TraceEnvironment(traces, noise_std=noise_std, known_means=known_means)


def write_trace(path: str | Path, traces: Sequence[Sequence[float]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for arm, trace in enumerate(traces):
            for i, v in enumerate(trace, start=1):
                w.writerow([arm, i, repr(float(v))])


@dataclass
class _CostSchedule:
    stop_pull: int | None = None  # last pull with finetuning; None while still active
    performance: list[float] = field(default_factory=list)


class CostAdjusted(Environment):
    """Subtracts an accumulated finetuning cost from an inner environment's rewards.

    Every finetuning pull of arm ``i`` adds ``cost[i]`` to that arm's running
    cost; the reward of a pull is the inner reward minus the cost accumulated
    *before* it. Finetuning of an arm stops for good after ``stall_window``
    consecutive pulls whose performance does not exceed the last improvement
    by more than ``stall_threshold``; from then on the cost is frozen while
    the inner environment keeps following its own pull count.

    Performance is the inner environment's mean. The schedule depends only on
    the arm's own pull count, so the wrapped environment is still rested.
    """

    def __init__(
        self,
        inner: Environment,
        cost: float | Sequence[float],
        stall_window: int = 100,
        stall_threshold: float = 0.1,
    ):
        k = inner.num_arms
        costs = [float(cost)] * k if np.isscalar(cost) else [float(c) for c in cost]
        if len(costs) != k:
            raise ConfigurationError(f"{len(costs)} costs for {k} arms")
        if any(c < 0 for c in costs):
            raise ConfigurationError("finetuning cost must be >= 0")
        if stall_window < 1:
            raise ConfigurationError("stall_window must be >= 1")
        self.inner = inner
        self.costs = costs
        self.stall_window = stall_window
        self.stall_threshold = stall_threshold
        self._schedules = [_CostSchedule() for _ in range(k)]
        self._scan_state = [(None, 0, 0) for _ in range(k)]  # (reference, streak, scanned)

    @property
    def num_arms(self):
        return self.inner.num_arms

    @property
    def has_known_means(self):
        return self.inner.has_known_means

    def _performance(self, arm: int, n: int) -> float:
        if self.inner.has_known_means:
            return self.inner.mean(arm, n)
        if isinstance(self.inner, TraceEnvironment):
            return self.inner.replay_value(arm, n)
        raise UnsupportedError("stall detection needs inner means or a replayed trace")

    def _scan(self, arm: int, upto: int) -> None:
        sched = self._schedules[arm]
        ref, streak, scanned = self._scan_state[arm]
        while scanned < upto and sched.stop_pull is None:
            scanned += 1
            p = self._performance(arm, scanned)
            if ref is None or p - ref > self.stall_threshold:
                ref, streak = p, 0
            else:
                streak += 1
            if streak >= self.stall_window:
                sched.stop_pull = scanned
        self._scan_state[arm] = (ref, streak, scanned)

    def stop_pull(self, arm: int, horizon: int) -> int | None:
        """Pull after which finetuning of ``arm`` stops, if it happens within ``horizon`` pulls."""
        self._scan(arm, horizon)
        return self._schedules[arm].stop_pull

    def cost_before(self, arm: int, pull_index: int) -> float:
        """Accumulated cost deducted from the reward of pull ``pull_index``."""
        self._scan(arm, pull_index - 1)
        stop = self._schedules[arm].stop_pull
        paid = pull_index - 1 if stop is None else min(pull_index - 1, stop)
        return self.costs[arm] * paid

    def mean(self, arm, pull_index):
        return self.inner.mean(arm, pull_index) - self.cost_before(arm, pull_index)

    def sample(self, arm, pull_index, rng):
        return self.inner.sample(arm, pull_index, rng) - self.cost_before(arm, pull_index)

    def describe(self) -> dict:
        inner = self.inner.describe() if hasattr(self.inner, "describe") else {}
        return {
            "kind": "cost",
            "costs": self.costs,
            "stall_window": self.stall_window,
            "stall_threshold": self.stall_threshold,
            "inner": inner,
        }
