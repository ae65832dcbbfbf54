"""Greedy-oracle pull allocation and cumulative regret.

The benchmark sequence pulls, at every step, the arm whose *next* pull has the
highest mean. Under rested dynamics that is not always the global optimum, so
regret against it can be negative; it is reported as is.
"""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from tiucb.core import Environment
from tiucb.errors import CoverageError

MeanSource = Environment | Sequence[Callable[[int], float]] | np.ndarray


def _mean_fns(means: MeanSource) -> list[Callable[[int], float]]:
    if isinstance(means, Environment):
        return [lambda n, i=i: means.mean(i, n) for i in range(means.num_arms)]
    if isinstance(means, np.ndarray):
        # row i holds pulls 1..T of arm i
        return [lambda n, row=row: float(row[n - 1]) for row in means]
    return list(means)


def mean_table(means: MeanSource, horizon: int) -> np.ndarray:
    if isinstance(means, np.ndarray):
        return means[:, :horizon]
    if isinstance(means, Environment):
        return means.mean_table(horizon)
    return np.array([[f(n) for n in range(1, horizon + 1)] for f in means], dtype=float)


@dataclass(frozen=True)
class GreedyAllocation:
    counts: tuple[int, ...]
    total: float
    sequence: np.ndarray  # arm pulled at each step
    cumulative: np.ndarray  # greedy cumulative mean reward after each step

    def to_dict(self) -> dict:
        return {"counts": list(self.counts), "total_reward": self.total}


def greedy_allocation(means: MeanSource, horizon: int) -> GreedyAllocation:
    """Follow the largest next-pull mean for ``horizon`` steps; ties go to the lowest arm."""
    fns = _mean_fns(means)
    k = len(fns)
    counts = [0] * k
    heap = [(-fns[i](1), i) for i in range(k)]
    heapq.heapify(heap)
    seq = np.empty(horizon, dtype=np.int64)
    gains = np.empty(horizon)
    for t in range(horizon):
        neg, i = heapq.heappop(heap)
        seq[t] = i
        gains[t] = -neg
        counts[i] += 1
        if t + 1 < horizon:
            heapq.heappush(heap, (-fns[i](counts[i] + 1), i))
    cumulative = np.cumsum(gains)
    total = float(cumulative[-1]) if horizon else 0.0
    return GreedyAllocation(tuple(counts), total, seq, cumulative)


def pull_indices(arms: np.ndarray, n_arms: int) -> np.ndarray:
    """Own-pull count of the chosen arm at each step (1-based)."""
    arms = np.asarray(arms, dtype=np.int64)
    idx = np.zeros(len(arms), dtype=np.int64)
    for i in range(n_arms):
        mask = arms == i
        idx[mask] = np.arange(1, int(mask.sum()) + 1)
    return idx


def realized_rewards(table: np.ndarray, arms: np.ndarray) -> np.ndarray:
    """Mean reward of each realized pull, looked up in a ``(K, T)`` mean table."""
    arms = np.asarray(arms, dtype=np.int64)
    idx = pull_indices(arms, table.shape[0])
    return table[arms, idx - 1]


@dataclass(frozen=True)
class RegretTrace:
    expected: np.ndarray
    empirical: np.ndarray
    counts: tuple[int, ...]

    @property
    def final(self) -> float:
        return float(self.expected[-1])


def expected_regret(
    means: MeanSource,
    arms: Sequence[int] | np.ndarray,
    greedy: GreedyAllocation | None = None,
    estimates: np.ndarray | None = None,
) -> RegretTrace:
    """Per-step cumulative regret of a realized pull sequence against the greedy oracle.

    ``estimates`` is an optional ``(K, T)`` table of per-pull mean estimates
    for the empirical curve; it defaults to the true means.
    """
    arms = np.asarray(arms, dtype=np.int64)
    horizon = len(arms)
    table = mean_table(means, horizon)
    if greedy is None:
        greedy = greedy_allocation(table, horizon)
    expected = greedy.cumulative[:horizon] - np.cumsum(realized_rewards(table, arms))
    if estimates is None:
        empirical = expected
    else:
        g_hat = greedy_allocation(estimates, horizon)
        empirical = g_hat.cumulative - np.cumsum(realized_rewards(estimates, arms))
    counts = tuple(int(c) for c in np.bincount(arms, minlength=table.shape[0]))
    return RegretTrace(expected, empirical, counts)


def empirical_regret(
    estimates: Mapping[int, Sequence[float]] | Sequence[Sequence[float]],
    counts: Sequence[int],
    optimal_counts: Sequence[int],
) -> float:
    """Sum over arms of estimated means up to the greedy count minus up to the realized count."""
    total = 0.0
    for arm, (n, n_star) in enumerate(zip(counts, optimal_counts)):
        est = estimates[arm]
        need = max(n, n_star)
        if len(est) < need:
            raise CoverageError(arm, len(est) + 1)
        for s in range(need):
            if est[s] is None or (isinstance(est[s], float) and math.isnan(est[s])):
                raise CoverageError(arm, s + 1)
        total += math.fsum(est[:n_star]) - math.fsum(est[:n])
    return total


def min_gap(means: MeanSource, horizon: int) -> float:
    """Smallest margin of the greedy choice over any other arm along the greedy path."""
    fns = _mean_fns(means)
    k = len(fns)
    if k < 2:
        return math.inf
    greedy = greedy_allocation(fns, horizon)
    counts = [0] * k
    gap = math.inf
    for i in greedy.sequence:
        nxt = [fns[j](counts[j] + 1) for j in range(k)]
        gap = min(gap, min(nxt[i] - nxt[j] for j in range(k) if j != i))
        counts[i] += 1
    return gap


def brute_force_optimum(means: MeanSource, horizon: int) -> tuple[tuple[int, ...], float]:
    """Best total mean reward over every pull sequence (exponential; small cases only)."""
    fns = _mean_fns(means)
    k = len(fns)
    best_counts, best = None, -math.inf
    for seq in itertools.product(range(k), repeat=horizon):
        counts = [0] * k
        total = 0.0
        for i in seq:
            counts[i] += 1
            total += fns[i](counts[i])
        if total > best + 1e-12:
            best_counts, best = tuple(counts), total
    return best_counts, best
