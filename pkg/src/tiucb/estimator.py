"""Least-squares trend estimation over an arm's own pull counts.

The abscissa is always the pull index since the arm's last reset. Pure
functions here use the centered two-pass formulation; :class:`TrendAccumulator`
keeps running prefix sums so the policy can predict in O(1) per step.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from tiucb.errors import DegenerateFitError, InsufficientDataError, InvalidWindowError

Points = Sequence[tuple[float, float]]


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    n: int

    def __call__(self, x: float) -> float:
        return self.slope * x + self.intercept


def fit(points: Points) -> LinearFit:
    """Ordinary least squares of value on pull index."""
    if len(points) < 2:
        raise DegenerateFitError(f"need at least 2 points, got {len(points)}")
    xy = np.asarray(points, dtype=float)
    x, y = xy[:, 0], xy[:, 1]
    xm = x.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise DegenerateFitError("all pull indices are equal")
    ym = y.mean()
    slope = float(dx @ (y - ym)) / sxx
    return LinearFit(slope, float(ym - slope * xm), len(points))


def predict_next(points: Points) -> float:
    """Extrapolate the fitted line one pull past the last observation."""
    f = fit(points)
    return f(points[-1][0] + 1)


def _check_window(n: int, omega: int) -> None:
    if omega < 2:
        raise InvalidWindowError(f"window must be >= 2, got {omega}")
    if n < 2 * omega:
        raise InsufficientDataError(f"need {2 * omega} observations for window {omega}, got {n}")


def windowed_predictions(points: Points, omega: int) -> tuple[float, float]:
    """Next-pull predictions from the older and the newer length-``omega`` window.

    With ``n`` observations the older window covers pulls
    ``[n - 2*omega + 1, n - omega]`` and the newer one ``[n - omega + 1, n]``;
    both lines are evaluated at pull ``n + 1``.
    """
    n = len(points)
    _check_window(n, omega)
    target = points[-1][0] + 1
    w1 = points[n - 2 * omega : n - omega]
    w2 = points[n - omega :]
    return fit(w1)(target), fit(w2)(target)


class TrendAccumulator:
    """Incremental observation log with O(1) full and windowed extrapolation.

    Values are stored for pulls ``1..n`` since the last reset together with
    prefix sums of ``x`` and ``s * x``.
    """

    __slots__ = ("values", "_c0", "_c1")

    def __init__(self, values: Sequence[float] = ()):
        self.values: list[float] = []
        self._c0 = [0.0]
        self._c1 = [0.0]
        for v in values:
            self.append(v)

    def __len__(self) -> int:
        return len(self.values)

    def append(self, value: float) -> None:
        self.values.append(value)
        n = len(self.values)
        self._c0.append(self._c0[-1] + value)
        self._c1.append(self._c1[-1] + n * value)

    def clear(self, keep_last: bool = False) -> None:
        last = self.values[-1] if keep_last and self.values else None
        self.values = []
        self._c0 = [0.0]
        self._c1 = [0.0]
        if last is not None:
            self.append(last)

    def _extrapolate(self, lo: int, hi: int, target: int) -> float:
        # OLS over pulls lo..hi (1-based, inclusive), evaluated at target
        m = hi - lo + 1
        s0 = self._c0[hi] - self._c0[lo - 1]
        if m == 1:
            return s0
        s1 = self._c1[hi] - self._c1[lo - 1]
        centre = 0.5 * (lo + hi)
        sxx = m * (m * m - 1) / 12.0
        slope = (s1 - centre * s0) / sxx
        return s0 / m + slope * (target - centre)

    def predict_next(self) -> float:
        n = len(self.values)
        if n == 0:
            raise DegenerateFitError("no observations")
        return self._extrapolate(1, n, n + 1)

    def windowed(self, omega: int) -> tuple[float, float]:
        """Like :func:`windowed_predictions`, but ``omega == 1`` compares raw values."""
        n = len(self.values)
        if omega < 1:
            raise InvalidWindowError(f"window must be >= 1, got {omega}")
        if n < 2 * omega:
            raise InsufficientDataError(f"need {2 * omega} observations for window {omega}, got {n}")
        return (
            self._extrapolate(n - 2 * omega + 1, n - omega, n + 1),
            self._extrapolate(n - omega + 1, n, n + 1),
        )
