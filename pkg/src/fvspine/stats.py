"""Interval estimates and goodness-of-fit tests used by the experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _st

from .errors import DegenerateSample, DimensionMismatch, InsufficientExpectedCounts, ZeroTrials

__all__ = [
    "RateEstimate",
    "wilson_ci",
    "poisson_rate_ci",
    "mean_ci",
    "dispersion_test",
    "tv_distance",
    "chisq_gof",
    "chisq_homogeneity",
    "pool_classes",
]


def _check_level(level: float) -> None:
    if not 0.0 < level < 1.0:
        raise ValueError(f"level={level} outside (0, 1)")


def wilson_ci(successes: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    _check_level(level)
    if trials <= 0:
        raise ZeroTrials("trials must be positive")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes={successes} outside [0, {trials}]")
    z = _st.norm.ppf(0.5 + level / 2)
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    low = 0.0 if successes == 0 else max(0.0, centre - half)
    high = 1.0 if successes == trials else min(1.0, centre + half)
    return low, high


@dataclass(frozen=True)
class RateEstimate:
    events: int
    exposure: float
    rate: float
    ci_low: float
    ci_high: float
    level: float = 0.95

    def contains(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high


def poisson_rate_ci(events: int, exposure: float, level: float = 0.95) -> RateEstimate:
    """Exact (Garwood) interval for a Poisson rate from ``events`` in ``exposure`` time."""
    _check_level(level)
    if exposure <= 0:
        raise ValueError("exposure must be positive")
    if events < 0:
        raise ValueError("events must be non-negative")
    a = 1 - level
    low = 0.0 if events == 0 else _st.chi2.ppf(a / 2, 2 * events) / 2
    high = _st.chi2.ppf(1 - a / 2, 2 * events + 2) / 2
    return RateEstimate(int(events), float(exposure), events / exposure, low / exposure, high / exposure, level)


def mean_ci(values, level: float = 0.95) -> tuple[float, float, float]:
    """Sample mean with a normal-approximation interval: ``(mean, low, high)``."""
    _check_level(level)
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two values")
    m = float(v.mean())
    se = float(v.std(ddof=1)) / math.sqrt(v.size)
    z = _st.norm.ppf(0.5 + level / 2)
    return m, m - z * se, m + z * se


@dataclass(frozen=True)
class DispersionResult:
    index: float
    """Sample variance over sample mean."""
    low: float
    high: float
    passed: bool


def dispersion_test(counts, alpha: float = 0.01) -> DispersionResult:
    """Poisson dispersion test.

    Under a Poisson sample of size ``m`` the statistic ``(m - 1) s^2 / mean``
    is approximately chi-square with ``m - 1`` degrees of freedom; the test
    passes when the dispersion index lies in the two-sided ``1 - alpha`` band.
    """
    c = np.asarray(counts, dtype=float)
    m = c.size
    if m < 30:
        raise ValueError("dispersion test needs at least 30 counts")
    if np.all(c == c[0]):
        raise DegenerateSample("all counts are equal")
    index = float(c.var(ddof=1) / c.mean())
    low = _st.chi2.ppf(alpha / 2, m - 1) / (m - 1)
    high = _st.chi2.ppf(1 - alpha / 2, m - 1) / (m - 1)
    return DispersionResult(index, float(low), float(high), bool(low <= index <= high))


def tv_distance(p, q) -> float:
    """Total-variation distance ``sum |p - q| / 2`` between two laws on the same finite set."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatch(f"supports differ: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


def pool_classes(edges, values) -> np.ndarray:
    """Counts of ``values`` in classes ``[e_i, e_{i+1})``; the last class is open-ended."""
    v = np.asarray(values)
    edges = list(edges)
    idx = np.searchsorted(edges, v, side="right") - 1
    if np.any(idx < 0):
        raise ValueError("value below the first class edge")
    return np.bincount(idx, minlength=len(edges))


def chisq_gof(observed, expected, min_expected: float = 5.0) -> tuple[float, float]:
    """Pearson goodness-of-fit of class counts against class probabilities.

    ``expected`` is normalised to sum to one.
    """
    o = np.asarray(observed, dtype=float)
    e = np.asarray(expected, dtype=float)
    if o.shape != e.shape:
        raise DimensionMismatch(f"{o.shape} vs {e.shape}")
    if o.size < 2:
        raise InsufficientExpectedCounts("need at least two classes (zero degrees of freedom)")
    e = e / e.sum() * o.sum()
    if np.any(e < min_expected):
        raise InsufficientExpectedCounts(f"expected counts below {min_expected}: {np.round(e, 2).tolist()}")
    stat = float(((o - e) ** 2 / e).sum())
    return stat, float(_st.chi2.sf(stat, o.size - 1))


def chisq_homogeneity(counts_a, counts_b, min_expected: float = 5.0) -> tuple[float, float]:
    """Two-sample chi-square test that two class-count vectors share one law."""
    table = np.vstack([np.asarray(counts_a, dtype=float), np.asarray(counts_b, dtype=float)])
    if table.shape[1] < 2:
        raise InsufficientExpectedCounts("need at least two classes (zero degrees of freedom)")
    row = table.sum(axis=1, keepdims=True)
    col = table.sum(axis=0, keepdims=True)
    e = row * col / table.sum()
    if np.any(e < min_expected):
        raise InsufficientExpectedCounts(f"expected counts below {min_expected}")
    stat = float(((table - e) ** 2 / e).sum())
    return stat, float(_st.chi2.sf(stat, table.shape[1] - 1))
