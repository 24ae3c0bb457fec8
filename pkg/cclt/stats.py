"""Goodness-of-fit and summary statistics used by the CLT checks."""

import math
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import stats

Cdf = Callable[[np.ndarray], np.ndarray]


class GofResult(NamedTuple):
    statistic: float
    pvalue: float


class Moments(NamedTuple):
    mean: float
    variance: float
    skewness: float
    kurtosis: float


def _sample(values: Sequence[float]) -> np.ndarray:
    array = np.asarray(values, dtype=float).ravel()
    if not array.size:
        raise ValueError("The sample is empty.")
    if not np.all(np.isfinite(array)):
        raise ValueError("The sample contains non-finite values.")
    return array


def ks_statistic(sample: Sequence[float], cdf: Cdf = stats.norm.cdf) -> float:
    """sup |F_n - F| for a continuous reference CDF."""
    x = np.sort(_sample(sample))
    n = x.size
    reference = np.asarray(cdf(x), dtype=float)
    above = np.arange(1, n + 1) / n - reference
    below = reference - np.arange(n) / n
    return float(max(above.max(), below.max()))


def ks_test(sample: Sequence[float], cdf: Cdf = stats.norm.cdf) -> GofResult:
    """One-sample KS with the asymptotic Kolmogorov p-value."""
    statistic = ks_statistic(sample, cdf)
    n = np.asarray(sample).size
    return GofResult(statistic, float(stats.kstwobign.sf(math.sqrt(n) * statistic)))


def two_sample_ks(a: Sequence[float], b: Sequence[float]) -> GofResult:
    result = stats.ks_2samp(_sample(a), _sample(b), method="asymp")
    return GofResult(float(result.statistic), float(result.pvalue))


def chi_square_gof(counts: Sequence[float], expected: Sequence[float]) -> GofResult:
    """Pearson's test; ``expected`` is rescaled to the observed total."""
    observed = _sample(counts)
    expected = _sample(expected)
    if observed.shape != expected.shape:
        raise ValueError("counts and expected must have the same number of bins.")
    expected = expected * observed.sum() / expected.sum()
    if np.any(expected < 5):
        raise ValueError("Every bin needs an expected count of at least 5.")
    result = stats.chisquare(observed, expected)
    return GofResult(float(result.statistic), float(result.pvalue))


def chi_square_independence(table: Sequence[Sequence[float]]) -> GofResult:
    statistic, pvalue, _, _ = stats.chi2_contingency(np.asarray(table, dtype=float))
    return GofResult(float(statistic), float(pvalue))


def moments(sample: Sequence[float]) -> Moments:
    """Mean, unbiased variance, skewness and excess kurtosis.

    A constant sample has zero skewness and kurtosis.
    """
    x = _sample(sample)
    variance = float(x.var(ddof=1)) if x.size > 1 else 0.0
    if variance == 0.0:
        return Moments(float(x.mean()), 0.0, 0.0, 0.0)
    return Moments(float(x.mean()), variance, float(stats.skew(x)), float(stats.kurtosis(x)))


def standardize(sample: Sequence[float]) -> np.ndarray:
    x = _sample(sample)
    spread = x.std(ddof=1) if x.size > 1 else 0.0
    if spread == 0:
        return np.zeros_like(x)
    return (x - x.mean()) / spread


def variance_standard_error(variance: float, m: int) -> float:
    """Normal-theory standard error of an unbiased variance from m draws."""
    if m < 2:
        return math.inf
    return variance * math.sqrt(2 / (m - 1))


def binomial_standard_error(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / trials) if trials else math.inf
