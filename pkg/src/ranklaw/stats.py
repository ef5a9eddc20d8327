"""Descriptive statistics and quantile-quantile normality diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import StatsError


@dataclass(frozen=True)
class SummaryStats:
    n: int
    min: float
    max: float
    sum: float
    mean: float
    median: float
    rms: float
    std_dev: float      # sample, n-1 denominator
    variance: float
    std_err: float      # std_dev / sqrt(n)
    skewness: float     # third standardized moment (population)
    kurtosis: float     # excess (Fisher)
    mu_over_sigma: float
    nonparam_skew: float  # 3 (mean - median) / std_dev

    @property
    def kurtosis_pearson(self) -> float:
        """Non-excess convention (excess + 3)."""
        return self.kurtosis + 3.0


def nonparametric_skew(mean: float, median: float, std_dev: float) -> float:
    """Median-based asymmetry measure 3(mu - m)/sigma."""
    if std_dev <= 0:
        raise StatsError("std_dev must be positive")
    return 3.0 * (mean - median) / std_dev


def standard_error(std_dev: float, n: int) -> float:
    """Standard error of the mean, sigma / sqrt(n)."""
    if n < 1:
        raise StatsError("n must be >= 1")
    return std_dev / math.sqrt(n)


def describe(series) -> SummaryStats:
    """Summary statistics of a real-valued series (n >= 2)."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        x = x.ravel()
    n = x.size
    if n < 2:
        raise StatsError("describe needs at least 2 values")
    mean = float(x.mean())
    median = float(np.median(x))
    variance = float(x.var(ddof=1))
    std = math.sqrt(variance)
    centered = x - mean
    m2 = float(np.mean(centered ** 2))
    if m2 > 0:
        # standardize before the higher moments so tiny scales do not underflow
        z = centered / math.sqrt(m2)
        skew = float(np.mean(z ** 3))
        kurt = float(np.mean(z ** 4)) - 3.0
    else:
        skew = 0.0
        kurt = 0.0
    return SummaryStats(
        n=n,
        min=float(x.min()),
        max=float(x.max()),
        sum=float(x.sum()),
        mean=mean,
        median=median,
        rms=float(math.sqrt(np.mean(x ** 2))),
        std_dev=std,
        variance=variance,
        std_err=standard_error(std, n),
        skewness=skew,
        kurtosis=kurt,
        mu_over_sigma=mean / std if std > 0 else math.inf,
        nonparam_skew=nonparametric_skew(mean, median, std) if std > 0 else 0.0,
    )


# Rational approximation for the standard normal inverse CDF (Acklam's
# coefficients) followed by one Halley refinement step; absolute error is
# well below 1e-9 over the open unit interval.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)


def norm_inv_cdf(p: float) -> float:
    """Inverse CDF of the standard normal distribution for p in (0, 1)."""
    if not 0.0 < p < 1.0:
        raise StatsError(f"p must be in (0, 1); got {p}")
    p_low = 0.02425
    if p < p_low:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p <= 1.0 - p_low:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    # Halley refinement against the erfc-based CDF
    e = 0.5 * math.erfc(-x / math.sqrt(2.0)) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


def qq_normal(series) -> list[tuple[float, float]]:
    """Quantile-quantile pairs against the standard normal.

    Returns (theoretical_quantile, sample_quantile) for plotting positions
    (i - 0.5)/n, with the sample standardized by its mean and sample std.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 3:
        raise StatsError("qq_normal needs at least 3 values")
    std = x.std(ddof=1)
    if std == 0:
        raise StatsError("zero variance series")
    z = np.sort((x - x.mean()) / std)
    return [
        (norm_inv_cdf((i - 0.5) / n), float(z[i - 1]))
        for i in range(1, n + 1)
    ]


def format_summary(stats: SummaryStats, label: str = "") -> str:
    """One-column text table mirroring the summary layout."""
    rows = [
        ("n", f"{stats.n:d}"),
        ("min", format(stats.min, ".12g")),
        ("Max", format(stats.max, ".12g")),
        ("Sum", format(stats.sum, ".12g")),
        ("mean (mu)", format(stats.mean, ".12g")),
        ("median (m)", format(stats.median, ".12g")),
        ("RMS", format(stats.rms, ".12g")),
        ("Std. Dev. (sigma)", format(stats.std_dev, ".12g")),
        ("Var.", format(stats.variance, ".12g")),
        ("Std. Err.", format(stats.std_err, ".12g")),
        ("Skewness", format(stats.skewness, ".12g")),
        ("Kurtosis (excess)", format(stats.kurtosis, ".12g")),
        ("Kurtosis (non-excess)", format(stats.kurtosis_pearson, ".12g")),
        ("mu/sigma", format(stats.mu_over_sigma, ".12g")),
        ("3(mu-m)/sigma", format(stats.nonparam_skew, ".12g")),
    ]
    width = max(len(k) for k, _ in rows)
    lines = []
    if label:
        lines.append(label)
    lines += [f"{k:<{width}}  {v}" for k, v in rows]
    return "\n".join(lines) + "\n"


def summary_key_values(stats: SummaryStats) -> dict[str, float]:
    """Machine-readable flat mapping of every summary field."""
    out = {
        "n": stats.n, "min": stats.min, "max": stats.max, "sum": stats.sum,
        "mean": stats.mean, "median": stats.median, "rms": stats.rms,
        "std_dev": stats.std_dev, "variance": stats.variance,
        "std_err": stats.std_err, "skewness": stats.skewness,
        "kurtosis_excess": stats.kurtosis,
        "kurtosis_nonexcess": stats.kurtosis_pearson,
        "mu_over_sigma": stats.mu_over_sigma,
        "nonparam_skew": stats.nonparam_skew,
    }
    return out
