"""Goodness-of-fit and trend statistics used by the experiment harness."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


def ks_statistic(samples, cdf) -> float:
    """One-sample Kolmogorov-Smirnov sup-gap of sorted samples against a cdf."""
    s = np.sort(np.asarray(samples, dtype=float))
    if s.size == 0:
        raise ConfigError("KS statistic needs at least one sample")
    n = s.size
    f = np.asarray(cdf(s), dtype=float)
    i = np.arange(1, n + 1)
    return float(max((i / n - f).max(), (f - (i - 1) / n).max()))


def dkw_epsilon(n: int, alpha: float, two_sided: bool = True) -> float:
    """Dvoretzky-Kiefer-Wolfowitz uniform band half-width at confidence 1-alpha."""
    if n < 1:
        raise ConfigError("DKW band needs n >= 1")
    if not 0 < alpha < 1:
        raise ConfigError("alpha must be in (0, 1)")
    c = 2.0 if two_sided else 1.0
    return math.sqrt(math.log(c / alpha) / (2.0 * n))


def ecdf_max_gap(lower_samples, upper_samples) -> float:
    """max_x [F_lower(x) - F_upper(x)] over the pooled support.

    Positive values mean `upper_samples` puts less mass below some level than
    `lower_samples`, i.e. the intended dominance F_lower >= F_upper fails there.
    """
    a = np.sort(np.asarray(lower_samples, dtype=float))
    b = np.sort(np.asarray(upper_samples, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ConfigError("both sample sets must be nonempty")
    support = np.concatenate([a, b])
    fa = np.searchsorted(a, support, side="right") / a.size
    fb = np.searchsorted(b, support, side="right") / b.size
    return float((fb - fa).max())


@dataclass
class LineFit:
    slope: float
    intercept: float
    slope_se: float
    intercept_se: float
    r_squared: float
    points: list


def slope_fit(x, y) -> LineFit:
    """Ordinary least squares y = a + b*x with standard errors and R^2."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 2:
        raise ConfigError("slope fit needs at least two (x, y) points")
    sxx = float(((x - x.mean()) ** 2).sum())
    if sxx == 0.0:
        raise ConfigError("slope fit needs at least two distinct x values")
    b = float(((x - x.mean()) * (y - y.mean())).sum() / sxx)
    a = float(y.mean() - b * x.mean())
    resid = y - (a + b * x)
    dof = x.size - 2
    s2 = float((resid ** 2).sum() / dof) if dof > 0 else 0.0
    slope_se = math.sqrt(s2 / sxx)
    intercept_se = math.sqrt(s2 * (1.0 / x.size + x.mean() ** 2 / sxx))
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if sst == 0.0 else 1.0 - float((resid ** 2).sum()) / sst
    return LineFit(slope=b, intercept=a, slope_se=slope_se, intercept_se=intercept_se,
                   r_squared=r2, points=[(float(xi), float(yi)) for xi, yi in zip(x, y)])
