"""Diffusion and lower-order-fluid scaling transforms for number-in-system paths.

Raw paths are piecewise constant and right-continuous: `times` holds the jump
epochs (starting at 0) and `values[i]` the level on [times[i], times[i+1]).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, HorizonError


@dataclass
class ScaledPath:
    """A path on a time grid after centering/scaling by the system size n."""

    times: np.ndarray
    values: np.ndarray
    scaling: str  # "diffusion" | "lof"
    n: int


def step_eval(times: np.ndarray, values: np.ndarray, at: np.ndarray) -> np.ndarray:
    """Evaluate a right-continuous step path at the given times."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    at = np.asarray(at, dtype=float)
    if times.shape != values.shape or times.size == 0:
        raise ConfigError("step path needs matching, nonempty times/values arrays")
    idx = np.searchsorted(times, at, side="right") - 1
    if (idx < 0).any():
        raise ConfigError("evaluation time precedes the path's first epoch")
    return values[idx]


def diffusion_scale(times, values, n: int) -> ScaledPath:
    """Center at n and scale space by sqrt(n): value(t) = (X(t) - n)/sqrt(n)."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    values = np.asarray(values, dtype=float)
    return ScaledPath(times=np.asarray(times, dtype=float).copy(),
                      values=(values - n) / np.sqrt(n), scaling="diffusion", n=int(n))


def lof_scale(times, values, n: int, scaled_times=None, t_max: float | None = None) -> ScaledPath:
    """Compress time by n^(1/4) and scale space by n^(3/4).

    value(t) = (X(n^(1/4) * t) - n) / n^(3/4).  The raw path must cover real
    time up to n^(1/4) * max(scaled_times); `t_max` declares raw coverage past
    the final jump epoch (defaults to times[-1]).
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    n_quarter = float(n) ** 0.25
    n_threequarter = float(n) ** 0.75
    if t_max is None:
        t_max = float(times[-1])
    if scaled_times is None:
        scaled_times = times / n_quarter
    scaled_times = np.asarray(scaled_times, dtype=float)
    raw_needed = scaled_times.max() * n_quarter if scaled_times.size else 0.0
    if raw_needed > t_max * (1 + 1e-12):
        raise HorizonError(
            f"raw path covers [0, {t_max:g}] but scaled horizon needs {raw_needed:g}"
        )
    raw_at = np.minimum(scaled_times * n_quarter, t_max)
    raw_vals = step_eval(times, values, raw_at)
    return ScaledPath(times=scaled_times.copy(), values=(raw_vals - n) / n_threequarter,
                      scaling="lof", n=int(n))
