"""Steady-state sampling from long runs: burn-in, spaced retention, batch means.

The process relaxes on the n^(1/4) time scale, so both the default burn-in and
the retention spacing are expressed in units of n^(1/4) real time.  Regenerative
estimation (cycles at the empty state) is offered for small systems where the
empty state is actually visited; batch means is the default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .engine import InitSpec, Sim
from .errors import ConfigError
from .model import ModelParams, SeedSpec

OBSERVABLES = ("X", "Q", "L", "w", "w_v")


@dataclass(frozen=True)
class EstimatorConfig:
    """How to turn one long run into near-independent steady-state draws."""

    samples: int = 1000
    burn_in_mult: float = 20.0     # burn-in = burn_in_mult * n^(1/4) time units
    spacing_lof: float = 1.0       # spacing between retained samples, in n^(1/4) units
    batches: int = 20

    def burn_in(self, n: int) -> float:
        return self.burn_in_mult * float(n) ** 0.25

    def spacing(self, n: int) -> float:
        return self.spacing_lof * float(n) ** 0.25


@dataclass
class StationarySample:
    """Near-independent draws of one steady-state observable plus estimator metadata."""

    observable: str
    samples: np.ndarray
    burn_in: float
    spacing: float
    n: int
    params: ModelParams
    mean: float = 0.0
    std_error: float = 0.0

    def to_csv(self) -> str:
        lines = ["sample_index,value"]
        lines.extend(f"{i},{v:.17g}" for i, v in enumerate(self.samples))
        return "\n".join(lines) + "\n"


def batch_means(samples: np.ndarray, batches: int = 20) -> tuple[float, float]:
    """Point estimate and batch-means standard error of the mean."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ConfigError("batch means needs at least one sample")
    b = max(2, min(batches, samples.size))
    usable = (samples.size // b) * b
    means = samples[:usable].reshape(b, -1).mean(axis=1)
    se = means.std(ddof=1) / math.sqrt(b) if b > 1 else float("nan")
    return float(samples.mean()), float(se)


def collect_stationary(params: ModelParams, config: EstimatorConfig, seed: SeedSpec,
                       observables=("X",), check_invariants: bool = False):
    """One fresh-empty run; returns {observable: StationarySample} plus the Sim.

    Recording several observables at the same epochs costs one run, which is
    how the experiment harness shares sweeps between criteria.
    """
    if config.samples < 1:
        raise ConfigError("sample count must be >= 1")
    if not config.spacing_lof > 0:
        raise ConfigError("spacing must be > 0")
    bad = [o for o in observables if o not in OBSERVABLES]
    if bad:
        raise ConfigError(f"unknown observables {bad}; choose from {OBSERVABLES}")
    n = params.n
    burn = config.burn_in(n)
    spacing = config.spacing(n)
    times = burn + spacing * np.arange(1, config.samples + 1)
    horizon = float(times[-1])
    sim = Sim(params, init=InitSpec.empty(), seed=seed, check_invariants=check_invariants)
    columns = sim.run(horizon, record_times=times, record_fields=tuple(observables))
    out = {}
    for obs in observables:
        vals = np.asarray(columns[obs], dtype=float)
        mean, se = batch_means(vals, config.batches)
        out[obs] = StationarySample(observable=obs, samples=vals, burn_in=burn,
                                    spacing=spacing, n=n, params=params,
                                    mean=mean, std_error=se)
    return out, sim


def stationary_sample(params: ModelParams, config: EstimatorConfig, seed: SeedSpec,
                      observable: str = "X") -> StationarySample:
    """Steady-state draws of one observable from a fresh-empty long run."""
    out, _ = collect_stationary(params, config, seed, observables=(observable,))
    return out[observable]


def regenerative_sample(params: ModelParams, seed: SeedSpec, cycles: int = 200,
                        observable: str = "X", max_time: float = 1e7) -> StationarySample:
    """Regeneration-based estimate using returns to the empty state.

    Only practical for small systems: near-critical many-server runs essentially
    never empty, which is why batch means is the default estimator.
    """
    if cycles < 1:
        raise ConfigError("cycle count must be >= 1")
    if observable != "X":
        raise ConfigError("regenerative estimator supports the X observable")
    sim = Sim(params, init=InitSpec.empty(), seed=seed)
    total_area = 0.0
    total_len = 0.0
    cycle_area = 0.0
    cycle_start = 0.0
    last_t = 0.0
    values = []
    while len(values) < cycles and last_t < max_time:
        x_before = sim.X
        t = sim.step()
        cycle_area += x_before * (t - last_t)
        last_t = t
        if sim.X == 0:
            length = last_t - cycle_start
            if length > 0:
                values.append(cycle_area / length)
                total_area += cycle_area
                total_len += length
            cycle_area = 0.0
            cycle_start = last_t
    if not values:
        raise ConfigError("no regeneration cycles completed within max_time")
    vals = np.asarray(values)
    mean = total_area / total_len       # ratio estimator over complete cycles
    se = vals.std(ddof=1) / math.sqrt(len(vals)) if len(vals) > 1 else float("nan")
    return StationarySample(observable=observable, samples=vals, burn_in=0.0,
                            spacing=0.0, n=params.n, params=params,
                            mean=float(mean), std_error=float(se))
