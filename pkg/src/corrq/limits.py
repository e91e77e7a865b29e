"""Analytic limit objects: diffusion drifts, the heavy-traffic stationary law,
Euler-Maruyama path simulation, the lower-order fluid ODE and its fixed point.

The stationary law for positive slack is exponential on the positive axis and
a truncated normal (the Ornstein-Uhlenbeck body) on the negative axis.  The
normal cdf is scipy.special.ndtr, an erf-based implementation accurate to
machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import ConfigError
from .model import SeedSpec

SQRT_2PI = math.sqrt(2.0 * math.pi)


def drift_mc(x: float, beta: float) -> float:
    """No-abandonment heavy-traffic drift: -beta above 0, mean-reverting below."""
    return -beta if x >= 0 else -(beta + x)


def drift_ma(x: float, beta: float, theta: float) -> float:
    """Independent-patience drift: adds -theta*x above 0."""
    if not theta > 0:
        raise ConfigError(f"theta must be > 0, got {theta}")
    return -(beta + theta * x) if x >= 0 else -(beta + x)


@dataclass(frozen=True)
class DiffusionSpec:
    """One-dimensional limit diffusion; noise coefficient is sqrt(2) since mu=1."""

    beta: float
    drift_kind: str = "erlang_c"     # "erlang_c" | "erlang_a"
    theta: float = 1.0               # used only by erlang_a

    def __post_init__(self):
        if self.drift_kind not in ("erlang_c", "erlang_a"):
            raise ConfigError(f"unknown drift_kind {self.drift_kind!r}")
        if self.drift_kind == "erlang_a" and not self.theta > 0:
            raise ConfigError("erlang_a drift needs theta > 0")

    @property
    def noise_coeff(self) -> float:
        return math.sqrt(2.0)

    def drift(self, x):
        x = np.asarray(x, dtype=float)
        if self.drift_kind == "erlang_c":
            return np.where(x >= 0, -self.beta, -(self.beta + x))
        return np.where(x >= 0, -(self.beta + self.theta * x), -(self.beta + x))


class HwStationaryLaw:
    """Stationary law of the critical-slack diffusion (positive slack only).

    P(>=0) = 1 / (1 + sqrt(2*pi)*beta*Phi(beta)*exp(beta^2/2)); conditional on
    >=0 the law is Exp(beta); conditional on <=0 it is N(-beta, 1) truncated to
    the negative axis.
    """

    def __init__(self, beta: float):
        if not beta > 0:
            raise ConfigError(
                f"stationary law requires beta > 0 (diffusion is null/transient otherwise), got {beta}")
        self.beta = float(beta)
        self.p_pos = 1.0 / (1.0 + SQRT_2PI * beta * ndtr(beta) * math.exp(beta * beta / 2.0))

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        b, p = self.beta, self.p_pos
        upper = p * b * np.exp(-b * np.where(x >= 0, x, 0.0))
        lower = (1.0 - p) * np.exp(-0.5 * (b + x) ** 2) / (SQRT_2PI * ndtr(b))
        return np.where(x >= 0, upper, lower)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        b, p = self.beta, self.p_pos
        upper = (1.0 - p) + p * (1.0 - np.exp(-b * np.where(x >= 0, x, 0.0)))
        lower = (1.0 - p) * ndtr(b + x) / ndtr(b)
        return np.where(x >= 0, upper, lower)

    def sample(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        """Exact draws: branch by P(>=0); inverse-CDF exponential above,
        rejection from N(-beta, 1) restricted to (-inf, 0] below."""
        u = rng.random(size)
        out = np.empty(size)
        pos = u < self.p_pos
        npos = int(pos.sum())
        if npos:
            v = rng.random(npos)
            v[v == 0.0] = 0.5  # open-interval guard, probability 2^-53
            out[pos] = -np.log(v) / self.beta
        nneg = size - npos
        if nneg:
            draws = np.empty(nneg)
            filled = 0
            while filled < nneg:
                cand = rng.normal(-self.beta, 1.0, size=2 * (nneg - filled))
                cand = cand[cand <= 0.0]
                take = min(cand.size, nneg - filled)
                draws[filled:filled + take] = cand[:take]
                filled += take
            out[~pos] = draws
        return out


def hw_stationary(beta: float) -> HwStationaryLaw:
    """Stationary law object exposing pdf, cdf and an exact sampler."""
    return HwStationaryLaw(beta)


def sde_path(spec: DiffusionSpec, x0: float, dt: float, horizon: float,
             seed: SeedSpec | np.random.Generator, noise: bool = True,
             record_stride: int = 1):
    """Euler-Maruyama path: x_{k+1} = x_k + drift(x_k)*dt + sqrt(2*dt)*N(0,1).

    Returns (times, values) including the initial point; record_stride thins
    the stored path without changing the dynamics.
    """
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    if horizon < dt:
        raise ConfigError("horizon must be >= dt")
    rng = seed.stream() if isinstance(seed, SeedSpec) else seed
    nsteps = int(round(horizon / dt))
    x = np.asarray([float(x0)])
    times = [0.0]
    values = [float(x0)]
    sigma = math.sqrt(2.0 * dt) if noise else 0.0
    for k in range(1, nsteps + 1):
        x = x + spec.drift(x) * dt
        if noise:
            x = x + sigma * rng.standard_normal(1)
        if k % record_stride == 0 or k == nsteps:
            times.append(k * dt)
            values.append(float(x[0]))
    return np.asarray(times), np.asarray(values)


def sde_ensemble_states(spec: DiffusionSpec, x0: float, dt: float, sample_times,
                        npaths: int, seed: SeedSpec | np.random.Generator) -> np.ndarray:
    """States of npaths independent EM paths at the given times (paths x times).

    Used to pool near-independent tail samples for distributional checks; a
    single path of practical length carries too few effective samples.
    """
    if not dt > 0:
        raise ConfigError("dt must be > 0")
    rng = seed.stream() if isinstance(seed, SeedSpec) else seed
    sample_times = np.asarray(sample_times, dtype=float)
    x = np.full(npaths, float(x0))
    sigma = math.sqrt(2.0 * dt)
    out = np.empty((npaths, sample_times.size))
    k = 0
    for j, t_target in enumerate(sample_times):
        k_target = int(round(t_target / dt))
        while k < k_target:
            chunk = min(4096, k_target - k)
            z = rng.standard_normal((chunk, npaths))
            for i in range(chunk):
                x = x + spec.drift(x) * dt + sigma * z[i]
            k += chunk
        out[:, j] = x
    return out


# -- lower-order fluid limit ---------------------------------------------------


@dataclass(frozen=True)
class OdeSpec:
    """Fluid initial-value problem dx/dt = -beta - (theta^2/2) x^2, x(0) = x0."""

    beta: float
    theta: float
    x0: float

    def __post_init__(self):
        if self.beta > 0:
            raise ConfigError(f"fluid regime requires beta <= 0, got {self.beta}")
        if not self.theta > 0:
            raise ConfigError(f"theta must be > 0, got {self.theta}")
        if self.x0 < 0:
            raise ConfigError(f"x0 must be >= 0, got {self.x0}")

    def rhs(self, x):
        return -self.beta - 0.5 * self.theta ** 2 * np.square(x)


def lof_closed(t, spec: OdeSpec):
    """Closed-form fluid solution; scalar or vectorized in t."""
    t = np.asarray(t, dtype=float)
    if (t < 0).any():
        raise ConfigError("t must be >= 0")
    th, x0 = spec.theta, spec.x0
    if spec.beta == 0:
        out = 2.0 * x0 / (2.0 + th * th * x0 * t)
    else:
        a = math.sqrt(-2.0 * spec.beta)
        e = np.exp(-a * th * t)
        num = (a + th * x0) * (1.0 - e) + 2.0 * th * x0 * e
        den = (a + th * x0) * (1.0 - e) + 2.0 * a * e
        out = (a / th) * num / den
    return out if out.shape else float(out)


def x_star(beta: float, theta: float) -> float:
    """Globally asymptotically stable fluid fixed point sqrt(-2*beta)/theta."""
    if beta > 0:
        raise ConfigError(f"fixed point requires beta <= 0, got {beta}")
    if not theta > 0:
        raise ConfigError(f"theta must be > 0, got {theta}")
    return math.sqrt(-2.0 * beta) / theta


def lof_ode_solve(spec: OdeSpec, grid, max_step: float | None = None) -> np.ndarray:
    """Classical fixed-step RK4 integration of the fluid IVP on an increasing grid."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or grid[0] < 0 or (np.diff(grid) <= 0).any():
        raise ConfigError("grid must be increasing and start at t >= 0")
    span = float(grid[-1]) if grid[-1] > 0 else 1.0
    h_max = max_step if max_step is not None else 1e-3 * span
    f = spec.rhs
    out = np.empty(grid.size)
    t = 0.0
    x = float(spec.x0)
    for i, t_next in enumerate(grid):
        while t < t_next:
            h = min(h_max, t_next - t)
            k1 = f(x)
            k2 = f(x + 0.5 * h * k1)
            k3 = f(x + 0.5 * h * k2)
            k4 = f(x + h * k3)
            x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t += h
        out[i] = x
    return out
