"""Model primitives: staffing parameters, correlated customer sampling, seeded streams.

Time is measured in service-time units throughout, so the service rate is
fixed at 1 and all other rates are relative to it.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StaffingInfeasibleError

#: Patience regimes: "perfect" ties patience to the service requirement
#: (T = S/theta), "independent" draws patience separately (Erlang-A twin),
#: "none" disables abandonment entirely (Erlang-C twin).
CORRELATION_MODES = ("perfect", "independent", "none")


@dataclass(frozen=True)
class ModelParams:
    """Primitive configuration of one n-server system."""

    n: int
    beta: float
    theta: float
    lambda_n: float
    mu: float = 1.0
    correlation_mode: str = "perfect"


def make_params(n: int, beta: float, theta: float, mode: str = "perfect") -> ModelParams:
    """Build parameters under square-root staffing: lambda_n = n - beta*sqrt(n).

    Raises ConfigError for theta <= 0 or an unknown mode, and
    StaffingInfeasibleError when beta >= sqrt(n) (arrival rate would be <= 0).
    """
    if n < 1 or int(n) != n:
        raise ConfigError(f"agent count n must be a positive integer, got {n!r}")
    if not theta > 0:
        raise ConfigError(f"patience rate theta must be > 0, got {theta!r}")
    if mode not in CORRELATION_MODES:
        raise ConfigError(f"correlation_mode must be one of {CORRELATION_MODES}, got {mode!r}")
    n = int(n)
    lambda_n = n - beta * math.sqrt(n)
    if not lambda_n > 0:
        raise StaffingInfeasibleError(
            f"staffing infeasible: beta={beta} >= sqrt(n)={math.sqrt(n):.6g} gives lambda_n={lambda_n}"
        )
    return ModelParams(n=n, beta=float(beta), theta=float(theta), lambda_n=lambda_n,
                       correlation_mode=mode)


def params_from_rate(n: int, lambda_n: float, theta: float, mode: str = "perfect") -> ModelParams:
    """Parameters with the arrival rate given directly; beta is derived."""
    if not lambda_n > 0:
        raise ConfigError(f"arrival rate must be > 0, got {lambda_n!r}")
    beta = (n - lambda_n) / math.sqrt(n)
    p = make_params(n, beta, theta, mode)
    # keep the caller's rate bit-exact rather than the round-tripped one
    return ModelParams(n=p.n, beta=p.beta, theta=p.theta, lambda_n=float(lambda_n),
                       correlation_mode=mode)


# ---------------------------------------------------------------------------
# Seeding.
#
# Streams are Philox (counter-based) generators keyed by a SeedSpec.  The key
# material is SeedSequence(entropy=(master_seed, *sha256(key string))), where
# the key string is "experiment|n|replication|purpose".  Distinct keys give
# independent, reproducible substreams; the scheme is fixed and documented
# here so runs can be replayed across machines.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeedSpec:
    """Addressable random stream: master seed plus a structured stream key."""

    master_seed: int
    experiment: str = ""
    n: int = 0
    replication: int = 0
    purpose: str = ""

    def with_key(self, **kwargs) -> "SeedSpec":
        """Copy of this spec with some key fields replaced."""
        fields_ = dict(master_seed=self.master_seed, experiment=self.experiment,
                       n=self.n, replication=self.replication, purpose=self.purpose)
        fields_.update(kwargs)
        return SeedSpec(**fields_)

    def seed_sequence(self) -> np.random.SeedSequence:
        key = f"{self.experiment}|{self.n}|{self.replication}|{self.purpose}"
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 32, 4)]
        return np.random.SeedSequence(entropy=(int(self.master_seed) & (2 ** 64 - 1), *words))

    def stream(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.seed_sequence()))

    def echo(self) -> dict:
        """Serializable form embedded in output artifacts for provenance."""
        return {"master_seed": int(self.master_seed), "experiment": self.experiment,
                "n": int(self.n), "replication": int(self.replication), "purpose": self.purpose}


class ExpSampler:
    """Unit-mean exponential draws by inverse CDF, -ln(U) with U in (0, 1).

    Draws are taken in blocks from a Philox stream; zeros of the uniform
    (probability 2^-53 per draw) are redrawn so ln(0) cannot occur.
    """

    def __init__(self, rng: np.random.Generator, block: int = 8192):
        self._rng = rng
        self._block = block
        self._buf: list = []
        self._i = 0

    def _refill(self) -> None:
        u = self._rng.random(self._block)
        zero = u == 0.0
        while zero.any():
            u[zero] = self._rng.random(int(zero.sum()))
            zero = u == 0.0
        self._buf = (-np.log(u)).tolist()  # list indexing beats ndarray scalar reads
        self._i = 0

    def next(self) -> float:
        i = self._i
        buf = self._buf
        if i >= len(buf):
            self._refill()
            i = 0
            buf = self._buf
        self._i = i + 1
        return buf[i]

    def draw(self, size: int) -> np.ndarray:
        out = np.empty(size)
        for k in range(size):
            out[k] = self.next()
        return out


@dataclass(slots=True)
class Customer:
    """One arrival's full lifecycle.

    In perfect mode the patience is computed as service_req / theta, so that
    relation holds bit-exactly under this evaluation order.
    """

    id: int
    arrival_time: float
    service_req: float
    patience: float
    abandon_deadline: float
    service_start: float | None = None
    service_end: float | None = None
    # runtime bookkeeping used by the simulator
    status: int = 0
    phase1_end: float = 0.0


def sample_customer(exp: ExpSampler, params: ModelParams, arrival_time: float,
                    cid: int = 0) -> Customer:
    """Draw one customer's (S, T) pair per the configured correlation mode.

    S is marginally unit-mean exponential.  Perfect mode sets T = S/theta,
    independent mode draws T ~ Exp(mean 1/theta) from a fresh exponential,
    and none mode gives infinite patience.
    """
    if arrival_time < 0:
        raise ConfigError(f"arrival_time must be >= 0, got {arrival_time}")
    s = exp.next()
    mode = params.correlation_mode
    if mode == "perfect":
        t = s / params.theta
    elif mode == "independent":
        t = exp.next() / params.theta
    else:
        t = math.inf
    return Customer(id=cid, arrival_time=arrival_time, service_req=s, patience=t,
                    abandon_deadline=arrival_time + t)
