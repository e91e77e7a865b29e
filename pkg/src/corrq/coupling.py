"""Constructive sample-path couplings and stochastic-order checks.

Two exact couplings re-run the comparison constructions inside one event loop,
sharing arrival epochs and service requirements by customer, and assert the
resulting pathwise orderings.  The stationary comparison against the
independent-patience twin is statistical: the orderings proof conditions on
turned-off arrivals, which is not a single realizable joint simulation, so the
testable consequence (CDF dominance) is checked with a DKW band instead.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass, replace


from .engine import Sim
from .errors import ConfigError
from .model import ExpSampler, ModelParams, SeedSpec
from .stationary import EstimatorConfig, collect_stationary
from .stats import dkw_epsilon, ecdf_max_gap


@dataclass
class CouplingReport:
    """Outcome of one coupled run or stationary dominance check."""

    kind: str
    params: dict
    customers_checked: int = 0
    epochs_checked: int = 0
    violations: int = 0
    first_violation: dict | None = None
    max_violation_margin: float | None = None
    ci_alpha: float | None = None
    dkw_slack: float | None = None
    seed: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _theta_of(params: ModelParams) -> float:
    return 0.0 if params.correlation_mode == "none" else params.theta


def couple_pc_pc(params1: ModelParams, params2: ModelParams, horizon: float,
                 seed: SeedSpec) -> CouplingReport:
    """Couple two correlated-patience systems and verify per-customer sojourn order.

    System 1 receives the shared Poisson stream (rate lambda_2) plus an
    independent stream of rate lambda_1 - lambda_2; shared customers carry the
    same service requirement in both systems.  Every shared customer must stay
    in system 1 at least as long as in system 2.
    """
    th1, th2 = _theta_of(params1), _theta_of(params2)
    if params1.n != params2.n:
        raise ConfigError("coupled systems must share the agent count")
    if params1.lambda_n < params2.lambda_n:
        raise ConfigError("need lambda_1 >= lambda_2")
    identical = (params1.lambda_n == params2.lambda_n and th1 == th2
                 and params1.correlation_mode == params2.correlation_mode)
    if not identical:
        # hypotheses of the sojourn-ordering argument; equality of the two
        # systems is admissible separately because the coupling is then the
        # identity and the ordering is trivial
        if not 0 <= th1 < 1:
            raise ConfigError(f"need 0 <= theta_1 < 1, got {th1}")
        if th1 > 0 and th2 < th1 / (1.0 - th1):
            raise ConfigError(f"need theta_2 >= theta_1/(1-theta_1) = {th1 / (1 - th1):.6g}")
        if th1 == 0 and params1.lambda_n >= params1.n:
            raise ConfigError("with theta_1 = 0 the upper system needs lambda_1 < n to be stable")
        if params2.correlation_mode != "perfect":
            raise ConfigError("system 2 must have perfectly correlated patience")
    if not horizon > 0:
        raise ConfigError("horizon must be > 0")

    sys1 = Sim(params1, external_arrivals=True, seed=seed.with_key(purpose="sys1"),
               track_resolutions=True)
    sys2 = Sim(params2, external_arrivals=True, seed=seed.with_key(purpose="sys2"),
               track_resolutions=True)
    shared_exp = ExpSampler(seed.with_key(purpose="shared-arrivals").stream())
    service_exp = ExpSampler(seed.with_key(purpose="shared-service").stream())
    extra_rate = params1.lambda_n - params2.lambda_n
    extra_exp = ExpSampler(seed.with_key(purpose="extra").stream()) if extra_rate > 0 else None
    extra_service = ExpSampler(seed.with_key(purpose="extra-service").stream()) if extra_rate > 0 else None

    next_shared = shared_exp.next() / params2.lambda_n
    next_extra = (extra_exp.next() / extra_rate) if extra_rate > 0 else math.inf
    shared = []  # (cid1, cid2, arrival_time)

    epochs = 0
    violations = 0
    first = None
    while True:
        t = min(sys1.peek_time(), sys2.peek_time(), next_shared, next_extra)
        if t > horizon:
            break
        while sys1.peek_time() == t:
            sys1.step()
        while sys2.peek_time() == t:
            sys2.step()
        if next_shared == t:
            s = service_exp.next()
            t1 = math.inf if th1 == 0 else s / th1
            cid1 = sys1.inject_arrival(t, s, t1)
            cid2 = sys2.inject_arrival(t, s, s / th2)
            shared.append((cid1, cid2, t))
            next_shared = t + shared_exp.next() / params2.lambda_n
        if next_extra == t:
            s = extra_service.next()
            t1 = math.inf if th1 == 0 else s / th1
            sys1.inject_arrival(t, s, t1)
            next_extra = t + extra_exp.next() / extra_rate
        epochs += 1
        if sys1.X < sys2.X:
            violations += 1
            if first is None:
                first = {"time": t, "what": "path order", "X1": sys1.X, "X2": sys2.X}

    checked = 0
    max_margin = -math.inf
    for cid1, cid2, arr in shared:
        r2 = sys2.resolved.get(cid2)
        if r2 is None:
            continue  # still in system 2 at the horizon; order not decidable
        sojourn2 = r2[0] - arr
        r1 = sys1.resolved.get(cid1)
        # unresolved in system 1 means sojourn_1 > horizon - arr >= sojourn_2
        sojourn1 = (r1[0] - arr) if r1 is not None else math.inf
        checked += 1
        margin = sojourn2 - sojourn1
        if margin > max_margin:
            max_margin = margin
        if sojourn1 < sojourn2:
            violations += 1
            if first is None:
                first = {"time": arr, "what": "sojourn order",
                         "sojourn1": sojourn1, "sojourn2": sojourn2}

    return CouplingReport(
        kind="pc_pc",
        params={"n": params1.n, "lambda1": params1.lambda_n, "theta1": th1,
                "lambda2": params2.lambda_n, "theta2": th2, "horizon": horizon},
        customers_checked=checked, epochs_checked=epochs, violations=violations,
        first_violation=first,
        max_violation_margin=None if max_margin == -math.inf else float(max_margin),
        seed=seed.echo())


def couple_pc_infserver(params: ModelParams, horizon: float, seed: SeedSpec) -> CouplingReport:
    """Couple with an infinite-server twin holding each customer for S + T.

    Same arrivals and the same (S, T) per customer; the finite system's path
    must stay below the twin's and each customer must leave no later.
    """
    if params.correlation_mode != "perfect":
        raise ConfigError("infinite-server coupling is defined for perfect correlation")
    if not horizon > 0:
        raise ConfigError("horizon must be > 0")
    pc = Sim(params, external_arrivals=True, seed=seed.with_key(purpose="pc"),
             track_resolutions=True)
    arrival_exp = ExpSampler(seed.with_key(purpose="arrivals").stream())
    service_exp = ExpSampler(seed.with_key(purpose="service").stream())

    inf_heap: list = []
    x_inf = 0
    next_arrival = arrival_exp.next() / params.lambda_n
    twin_departure = {}  # cid -> infinite-server departure epoch

    epochs = 0
    violations = 0
    first = None
    while True:
        t_inf = inf_heap[0][0] if inf_heap else math.inf
        t = min(pc.peek_time(), t_inf, next_arrival)
        if t > horizon:
            break
        while pc.peek_time() == t:
            pc.step()
        while inf_heap and inf_heap[0][0] == t:
            heapq.heappop(inf_heap)
            x_inf -= 1
        if next_arrival == t:
            s = service_exp.next()
            patience = s / params.theta
            cid = pc.inject_arrival(t, s, patience)
            # twin holds the customer until its own deadline plus service
            d_inf = (t + patience) + s
            twin_departure[cid] = d_inf
            heapq.heappush(inf_heap, (d_inf, cid))
            x_inf += 1
            next_arrival = t + arrival_exp.next() / params.lambda_n
        epochs += 1
        if pc.X > x_inf:
            violations += 1
            if first is None:
                first = {"time": t, "what": "path order", "X_pc": pc.X, "X_inf": x_inf}

    checked = 0
    max_margin = -math.inf
    for cid, d_inf in twin_departure.items():
        r = pc.resolved.get(cid)
        leave_pc = r[0] if r is not None else math.inf
        if math.isinf(leave_pc) and d_inf > horizon:
            continue  # neither resolution observed
        checked += 1
        margin = leave_pc - d_inf
        if margin > max_margin:
            max_margin = margin
        if leave_pc > d_inf:
            violations += 1
            if first is None:
                first = {"time": d_inf, "what": "departure order",
                         "leave_pc": leave_pc, "leave_twin": d_inf}

    return CouplingReport(
        kind="pc_infserver",
        params={"n": params.n, "beta": params.beta, "theta": params.theta,
                "lambda": params.lambda_n, "horizon": horizon},
        customers_checked=checked, epochs_checked=epochs, violations=violations,
        first_violation=first,
        max_violation_margin=None if max_margin == -math.inf else float(max_margin),
        seed=seed.echo())


def compare_pc_erlangA_stationary(params: ModelParams, config: EstimatorConfig,
                                  seed: SeedSpec, alpha: float = 0.01) -> CouplingReport:
    """Check the independent-patience twin is a stochastic lower bound in steady state.

    Estimates both stationary CDFs of the total count and requires
    F_indep(x) >= F_pc(x) pointwise up to a simultaneous DKW band at
    confidence 1 - alpha.
    """
    if params.correlation_mode != "perfect":
        raise ConfigError("base system must have perfectly correlated patience")
    if not 0 < alpha < 1:
        raise ConfigError("alpha must be in (0, 1)")
    if config.samples < 10:
        raise ConfigError("too few samples for a meaningful dominance band")
    twin = replace(params, correlation_mode="independent")
    pc_out, _ = collect_stationary(params, config, seed.with_key(purpose="pc"), ("X",))
    a_out, _ = collect_stationary(twin, config, seed.with_key(purpose="erlang-a"), ("X",))
    x_pc = pc_out["X"].samples
    x_a = a_out["X"].samples
    margin = ecdf_max_gap(lower_samples=x_a, upper_samples=x_pc)
    slack = dkw_epsilon(x_a.size, alpha / 2, two_sided=False) \
        + dkw_epsilon(x_pc.size, alpha / 2, two_sided=False)
    return CouplingReport(
        kind="pc_erlangA_stat",
        params={"n": params.n, "beta": params.beta, "theta": params.theta,
                "lambda": params.lambda_n, "samples": config.samples},
        customers_checked=int(x_pc.size + x_a.size),
        epochs_checked=int(x_pc.size),
        violations=int(margin > slack),
        max_violation_margin=float(margin),
        ci_alpha=alpha,
        dkw_slack=float(slack),
        seed=seed.echo())
