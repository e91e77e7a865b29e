"""n-sweep experiments confronting simulation estimates with the limit models.

Each experiment fans replication chains out across worker processes (each chain
owns its seeded streams, so results are independent of scheduling), pools the
retained samples, and reports estimates with chain-level confidence intervals.
Stationary sweeps always record X, Q and L at the same epochs and are memoized
per plan key, so several experiments over the same sweep cost one set of runs.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import InitSpec, Sim
from .errors import ConfigError
from .limits import OdeSpec, hw_stationary, lof_closed, x_star
from .model import ModelParams, SeedSpec, make_params
from .stationary import EstimatorConfig, collect_stationary
from .stats import ks_statistic, slope_fit

EXPERIMENT_KINDS = ("diffusion_stationary", "lof_fixed_point", "lof_transient",
                    "diffusion_divergence", "workload_scaling")

SWEEP_OBSERVABLES = ("X", "Q", "L")

# two-sided 95% asymptotic KS critical coefficient: crit = KS_COEF / sqrt(N)
KS_COEF_95 = 1.358

Z_95 = 1.959963984540054          # two-sided 95% normal quantile
Z_ONESIDED_95 = 1.6448536269514722


@dataclass(frozen=True)
class ExperimentPlan:
    """A declarative n-sweep: which experiment, at which sizes, how estimated."""

    kind: str
    n_values: tuple
    beta: float
    theta: float
    mode: str = "perfect"
    samples: int = 1000
    replications: int = 4
    burn_in_mult: float = 20.0
    spacing_lof: float = 1.0
    master_seed: int = 0
    experiment: str = ""
    threshold_m: float = 5.0      # diffusion_divergence
    x0: float = 0.0               # lof_transient
    t_max: float = 3.0            # lof_transient
    grid_points: int = 31         # lof_transient
    check_invariants: bool = False

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if not self.n_values or list(self.n_values) != sorted(set(int(n) for n in self.n_values)):
            raise ConfigError("n_values must be strictly increasing")
        if self.kind == "diffusion_stationary" and not self.beta > 0:
            raise ConfigError("diffusion_stationary requires beta > 0")
        if self.kind in ("lof_fixed_point", "lof_transient") and self.beta > 0:
            raise ConfigError(f"{self.kind} requires beta <= 0")
        if self.kind == "diffusion_divergence":
            if not (self.beta < 0 or (self.beta == 0 and self.theta < 1)):
                raise ConfigError("diffusion_divergence requires beta < 0, or beta = 0 with theta < 1")
            if not self.threshold_m > 0:
                raise ConfigError("threshold_m must be > 0")
        if self.kind == "lof_transient" and self.x0 < 0:
            raise ConfigError("lof_transient requires x0 >= 0")
        if self.samples < 1 or self.replications < 1:
            raise ConfigError("samples and replications must be >= 1")

    def estimator_config(self) -> EstimatorConfig:
        per_chain = -(-self.samples // self.replications)
        return EstimatorConfig(samples=per_chain, burn_in_mult=self.burn_in_mult,
                               spacing_lof=self.spacing_lof)

    def seed_root(self) -> SeedSpec:
        return SeedSpec(master_seed=self.master_seed, experiment=self.experiment or self.kind)

    def params_for(self, n: int) -> ModelParams:
        return make_params(n, self.beta, self.theta, self.mode)


def load_plan(source) -> ExperimentPlan:
    """Read a plan from a TOML or JSON file path, or from an equivalent dict."""
    if isinstance(source, dict):
        raw = dict(source)
    else:
        path = os.fspath(source)
        if not os.path.exists(path):
            raise ConfigError(f"plan file not found: {path}")
        with open(path, "rb") as fh:
            blob = fh.read()
        if path.endswith(".json"):
            raw = json.loads(blob.decode("utf-8"))
        else:
            try:
                import tomllib as toml_mod  # py >= 3.11
            except ModuleNotFoundError:
                import tomli as toml_mod
            raw = toml_mod.loads(blob.decode("utf-8"))
    seed = raw.pop("seed", {})
    raw.setdefault("master_seed", seed.get("master", 0))
    raw.setdefault("experiment", seed.get("experiment", ""))
    if "n_values" in raw:
        raw["n_values"] = tuple(int(n) for n in raw["n_values"])
    known = set(ExperimentPlan.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown plan fields: {sorted(unknown)}")
    missing = [k for k in ("kind", "n_values", "beta", "theta") if k not in raw]
    if missing:
        raise ConfigError(f"plan is missing required fields: {missing}")
    try:
        return ExperimentPlan(**raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


@dataclass
class FitReport:
    """Per-n estimates plus an optional fit and named verdict flags."""

    kind: str
    params: dict
    per_n: list
    fit: dict | None
    verdicts: dict
    ci_method: str
    seed: dict
    violations: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


# -- chain fan-out -----------------------------------------------------------------


def _chain_worker(job):
    params, cfg, seed, observables, check = job
    out, sim = collect_stationary(params, cfg, seed, observables=observables,
                                  check_invariants=check)
    return ({obs: out[obs].samples for obs in observables}, dict(sim.violations))


def _transient_worker(job):
    params, x0_count, horizon, record_times, seed, check = job
    sim = Sim(params, init=InitSpec.fresh(x0_count), seed=seed, check_invariants=check)
    cols = sim.run(horizon, record_times=record_times, record_fields=("X",))
    return cols["X"], dict(sim.violations)


def _run_jobs(worker, jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(worker, jobs))


_sweep_cache: dict = {}


def clear_sweep_cache() -> None:
    _sweep_cache.clear()


def stationary_sweep(plan: ExperimentPlan, workers: int = 1) -> dict:
    """Pooled steady-state samples of X, Q, L for every n in the plan.

    Returns {n: {"pooled": {obs: array}, "chain_means": {obs: array},
    "violations": dict}}; memoized so aligned experiments share one sweep.
    """
    key = (plan.n_values, plan.beta, plan.theta, plan.mode, plan.samples,
           plan.replications, plan.burn_in_mult, plan.spacing_lof,
           plan.master_seed, plan.experiment or plan.kind, plan.check_invariants)
    if key in _sweep_cache:
        return _sweep_cache[key]
    while len(_sweep_cache) >= 8:    # bound memory in long-lived processes
        _sweep_cache.pop(next(iter(_sweep_cache)))
    cfg = plan.estimator_config()
    root = plan.seed_root()
    result = {}
    for n in plan.n_values:
        params = plan.params_for(n)
        jobs = [(params, cfg, root.with_key(n=n, replication=c), SWEEP_OBSERVABLES,
                 plan.check_invariants) for c in range(plan.replications)]
        outs = _run_jobs(_chain_worker, jobs, workers)
        pooled = {obs: np.concatenate([o[0][obs] for o in outs]) for obs in SWEEP_OBSERVABLES}
        chain_means = {obs: np.asarray([o[0][obs].mean() for o in outs])
                       for obs in SWEEP_OBSERVABLES}
        violations = {}
        for o in outs:
            for k, v in o[1].items():
                violations[k] = violations.get(k, 0) + v
        result[n] = {"pooled": pooled, "chain_means": chain_means, "violations": violations}
    _sweep_cache[key] = result
    return result


def _chain_ci(chain_means: np.ndarray) -> tuple[float, float]:
    """Mean and standard error across independent chains."""
    k = chain_means.size
    mean = float(chain_means.mean())
    se = float(chain_means.std(ddof=1) / math.sqrt(k)) if k > 1 else float("nan")
    return mean, se


def _total_violations(sweep) -> dict:
    total = {}
    for entry in sweep.values():
        for k, v in entry["violations"].items():
            total[k] = total.get(k, 0) + v
    return total


# -- experiments --------------------------------------------------------------------


def run_diffusion_stationary(plan: ExperimentPlan, workers: int = 1) -> FitReport:
    """Per-n KS distance of (X(inf) - n)/sqrt(n) to the positive-slack limit law."""
    if plan.kind != "diffusion_stationary":
        raise ConfigError(f"plan kind {plan.kind!r} does not match this experiment")
    law = hw_stationary(plan.beta)
    sweep = stationary_sweep(plan, workers)
    per_n = []
    for n in plan.n_values:
        x = sweep[n]["pooled"]["X"]
        xhat = (x - n) / math.sqrt(n)
        ks = ks_statistic(xhat, law.cdf)
        per_n.append({"n": n, "samples": int(x.size), "ks": ks,
                      "ks_crit_95": KS_COEF_95 / math.sqrt(x.size)})
    non_increasing = True
    for a, b in zip(per_n, per_n[1:]):
        slack = KS_COEF_95 * math.sqrt(1.0 / a["samples"] + 1.0 / b["samples"])
        if b["ks"] > a["ks"] + slack:
            non_increasing = False
    verdicts = {"ks_non_increasing_with_slack": non_increasing,
                "ks_final": per_n[-1]["ks"]}
    return FitReport(kind=plan.kind,
                     params=_plan_params(plan), per_n=per_n, fit=None, verdicts=verdicts,
                     ci_method="pooled KS with 95% asymptotic critical value; "
                               "trend slack 1.358*sqrt(1/N1+1/N2)",
                     seed=plan.seed_root().echo(), violations=_total_violations(sweep))


def run_lof_fixed_point(plan: ExperimentPlan, workers: int = 1) -> FitReport:
    """E[Q(inf)]/n^(3/4) against the fluid fixed point, plus a log-log slope."""
    if plan.kind != "lof_fixed_point":
        raise ConfigError(f"plan kind {plan.kind!r} does not match this experiment")
    target = x_star(plan.beta, plan.theta)
    sweep = stationary_sweep(plan, workers)
    per_n = []
    for n in plan.n_values:
        mean, se = _chain_ci(sweep[n]["chain_means"]["Q"])
        scale = float(n) ** 0.75
        per_n.append({"n": n, "q_mean": mean, "q_se": se,
                      "q_scaled": mean / scale, "q_scaled_se": se / scale,
                      "ci95_scaled": [max(mean - Z_95 * se, 0.0) / scale,
                                      (mean + Z_95 * se) / scale],
                      "rel_err_vs_xstar": abs(mean / scale - target) / target if target > 0 else None})
    fit = None
    if len(per_n) >= 2:
        lf = slope_fit([math.log(p["n"]) for p in per_n],
                       [math.log(p["q_mean"]) for p in per_n])
        fit = {"slope": lf.slope, "intercept": lf.intercept, "slope_se": lf.slope_se,
               "r_squared": lf.r_squared, "points": lf.points}
    verdicts = {"x_star": target,
                "final_rel_err": per_n[-1]["rel_err_vs_xstar"],
                "final_ci_contains_or_within": _ci_contains_or_within(per_n[-1], target)}
    if fit is not None:
        verdicts["slope"] = fit["slope"]
    return FitReport(kind=plan.kind, params=_plan_params(plan), per_n=per_n, fit=fit,
                     verdicts=verdicts,
                     ci_method="independent-chain means, normal 95% interval",
                     seed=plan.seed_root().echo(), violations=_total_violations(sweep))


def _ci_contains_or_within(entry: dict, target: float, band: float = 0.10) -> bool:
    lo, hi = entry["ci95_scaled"]
    in_ci = lo <= target <= hi
    within = abs(entry["q_scaled"] - target) <= band * target if target > 0 else False
    return bool(in_ci or within)


def run_lof_transient(plan: ExperimentPlan, workers: int = 1) -> FitReport:
    """Mean fluid-scaled path over replications against the closed-form solution."""
    if plan.kind != "lof_transient":
        raise ConfigError(f"plan kind {plan.kind!r} does not match this experiment")
    spec = OdeSpec(beta=plan.beta, theta=plan.theta, x0=plan.x0)
    grid = np.linspace(0.0, plan.t_max, plan.grid_points)
    closed = np.asarray(lof_closed(grid, spec))
    root = plan.seed_root()
    per_n = []
    violations: dict = {}
    for n in plan.n_values:
        params = plan.params_for(n)
        n_q = float(n) ** 0.25
        n_tq = float(n) ** 0.75
        x0_count = n + int(round(plan.x0 * n_tq))
        horizon = float(n_q * plan.t_max)
        record_times = n_q * grid
        record_times[0] = 0.0
        jobs = [(params, x0_count, horizon, record_times,
                 root.with_key(n=n, replication=r), plan.check_invariants)
                for r in range(plan.replications)]
        outs = _run_jobs(_transient_worker, jobs, workers)
        paths = np.stack([(o[0] - n) / n_tq for o in outs])
        for o in outs:
            for k, v in o[1].items():
                violations[k] = violations.get(k, 0) + v
        mean_path = paths.mean(axis=0)
        se_path = paths.std(axis=0, ddof=1) / math.sqrt(paths.shape[0]) if paths.shape[0] > 1 \
            else np.full(grid.size, np.nan)
        gap = np.abs(mean_path - closed)
        per_n.append({"n": n, "replications": int(paths.shape[0]),
                      "sup_gap": float(gap.max()),
                      "grid": grid.tolist(), "mean_path": mean_path.tolist(),
                      "se_path": se_path.tolist(), "closed": closed.tolist()})
    verdicts = {"sup_gap_final": per_n[-1]["sup_gap"]}
    return FitReport(kind=plan.kind, params=_plan_params(plan), per_n=per_n, fit=None,
                     verdicts=verdicts,
                     ci_method="replication means, pointwise normal 95% interval",
                     seed=root.echo(), violations=violations)


def run_diffusion_divergence(plan: ExperimentPlan, workers: int = 1) -> FitReport:
    """Trend of P((X(inf) - n)/sqrt(n) > M) across n."""
    if plan.kind != "diffusion_divergence":
        raise ConfigError(f"plan kind {plan.kind!r} does not match this experiment")
    m = plan.threshold_m
    sweep = stationary_sweep(plan, workers)
    per_n = []
    for n in plan.n_values:
        x = sweep[n]["pooled"]["X"]
        xhat = (x - n) / math.sqrt(n)
        indicator = (xhat > m).astype(float)
        chains = np.array_split(indicator, plan.replications)
        chain_p = np.asarray([c.mean() for c in chains if c.size])
        p, se = _chain_ci(chain_p)
        per_n.append({"n": n, "samples": int(x.size), "p_exceed": p, "p_se": se})
    probs = [p["p_exceed"] for p in per_n]
    verdicts = {"strictly_increasing": all(b > a for a, b in zip(probs, probs[1:])),
                "non_decreasing": all(b >= a for a, b in zip(probs, probs[1:])),
                "p_final": probs[-1], "threshold_m": m}
    return FitReport(kind=plan.kind, params=_plan_params(plan), per_n=per_n, fit=None,
                     verdicts=verdicts,
                     ci_method="independent-chain proportions, normal 95% interval",
                     seed=plan.seed_root().echo(), violations=_total_violations(sweep))


def run_workload_scaling(plan: ExperimentPlan, workers: int = 1) -> FitReport:
    """Steady-state workload levels: sqrt(n) ratios for beta <= 0, flatness for beta > 0."""
    if plan.kind != "workload_scaling":
        raise ConfigError(f"plan kind {plan.kind!r} does not match this experiment")
    sweep = stationary_sweep(plan, workers)
    per_n = []
    for n in plan.n_values:
        mean, se = _chain_ci(sweep[n]["chain_means"]["L"])
        per_n.append({"n": n, "L_mean": mean, "L_se": se,
                      "L_over_sqrt_n": mean / math.sqrt(n),
                      "L_over_sqrt_n_se": se / math.sqrt(n)})
    verdicts: dict = {}
    if plan.beta <= 0:
        ratios = []
        for a, b in zip(per_n, per_n[1:]):
            ratios.append(b["L_over_sqrt_n"] / a["L_over_sqrt_n"])
        verdicts["sqrt_n_ratios"] = ratios
        verdicts["ratios_within_[0.5,2]"] = all(0.5 <= r <= 2.0 for r in ratios)
    else:
        significant_increase = False
        pairs = list(zip(per_n, per_n[1:])) + ([(per_n[0], per_n[-1])] if len(per_n) > 2 else [])
        for a, b in pairs:
            gap = b["L_mean"] - a["L_mean"]
            joint_se = math.hypot(a["L_se"], b["L_se"])
            if joint_se > 0 and gap > Z_ONESIDED_95 * joint_se:
                significant_increase = True
        verdicts["no_increasing_trend_95"] = not significant_increase
    return FitReport(kind=plan.kind, params=_plan_params(plan), per_n=per_n, fit=None,
                     verdicts=verdicts,
                     ci_method="independent-chain means; one-sided 95% z trend test",
                     seed=plan.seed_root().echo(), violations=_total_violations(sweep))


EXPERIMENTS = {
    "diffusion_stationary": run_diffusion_stationary,
    "lof_fixed_point": run_lof_fixed_point,
    "lof_transient": run_lof_transient,
    "diffusion_divergence": run_diffusion_divergence,
    "workload_scaling": run_workload_scaling,
}


def _plan_params(plan: ExperimentPlan) -> dict:
    d = asdict(plan)
    d["n_values"] = list(plan.n_values)
    return d


def run_experiment(plan: ExperimentPlan, workers: int = 1):
    """Run the plan's experiment; returns (FitReport, raw CSV payloads by name)."""
    report = EXPERIMENTS[plan.kind](plan, workers)
    raw: dict[str, str] = {}
    if plan.kind == "lof_transient":
        for entry in report.per_n:
            lines = ["t,mean,se,closed"]
            for t, mval, s, c in zip(entry["grid"], entry["mean_path"],
                                     entry["se_path"], entry["closed"]):
                lines.append(f"{t:.17g},{mval:.17g},{s:.17g},{c:.17g}")
            raw[f"path_n{entry['n']}.csv"] = "\n".join(lines) + "\n"
    else:
        sweep = stationary_sweep(plan, workers)
        obs = {"diffusion_stationary": "X", "lof_fixed_point": "Q",
               "diffusion_divergence": "X", "workload_scaling": "L"}[plan.kind]
        for n in plan.n_values:
            vals = sweep[n]["pooled"][obs]
            lines = ["sample_index,value"]
            lines.extend(f"{i},{v:.17g}" for i, v in enumerate(vals))
            raw[f"samples_{obs}_n{n}.csv"] = "\n".join(lines) + "\n"
    return report, raw


def write_experiment_outputs(report: FitReport, raw: dict, out_dir) -> list:
    """Write summary.json plus raw CSVs; returns the written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    summary = os.path.join(out_dir, f"{report.kind}_summary.json")
    with open(summary, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    paths.append(summary)
    for name, payload in raw.items():
        p = os.path.join(out_dir, name)
        with open(p, "w", encoding="utf-8") as fh:
            fh.write(payload)
        paths.append(p)
    return paths
