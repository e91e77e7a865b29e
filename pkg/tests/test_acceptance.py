"""Acceptance suite: scaled-down statistical reproduction of the limit theorems
plus the exact property checks, one test per criterion (A1-A11).

Heavy sweeps are shared through module-scoped fixtures and the harness's sweep
memoization; the 'overloaded' (beta = -1) stationary sweep feeds A2, A3, A5 and
the first half of A8.  Debug invariant checking is enabled on every run that
feeds A1-A5, and A11 aggregates those violation counters.

Run with `pytest tests/test_acceptance.py -v -s` to see one line per criterion.
Expect roughly 15-25 minutes on two cores.
"""

import math
import os
import time

import numpy as np
import pytest

from corrq import (EstimatorConfig, ExperimentPlan, OdeSpec, SeedSpec, DiffusionSpec,
                   compare_pc_erlangA_stationary, couple_pc_infserver, couple_pc_pc,
                   hw_stationary, ks_statistic, lof_closed, lof_ode_solve, make_params,
                   params_from_rate, run_diffusion_divergence, run_diffusion_stationary,
                   run_lof_fixed_point, run_lof_transient, run_workload_scaling,
                   sde_ensemble_states, x_star)

WORKERS = int(os.environ.get("CORRQ_TEST_WORKERS", "2"))
MASTER = 20260809

SQRT2 = math.sqrt(2.0)


def announce(line: str) -> None:
    print(line, flush=True)


# ---------------------------------------------------------------------------
# shared heavy fixtures
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def a1_run():
    plan = ExperimentPlan(kind="diffusion_stationary", n_values=(400, 1600), beta=1.0,
                          theta=0.5, samples=2000, replications=8, burn_in_mult=20.0,
                          spacing_lof=1.0, master_seed=MASTER, experiment="accept-a1",
                          check_invariants=True)
    t0 = time.time()
    report = run_diffusion_stationary(plan, workers=WORKERS)
    return report, time.time() - t0


def _overloaded_plan(kind: str, **extra) -> ExperimentPlan:
    return ExperimentPlan(kind=kind, n_values=(256, 1024, 4096), beta=-1.0, theta=1.0,
                          samples=1600, replications=8, burn_in_mult=20.0,
                          spacing_lof=1.0, master_seed=MASTER,
                          experiment="accept-overloaded", check_invariants=True, **extra)


@pytest.fixture(scope="module")
def overloaded_reports():
    # one stationary sweep (memoized) evaluated three ways
    fixed_point = run_lof_fixed_point(_overloaded_plan("lof_fixed_point"), workers=WORKERS)
    divergence = run_diffusion_divergence(
        _overloaded_plan("diffusion_divergence", threshold_m=5.0), workers=WORKERS)
    workload = run_workload_scaling(_overloaded_plan("workload_scaling"), workers=WORKERS)
    return {"fixed_point": fixed_point, "divergence": divergence, "workload": workload}


@pytest.fixture(scope="module")
def transient_report():
    # The grid samples every 0.5 fluid time units.  Right after a fresh start
    # the prelimit dips below the fluid path while phase-1 occupancy builds up
    # (an initial layer of width ~n^(-1/4) in scaled time and depth
    # ~theta*x0^2*n^(-1/4); see test_harness.py::test_fresh_start_initial_layer),
    # so a meaningful tracking check starts past that layer.
    plan = ExperimentPlan(kind="lof_transient", n_values=(4096,), beta=-1.0, theta=1.0,
                          x0=3.0, t_max=3.0, grid_points=7, replications=50,
                          samples=1, master_seed=MASTER, experiment="accept-transient",
                          check_invariants=True)
    return run_lof_transient(plan, workers=WORKERS)


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------


def test_a1_diffusion_stationary_match(a1_run):
    report, elapsed = a1_run
    ks = {entry["n"]: entry["ks"] for entry in report.per_n}
    ok = (ks[1600] <= 0.06 and report.verdicts["ks_non_increasing_with_slack"]
          and elapsed <= 900.0)
    announce(f"A1 {'PASS' if ok else 'FAIL'}: KS(400)={ks[400]:.4f}, "
             f"KS(1600)={ks[1600]:.4f} (<=0.06), trend ok="
             f"{report.verdicts['ks_non_increasing_with_slack']}, runtime={elapsed:.0f}s")
    assert ks[1600] <= 0.06
    assert report.verdicts["ks_non_increasing_with_slack"]
    assert elapsed <= 900.0


def test_a2_lof_fixed_point(overloaded_reports):
    report = overloaded_reports["fixed_point"]
    entry = report.per_n[-1]
    assert entry["n"] == 4096
    rel = entry["rel_err_vs_xstar"]
    ok = rel <= 0.10 or report.verdicts["final_ci_contains_or_within"]
    announce(f"A2 {'PASS' if ok else 'FAIL'}: E[Q]/n^0.75 = {entry['q_scaled']:.4f} "
             f"vs sqrt(2)={SQRT2:.4f}, rel err {rel * 100:.1f}% (<=10%), "
             f"CI={entry['ci95_scaled']}")
    assert ok


def test_a3_queue_scaling_slope(overloaded_reports):
    report = overloaded_reports["fixed_point"]
    slope = report.fit["slope"]
    ok = 0.70 <= slope <= 0.80
    announce(f"A3 {'PASS' if ok else 'FAIL'}: log E[Q] vs log n slope = {slope:.4f} "
             f"(in [0.70, 0.80]), R^2={report.fit['r_squared']:.5f}")
    assert 0.70 <= slope <= 0.80


def test_a4_lof_transient(transient_report):
    entry = transient_report.per_n[0]
    sup_gap = entry["sup_gap"]
    ok = sup_gap <= 0.15
    announce(f"A4 {'PASS' if ok else 'FAIL'}: sup gap to closed-form fluid path "
             f"= {sup_gap:.4f} (<=0.15) over t in [0,3], {entry['replications']} reps")
    assert sup_gap <= 0.15


def test_a5_diffusion_divergence(overloaded_reports):
    report = overloaded_reports["divergence"]
    probs = {e["n"]: e["p_exceed"] for e in report.per_n}
    # 'increasing' here tolerates ties once the probability saturates at 1
    ok = report.verdicts["non_decreasing"] and probs[4096] >= 0.9
    announce(f"A5 {'PASS' if ok else 'FAIL'}: P(Xhat > 5) = "
             f"{probs[256]:.3f} -> {probs[1024]:.3f} -> {probs[4096]:.3f} "
             f"(non-decreasing, final >= 0.9)")
    assert report.verdicts["non_decreasing"]
    assert probs[4096] >= 0.9


def test_a6_exact_couplings():
    # pc vs pc: two configurations, at least 1e5 shared customers each
    p1 = params_from_rate(1, 0.8, 0.4)
    p2 = params_from_rate(1, 0.8, 0.7)
    r_small = couple_pc_pc(p1, p2, horizon=140_000.0, seed=SeedSpec(MASTER, experiment="a6-n1"))
    q1 = params_from_rate(8, 7.5, 0.4)
    q2 = params_from_rate(8, 7.0, 0.8)
    r_multi = couple_pc_pc(q1, q2, horizon=15_000.0, seed=SeedSpec(MASTER, experiment="a6-n8"))
    inf_violations = 0
    inf_checked = 0
    params = make_params(4, -1.0, 1.0)
    for k in range(20):
        rep = couple_pc_infserver(params, horizon=1000.0,
                                  seed=SeedSpec(MASTER, experiment="a6-inf", replication=k))
        inf_violations += rep.violations
        inf_checked += rep.customers_checked
    ok = (r_small.violations == 0 and r_multi.violations == 0 and inf_violations == 0
          and r_small.customers_checked >= 100_000 and r_multi.customers_checked >= 100_000)
    announce(f"A6 {'PASS' if ok else 'FAIL'}: pc_pc violations="
             f"{r_small.violations}+{r_multi.violations} over "
             f"{r_small.customers_checked}+{r_multi.customers_checked} shared customers; "
             f"pc_infserver violations={inf_violations} over {inf_checked} customers, 20 seeds")
    assert r_small.customers_checked >= 100_000
    assert r_multi.customers_checked >= 100_000
    assert r_small.violations == 0
    assert r_multi.violations == 0
    assert inf_violations == 0


def test_a7_limit_model_numerics():
    # RK4 against the closed forms
    sup = 0.0
    for beta, theta, x0 in ((-1.0, 1.0, 3.0), (-1.0, 1.0, 0.0), (0.0, 1.0, 1.0),
                            (-2.0, 1.0, 2.0)):
        spec = OdeSpec(beta, theta, x0)
        grid = np.linspace(0.0, 10.0, 101)
        gap = np.abs(lof_ode_solve(spec, grid) - np.asarray(lof_closed(grid, spec))).max()
        sup = max(sup, gap)
    # law numerics
    from scipy.integrate import quad
    law = hw_stationary(1.0)
    mass = quad(lambda x: float(law.pdf(x)), -np.inf, 0.0)[0] + \
        quad(lambda x: float(law.pdf(x)), 0.0, np.inf)[0]
    draws = law.sample(SeedSpec(MASTER, experiment="a7-sampler").stream(), size=100_000)
    ks_sampler = ks_statistic(draws, law.cdf)
    # Euler-Maruyama tail samples pooled over independent paths (a single path
    # of horizon 200 has too few effective samples for a 0.03 bound)
    states = sde_ensemble_states(DiffusionSpec(beta=1.0), x0=0.0, dt=1e-3,
                                 sample_times=(100.0, 125.0, 150.0, 175.0, 200.0),
                                 npaths=1024, seed=SeedSpec(MASTER, experiment="a7-em"))
    ks_em = ks_statistic(states.ravel(), law.cdf)
    ok = (sup <= 1e-8 and abs(mass - 1.0) <= 1e-9 and ks_sampler <= 0.01 and ks_em <= 0.03)
    announce(f"A7 {'PASS' if ok else 'FAIL'}: RK4 sup gap={sup:.2e} (<=1e-8), "
             f"pdf mass err={abs(mass - 1.0):.1e} (<=1e-9), sampler KS={ks_sampler:.4f} "
             f"(<=0.01), EM tail KS={ks_em:.4f} (<=0.03)")
    assert sup <= 1e-8
    assert abs(mass - 1.0) <= 1e-9
    assert ks_sampler <= 0.01
    assert ks_em <= 0.03


def test_a8_workload_bounds(overloaded_reports):
    over = overloaded_reports["workload"]
    ratios = over.verdicts["sqrt_n_ratios"]
    ratios_ok = over.verdicts["ratios_within_[0.5,2]"]
    under_plan = ExperimentPlan(kind="workload_scaling", n_values=(256, 1024, 4096),
                                beta=1.0, theta=1.0, samples=1000, replications=8,
                                burn_in_mult=20.0, spacing_lof=1.0, master_seed=MASTER,
                                experiment="accept-a8-under")
    under = run_workload_scaling(under_plan, workers=WORKERS)
    flat_ok = under.verdicts["no_increasing_trend_95"]
    levels = [e["L_mean"] for e in under.per_n]
    ok = ratios_ok and flat_ok
    announce(f"A8 {'PASS' if ok else 'FAIL'}: beta=-1 L/sqrt(n) ratios={[f'{r:.3f}' for r in ratios]} "
             f"(in [0.5,2]); beta=1 levels={[f'{v:.3f}' for v in levels]} no significant increase={flat_ok}")
    assert ratios_ok
    assert flat_ok


def test_a9_erlang_a_stochastic_lower_bound():
    results = []
    for beta, theta in ((-1.0, 1.0), (1.0, 0.5)):
        params = make_params(64, beta, theta)
        cfg = EstimatorConfig(samples=2000, burn_in_mult=20.0, spacing_lof=1.0)
        rep = compare_pc_erlangA_stationary(
            params, cfg, SeedSpec(MASTER, experiment=f"a9-{beta}-{theta}"), alpha=0.01)
        results.append((beta, theta, rep))
    ok = all(r.violations == 0 for _, _, r in results)
    detail = "; ".join(f"beta={b}, theta={t}: margin={r.max_violation_margin:.4f} "
                       f"<= slack={r.dkw_slack:.4f}" for b, t, r in results)
    announce(f"A9 {'PASS' if ok else 'FAIL'}: {detail}")
    for _, _, r in results:
        assert r.violations == 0
        assert r.max_violation_margin <= r.dkw_slack


def test_a10_critical_slack_divergence():
    plan = ExperimentPlan(kind="diffusion_divergence", n_values=(256, 1024, 4096),
                          beta=0.0, theta=0.5, threshold_m=3.0, samples=1400,
                          replications=8, burn_in_mult=20.0, spacing_lof=1.0,
                          master_seed=MASTER, experiment="accept-a10")
    report = run_diffusion_divergence(plan, workers=WORKERS)
    probs = [e["p_exceed"] for e in report.per_n]
    ok = report.verdicts["strictly_increasing"]
    announce(f"A10 {'PASS' if ok else 'FAIL'}: P(Xhat > 3) at beta=0, theta=0.5: "
             f"{probs[0]:.3f} -> {probs[1]:.3f} -> {probs[2]:.3f} (strictly increasing)")
    assert ok


def test_a11_invariant_suite(a1_run, overloaded_reports, transient_report):
    reports = [a1_run[0], overloaded_reports["fixed_point"],
               overloaded_reports["divergence"], overloaded_reports["workload"],
               transient_report]
    total: dict = {}
    for rep in reports:
        for k, v in rep.violations.items():
            total[k] = total.get(k, 0) + v
    ok = sum(total.values()) == 0
    announce(f"A11 {'PASS' if ok else 'FAIL'}: invariant violations over all "
             f"A1-A5 runs: {total}")
    assert sum(total.values()) == 0
