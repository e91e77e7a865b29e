"""FastAPI service exposing the simulator, limit models, couplings and experiments.

The CLI is a thin client of this app (in-process by default); run it standalone
with `uvicorn corrq.service.app:app`.
"""

from __future__ import annotations


import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..coupling import compare_pc_erlangA_stationary, couple_pc_infserver, couple_pc_pc
from ..engine import InitSpec, simulate
from ..errors import ConfigError
from ..harness import ExperimentPlan, run_experiment
from ..limits import OdeSpec, hw_stationary, lof_closed, x_star
from ..model import ModelParams, SeedSpec, make_params, params_from_rate
from ..stationary import EstimatorConfig
from . import schemas

app = FastAPI(title="corrq service", version=__version__)


@app.exception_handler(ConfigError)
async def config_error_handler(request: Request, exc: ConfigError):
    return JSONResponse(status_code=400, content={"detail": str(exc)})


def _params(m: schemas.ParamsModel) -> ModelParams:
    return make_params(m.n, m.beta, m.theta, m.mode)


def _seed(m: schemas.SeedModel) -> SeedSpec:
    return SeedSpec(master_seed=m.master, experiment=m.experiment, replication=m.replication)


def _init(m: schemas.InitModel) -> InitSpec:
    if m.variant == "empty":
        return InitSpec.empty()
    if m.variant == "fresh":
        return InitSpec.fresh(m.initial_total)
    spec = InitSpec.general(phase1_remaining=m.phase1_remaining,
                            phase2_count=m.phase2_count, queued_waits=m.queued_waits)
    if m.initial_total and m.initial_total != spec.initial_total:
        raise ConfigError(
            f"general init inconsistent: initial_total={m.initial_total} but contents give {spec.initial_total}")
    return spec


@app.get("/health", response_model=schemas.HealthResponse)
def health():
    return schemas.HealthResponse(status="ok", version=__version__)


@app.post("/simulate", response_model=schemas.SimulateResponse)
def simulate_endpoint(req: schemas.SimulateRequest):
    trace = simulate(_params(req.params), _init(req.init), req.horizon, _seed(req.seed),
                     record_dt=req.record_dt, check_invariants=req.check_invariants)
    return schemas.SimulateResponse(
        csv=trace.to_csv(), arrivals=trace.arrivals, served=trace.served,
        abandoned=trace.abandoned, initial_total=trace.initial_total,
        final_total=trace.final_total, violations=trace.violations,
        seed=trace.seed.echo())


@app.post("/limits", response_model=schemas.LimitsResponse)
def limits_endpoint(req: schemas.LimitsRequest):
    if req.what == "xstar":
        return schemas.LimitsResponse(what="xstar", value=x_star(req.beta, req.theta))
    if req.what == "hw_table":
        law = hw_stationary(req.beta)
        xs = np.linspace(req.x_min, req.x_max, req.points)
        pdf, cdf = law.pdf(xs), law.cdf(xs)
        lines = ["x,pdf,cdf"]
        lines.extend(f"{x:.17g},{p:.17g},{c:.17g}" for x, p, c in zip(xs, pdf, cdf))
        return schemas.LimitsResponse(what="hw_table", csv="\n".join(lines) + "\n")
    spec = OdeSpec(beta=req.beta, theta=req.theta, x0=req.x0)
    ts = np.linspace(0.0, req.t_max, req.points)
    vals = np.asarray(lof_closed(ts, spec))
    lines = ["t,x"]
    lines.extend(f"{t:.17g},{v:.17g}" for t, v in zip(ts, vals))
    return schemas.LimitsResponse(what="lof_table", csv="\n".join(lines) + "\n")


@app.post("/couple", response_model=schemas.CoupleResponse)
def couple_endpoint(req: schemas.CoupleRequest):
    seed = _seed(req.seed)
    if req.kind == "pc_pc":
        if req.params2 is None:
            raise ConfigError("pc_pc coupling needs params2 for the dominated system")
        p2m = req.params2
        if req.params.mode == "independent":
            raise ConfigError("pc_pc upper system must be perfect (theta > 0) or none (theta = 0)")
        if req.lambda1 is not None:
            p1 = params_from_rate(req.params.n, req.lambda1, req.params.theta, req.params.mode)
        else:
            p1 = _params(req.params)
        if req.lambda2 is not None:
            p2 = params_from_rate(p2m.n, req.lambda2, p2m.theta, p2m.mode)
        else:
            p2 = _params(p2m)
        report = couple_pc_pc(p1, p2, req.horizon, seed)
    elif req.kind == "pc_infserver":
        report = couple_pc_infserver(_params(req.params), req.horizon, seed)
    else:
        cfg = EstimatorConfig(samples=req.samples, burn_in_mult=req.burn_in_mult,
                              spacing_lof=req.spacing_lof)
        report = compare_pc_erlangA_stationary(_params(req.params), cfg, seed,
                                               alpha=req.alpha)
    return schemas.CoupleResponse(report=report.to_dict())


@app.post("/experiment", response_model=schemas.ExperimentResponse)
def experiment_endpoint(req: schemas.ExperimentRequest):
    p = req.plan
    plan = ExperimentPlan(
        kind=p.kind, n_values=tuple(p.n_values), beta=p.beta, theta=p.theta,
        mode=p.mode, samples=p.samples, replications=p.replications,
        burn_in_mult=p.burn_in_mult, spacing_lof=p.spacing_lof,
        master_seed=p.seed.master, experiment=p.seed.experiment,
        threshold_m=p.threshold_m, x0=p.x0, t_max=p.t_max,
        grid_points=p.grid_points, check_invariants=p.check_invariants)
    report, raw = run_experiment(plan, workers=req.workers)
    return schemas.ExperimentResponse(summary=report.to_dict(), raw_csv=raw)
