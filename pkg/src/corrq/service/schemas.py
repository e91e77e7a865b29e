"""Request/response models for the corrq service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class StrictModel(BaseModel):
    """Unknown fields are config errors, not silent no-ops."""

    model_config = ConfigDict(extra="forbid")


class SeedModel(StrictModel):
    master: int = 0
    experiment: str = ""
    replication: int = 0


class ParamsModel(StrictModel):
    n: int = Field(ge=1)
    beta: float
    theta: float = Field(gt=0)
    mode: Literal["perfect", "independent", "none"] = "perfect"


class InitModel(StrictModel):
    variant: Literal["empty", "fresh", "general"] = "empty"
    initial_total: int = 0
    phase1_remaining: list[float] = []
    phase2_count: int = 0
    queued_waits: list[float] = []


class SimulateRequest(StrictModel):
    params: ParamsModel
    init: InitModel = InitModel()
    horizon: float = Field(gt=0)
    record_dt: float = Field(default=0.1, gt=0)
    seed: SeedModel = SeedModel()
    check_invariants: bool = False


class SimulateResponse(StrictModel):
    csv: str
    arrivals: int
    served: int
    abandoned: int
    initial_total: int
    final_total: int
    violations: dict[str, int]
    seed: dict


class LimitsRequest(StrictModel):
    what: Literal["xstar", "hw_table", "lof_table"]
    beta: float
    theta: float = 1.0
    x0: float = 0.0
    t_max: float = 10.0
    x_min: float = -6.0
    x_max: float = 12.0
    points: int = Field(default=201, ge=2)


class LimitsResponse(StrictModel):
    what: str
    value: Optional[float] = None
    csv: Optional[str] = None


class CoupleRequest(StrictModel):
    kind: Literal["pc_pc", "pc_infserver", "pc_erlangA_stat"]
    params: ParamsModel
    # pc_pc drives the second (dominated) system with these; lambda1 may be
    # given directly to allow rates rather than slack
    params2: Optional[ParamsModel] = None
    lambda1: Optional[float] = None
    lambda2: Optional[float] = None
    horizon: float = Field(default=1000.0, gt=0)
    seed: SeedModel = SeedModel()
    samples: int = 2000
    burn_in_mult: float = 20.0
    spacing_lof: float = 1.0
    alpha: float = 0.01


class CoupleResponse(StrictModel):
    report: dict


class PlanModel(StrictModel):
    kind: Literal["diffusion_stationary", "lof_fixed_point", "lof_transient",
                  "diffusion_divergence", "workload_scaling"]
    n_values: list[int]
    beta: float
    theta: float = Field(gt=0)
    mode: Literal["perfect", "independent", "none"] = "perfect"
    samples: int = 1000
    replications: int = 4
    burn_in_mult: float = 20.0
    spacing_lof: float = 1.0
    threshold_m: float = 5.0
    x0: float = 0.0
    t_max: float = 3.0
    grid_points: int = 31
    check_invariants: bool = False
    seed: SeedModel = SeedModel()


class ExperimentRequest(StrictModel):
    plan: PlanModel
    workers: int = Field(default=1, ge=1)


class ExperimentResponse(StrictModel):
    summary: dict
    raw_csv: dict[str, str]


class HealthResponse(StrictModel):
    status: str
    version: str
