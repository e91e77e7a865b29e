"""corrq: simulation and limit-verification lab for many-server queues whose
customers' patience is perfectly correlated with their service requirement."""

from .errors import ConfigError, HorizonError, StaffingInfeasibleError
from .model import (CORRELATION_MODES, Customer, ExpSampler, ModelParams, SeedSpec,
                    make_params, params_from_rate, sample_customer)
from .scaling import ScaledPath, diffusion_scale, lof_scale, step_eval
from .engine import (InitSpec, Sim, SimulationTrace, TRACE_FIELDS, offered_wait,
                     simulate, workload_L)
from .stationary import (EstimatorConfig, StationarySample, batch_means,
                         collect_stationary, regenerative_sample, stationary_sample)
from .coupling import (CouplingReport, compare_pc_erlangA_stationary, couple_pc_infserver,
                       couple_pc_pc)
from .limits import (DiffusionSpec, HwStationaryLaw, OdeSpec, drift_ma, drift_mc,
                     hw_stationary, lof_closed, lof_ode_solve, sde_ensemble_states,
                     sde_path, x_star)
from .stats import LineFit, dkw_epsilon, ecdf_max_gap, ks_statistic, slope_fit
from .harness import (EXPERIMENT_KINDS, ExperimentPlan, FitReport, load_plan,
                      run_diffusion_divergence, run_diffusion_stationary, run_experiment,
                      run_lof_fixed_point, run_lof_transient, run_workload_scaling,
                      stationary_sweep, write_experiment_outputs)

__version__ = "0.1.0"
