"""Graphon mean-field particle systems: finite systems, limit flows and rates."""
from .errors import *  # noqa: F401,F403
from .graphon import (Constant, PowerLaw, StochasticBlock, StepGraphon, KernelGraphon,
                      AssumptionReport, discretize, degree, inv_degree_integral,
                      validate_assumptions, graphon_smooth, smoothing_weights)
from .cutnorm import cut_norm, inf_to_one_norm
from .transport import (DiscreteMeasure, TransportPlan, w2_1d, w2_exact, w2_dual_gap,
                        w2_tv_bound, fg_dyadic_bound, fg_constant, coupled_sup_distance,
                        systematic_resample)
from .rng import BrownianStore
from .dynamics import (DynamicsModel, Zero, LinearMeanReversion, ConstantDiffusion,
                       ScalarKernel, MomentFunctional, ReflectionGap, LabelMixture,
                       eval_drift, eval_diffusion, lipschitz_probe)
from .initial import Point, GaussianFamily, BlockConstant, DiracLaw, GaussianLaw, DiscreteLaw
from .particles import (SimulationConfig, ParticleSystemState, TrajectoryEnsemble, build_system,
                        em_step, local_measure, simulate)
from .limit import MeasureFlow, picard_solve, coupled_limit_particles, continuity_check
from .experiments import (RateModel, ExperimentReport, m_n, rate_fit, lln_experiment,
                          poc_experiment, emp_measure_experiment)
from .scenario import Scenario, parse_scenario, load_builtin, builtin_names

__version__ = "0.1.0"
