"""Neuro-evolution workbench for local-search move policies.

Generates NK-landscape and QUBO instances, trains a small
permutation-equivariant scoring network with CMA-ES to maximize the best
fitness found along fixed-budget trajectories, and benchmarks the learned
policies against deterministic hill-climbing baselines under identical
budgets and start points.
"""

from .cmaes import CmaesOptimizer, cma_ask, cma_init, cma_tell, default_pop_size
from .evaluation import (EvalReport, ResponseCurve, build_qubo_test_sets,
                         evaluate_ood, evaluate_testset, export_response,
                         replay_with_diagnostics)
from .instances import (InstanceSet, NkInstance, QuboInstance, eval_nk,
                        eval_qubo, generate_nk, generate_nk_set, generate_puboi,
                        generate_puboi_set, load_instance, load_instance_set,
                        save_instance, save_instance_set)
from .observations import ObservationKind, obs_o1, obs_o2, obs_o3, obs_o4
from .policies import (BhcPlusPolicy, FhcPlusPolicy, MlpArchitecture,
                       NeuroPolicy, OneCommaLambdaPolicy, load_policy,
                       mlp_forward, save_policy)
from .search import (Solution, TrajectoryRecord, apply_move, compute_deltas,
                     make_solution, run_trajectories, run_trajectory,
                     run_trajectory_groups)
from .stats import welch_t
from .training import (TrainConfig, TrainReport, calibrate_lambda,
                       empirical_score, train, validation_reference)

__version__ = "0.1.0"
