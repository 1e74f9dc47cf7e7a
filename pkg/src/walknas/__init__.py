"""Policy-gradient architecture search over directed-graph decision spaces."""

from .autodiff import (AdamState, EvaluationError, ShapeError, Tape, adam_step,
                       entropy, finite_difference_check, log_softmax, sigmoid,
                       softmax)
from .controller import (ControllerConfig, ControllerParams, RnnState, init_params,
                         load_params, register_params, sample_trajectory,
                         save_params, score_trajectory, step, trace_step,
                         trace_trajectory)
from .environments import (RewardedTrial, SelectOptimizerEnv, StackLayersEnv,
                           make_env, select_optimizer_raw_reward,
                           select_optimizer_reward, stack_layers_raw_reward,
                           stack_layers_reward)
from .harness import (ComparisonReport, ExperimentConfig, ExperimentResult,
                      compare_runs, emit_csv, run_experiment, trials_to_threshold)
from .search_space import (Edge, EnumerationLimitError, LinearChainSpec,
                           SearchGraph, Trajectory, Vertex, Violation,
                           build_linear_chain, build_select_optimizer,
                           build_stack_layers, check_trajectory,
                           enumerate_trajectories, load_graph, save_graph,
                           validate)
from .training import (PqtConfig, ReinforceConfig, RunHistory, TrainState,
                       pqt_update, reinforce_update, run_search)

__version__ = "0.1.0"
