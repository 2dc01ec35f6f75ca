"""Maximum causal Tsallis entropy imitation learning.

The library has three layers:

* exact machinery for finite MDPs -- sparsemax projection, Tsallis-entropy
  regularized value iteration, occupancy measures, and a dual-ascent
  feature-matching solver with verifiable optimality residuals;
* a sparse mixture-density policy class for continuous actions whose
  Tsallis entropy (and its gradient) is available in closed form;
* an adversarial imitation trainer and a four-goal point-mass environment
  for mode-coverage studies, driven by a small experiment CLI.
"""

from .sparsemax import (
    SimplexVector,
    SparsemaxResult,
    sparsemax,
    sparsemax_batch,
    tsallis_entropy_discrete,
    brier_score,
)
from .mdp import (
    ConvergenceError,
    TabularMdp,
    PolicyTable,
    OccupancyMeasure,
    ValueTable,
    occupancy_from_policy,
    policy_from_occupancy,
    tsallis_entropy_of_occupancy,
    causal_tsallis_entropy,
    sparse_bellman_backup,
    sparse_value_iteration,
    soft_value_iteration,
    policy_evaluation,
    random_mdp,
    gridworld_mdp,
    save_mdp,
    load_mdp,
)
from .trajectories import (
    Episode,
    TrajectoryBatch,
    rollout_batch,
    save_demos,
    load_demos,
)
from .irl import (
    DualState,
    KktReport,
    McteSolution,
    MinimaxResult,
    feature_expectation,
    empirical_feature_expectation,
    verify_kkt,
    solve_mcte,
    write_residual_report,
    simplex_grid,
    robust_bayes_oracle,
    mcte_objective_value,
)
from .mdn import (
    EntropyEstimate,
    SparseMixturePolicy,
    mixture_tsallis,
    mixture_tsallis_grad,
    tsallis_entropy_analytic,
    tsallis_entropy_per_sample,
    naive_tsallis_per_action,
    gibbs_entropy_loglik,
    entropy_gradient,
)
from .trainer import (
    TrainerConfig,
    TrainResult,
    Discriminator,
    discriminator_update,
    policy_update_mcteil,
    policy_update_soft_gail,
    behavior_cloning,
    train,
)
from .multigoal import (
    MultiGoalWorld,
    EnvState,
    GridSpec,
    GridPolicy,
    compass_directions,
    build_grid_mdp,
    solve_grid_expert,
    generate_expert_demos,
    reachability,
    save_world,
    load_world,
)

__version__ = "0.1.0"
