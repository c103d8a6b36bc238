"""Game-theoretic multi-agent learning toolkit.

Exact desk-scale implementations of matrix/stochastic-game solvers (minimax
via LP, support-enumeration Nash, correlated equilibria), evolutionary
dynamics (replicator, selection-mutation), tabular equilibrium learners
(minimax-Q, correlated-Q, regret matching, fictitious play), exact-gradient
opponent shaping on iterated 2x2 games, and a hybrid evolutionary /
policy-gradient trainer with linear function approximation. Everything is
seeded and bit-reproducible.
"""

__version__ = "0.1.0"

from .dynamics import (
    DynamicsParams,
    PopulationState,
    boltzmann_policy,
    discrete_replicator_step,
    fixed_point_check,
    integrate_replicator,
    population_state,
    replicator_derivative,
    selection_mutation_derivative,
    write_trajectory_csv,
)
from .equilibrium import (
    CE_OBJECTIVES,
    EGALITARIAN,
    PLUTOCRATIC,
    UTILITARIAN,
    CeCheckReport,
    CorrelatedPolicy,
    MinimaxSolution,
    NashCheckReport,
    best_response,
    ce_check,
    ce_violations,
    correlated_eq_solve,
    epsilon_nash_check,
    minimax_solve,
    solve_ce_distribution,
    stage_minimax,
    support_enumeration_nash,
)
from .errors import (
    DivergenceError,
    GameFormatError,
    InconsistentObservationError,
    IntegrationError,
    NumericalError,
    SimplexIterationError,
    SpecError,
)
from .games import (
    BeliefState,
    MatrixGame,
    MixedProfile,
    PosgGame,
    StochasticGame,
    belief_state,
    belief_update,
    build_matrix_game,
    classic_game,
    expected_payoff,
    game_from_dict,
    game_to_dict,
    joint_index,
    joint_tuple,
    load_game,
    make_posg,
    make_stochastic_game,
    mixed_profile,
    random_game,
    save_game,
)
from .learners import (
    EXTERNAL,
    INTERNAL,
    CorrelatedQResult,
    FictitiousPlayResult,
    LearningSchedule,
    MinimaxQResult,
    OpponentModel,
    QTables,
    RegretMatchingResult,
    ShapleyResult,
    correlated_q_train,
    estimate_opponent_policy,
    fictitious_play,
    minimax_q_train,
    regret_matching_play,
    shapley_value_iteration,
    simulate_episode,
)
from .linprog import (
    LinearProgram,
    LpSolution,
    check_feasible,
    linear_program,
    solve_lp,
)
from .merl import (
    LinearActor,
    MerlConfig,
    MerlResult,
    QuadraticCritic,
    RendezvousEnv,
    ReplayBuffer,
    TeamPopulation,
    agent_features,
    critic_td_update,
    dpg_actor_update,
    ea_generation,
    merl_train,
    rollout_team,
    soft_update,
)
from .shaping import (
    IteratedGame,
    LolaConfig,
    Memory1Policy,
    ShapingTrajectory,
    exact_values,
    iterated_game,
    lola_step,
    mean_cooperation,
    memory1_policy,
    naive_step,
    train_shapers,
    value_gradients,
)
