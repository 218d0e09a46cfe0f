//! Tabular toolkit for alternating two-player zero-sum Markov games.
//!
//! The pieces fit together like this: [`game`] defines the game tensors,
//! sampling distributions, and flat indexing; [`operators`] turns greedy
//! max-min selection into explicit selector matrices and builds the
//! switching-system matrices of value iteration and Q-learning;
//! [`value_iteration`] produces reference fixed points; [`q_learning`] runs
//! the sampled recursion and exposes its noise decomposition; [`comparison`]
//! simulates the learning system in lockstep with four comparison systems
//! under one shared noise process and verifies their path-wise orderings and
//! error-recursion identities; [`bounds`] evaluates the closed-form
//! finite-time error bounds those systems must respect.
//!
//! Everything is deterministic given explicit seeds, and all types are
//! immutable after construction unless their name says otherwise.

pub mod bounds;
pub mod comparison;
pub mod error;
pub mod game;
pub mod io;
pub mod linalg;
pub mod operators;
pub mod q_learning;
pub mod rng;
pub mod value_iteration;

pub use bounds::{
    bound_cor1, bound_thm1, bound_thm2, bound_thm4, bound_thm5, constants, decay_rate,
    empirical_vs_bound, BoundCheckReport, BoundId, BoundParams, Cor1Form, ExponentVariant,
};
pub use comparison::{
    error_system_matrices, run_coupled, step_linear, step_lower, step_upper, CoupledContext,
    CoupledOptions, CoupledState, CoupledTrajectory, ErrorSide, ErrorSystemMatrices, StepNorms,
};
pub use error::{Error, Result};
pub use game::{
    flat_index, generate_random_game, occupation_frequency, validate_game, Dims, GameSpec,
    Occupation, QTable, SamplingModel, ValidationReport, Violation,
};
pub use io::{game_to_json, load_game, parse_game, save_game, LoadedGame};
pub use linalg::Mat;
pub use operators::{
    bellman_operator, infinity_norm, max_selector, maxmin_values, min_selector, occupation_matrix,
    ql_system_matrices, stacked_transition, vi_system_matrices, SelectorMax, SelectorMin,
    SystemKind, SystemMatrices,
};
pub use q_learning::{
    noise_moments, noise_vector, ql_update, run_q_learning, sample_experience, Experience,
    LearnerState, LearningRun, NoiseMoments, QSnapshot, SnapshotStride,
};
pub use rng::{rng_from_seed, trial_seed, SimRng, RNG_ALGORITHM};
pub use value_iteration::{
    greedy_policies, qvi_step, solve_optimal_q, vi_sandwich_check, GreedyPolicies, SandwichCheck,
    ViResult,
};
