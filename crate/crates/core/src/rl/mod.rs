//! Least-squares policy iteration with a PSD-constrained quadratic Q function.

pub mod basis;
pub mod greedy;
pub mod state;
pub mod train;

pub use basis::{BasisSpec, Normalization, JOINT_DIM};
pub use greedy::{greedy_action, greedy_solver_config, grid_search, GreedyChoice};
pub use state::{stage_cost, RlState};
pub use train::{
    initial_theta, load_theta, policy_evaluation, rollout, save_theta, select_best_policy, td_residual, td_row, train,
    RlController, Rollout, RolloutEnv, TrainingConfig, TrainingLogRow, TrainingOutcome, Transition,
};
