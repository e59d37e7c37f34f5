//! Model predictive control over a mixed-integer horizon: relax the chiller
//! count, round it into a low-switching schedule, then resolve with the
//! schedule fixed.

pub mod controller;
pub mod filters;
pub mod horizon;

pub use filters::{integer_schedule, moving_average_round, reduce_switching, switch_count};
pub use horizon::{ChillerMode, HorizonNlp, Smoothing};
pub use controller::{
    plan_horizon, resolve_fixed_integers, solve_horizon, solve_relaxed_horizon, terminal_value, HorizonPlan, HorizonSeed,
    MpcConfig, MpcController, RelaxedSolution,
};
