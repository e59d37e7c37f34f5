//! Plant physics, power curves and the one-step projection.

pub mod constraints;
pub mod envelope;
pub mod power;
pub mod projection;
pub mod step;
pub mod types;

pub use constraints::{eval_constraints, ConstraintEval, Decision};
pub use envelope::{admissible_envelopes, envelope, repair_command, Envelope};
pub use projection::analytic_projection;
pub use step::{plant_solver_config, plant_step, PlantStep};
pub use types::{ControlInput, Disturbance, PlantOutputs, PlantState};
