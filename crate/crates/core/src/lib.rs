//! District cooling energy plant simulator with rule-based, reinforcement
//! learning and model predictive supervisory controllers.

pub mod baseline;
pub mod config;
pub mod error;
pub mod harness;
pub mod params;
pub mod mpc;
pub mod plant;
pub mod rl;
pub mod solver;

pub use config::Config;
pub use error::{Error, Result};
pub use params::PlantParams;
