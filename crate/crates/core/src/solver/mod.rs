//! Numerical solvers.

pub mod nlp;
pub mod psd;

pub use nlp::{solve_nlp, Nlp, NlpProblem, SolveReport, SolverConfig};
pub use psd::{solve_psd_lsq, PsdConfig, PsdLsqProblem, PsdSolution, SymmetricEmbedding};
