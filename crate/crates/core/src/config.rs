//! Run configuration: one TOML file with a table per component.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baseline::BaselineConfig;
use crate::error::{Error, Result};
use crate::harness::SynthProfile;
use crate::mpc::MpcConfig;
use crate::params::PlantParams;
use crate::plant::plant_solver_config;
use crate::rl::TrainingConfig;
use crate::solver::SolverConfig;

/// Every table is optional; missing keys take their defaults.
///
/// ```toml
/// [params]
/// n_ch_max = 6
///
/// [mpc]
/// horizon = 72
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub params: PlantParams,
    /// Solver of the one-step plant projection.
    pub solver: SolverConfig,
    pub baseline: BaselineConfig,
    pub training: TrainingConfig,
    pub mpc: MpcConfig,
    /// Synthetic scenario shape; its `tau` also applies to loaded scenarios.
    pub synth: SynthProfile,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            params: PlantParams::default(),
            solver: plant_solver_config(),
            baseline: BaselineConfig::default(),
            training: TrainingConfig::default(),
            mpc: MpcConfig::default(),
            synth: SynthProfile::default(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.solver.validate()?;
        self.baseline.validate()?;
        self.training.validate()?;
        self.mpc.validate()?;
        if self.synth.tau == 0 || (self.synth.t_s - self.params.t_s).abs() > 1e-9 {
            return Err(Error::Config("synth.tau must be positive and synth.t_s must equal params.t_s".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config tables always serialize")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::from_toml_str("").unwrap(), Config::default());
    }

    #[test]
    fn round_trip() {
        let mut c = Config::default();
        c.mpc.horizon = 72;
        c.training.n_pol = 15;
        c.params.r1 = 500.0;
        assert_eq!(Config::from_toml_str(&c.to_toml_string()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(Config::from_toml_str("[mpc]\nhorizn = 3").is_err());
        assert!(Config::from_toml_str("[mpc]\nwindow = 5").is_err());
    }
}
