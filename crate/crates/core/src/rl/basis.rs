//! Sparse quadratic basis over the normalized state-input vector.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::ControlInput;
use crate::solver::SymmetricEmbedding;

use super::state::RlState;

/// Length of the concatenated `[state, input]` vector.
pub const JOINT_DIM: usize = 17;

pub const COMPONENTS: [&str; JOINT_DIM] = [
    "t_lwr", "s_tww", "s_twc", "t_twc", "t_tww", "t_chws", "t_cwr", "t_cws", "t_oawb", "q_l_ref", "price", "price_avg",
    "m_lw", "m_tw", "n_ch", "m_cw", "m_oa",
];

/// Positions of the inputs inside the joint vector.
pub const M_LW: usize = 12;
pub const M_TW: usize = 13;
pub const N_CH: usize = 14;
pub const M_CW: usize = 15;
pub const M_OA: usize = 16;

/// Affine map `z = (v - center) / scale` applied componentwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub center: [f64; JOINT_DIM],
    pub scale: [f64; JOINT_DIM],
}

impl Default for Normalization {
    /// Division by a typical magnitude of each component, without centering,
    /// so that the quadratic form can still rank "less flow" below "more
    /// flow". The tank flow changes sign and is scaled by its usual range.
    fn default() -> Self {
        Self {
            center: [0.0; JOINT_DIM],
            scale: [13.0, 0.5, 0.5, 7.0, 13.0, 7.0, 34.0, 29.0, 25.5, 1313.0, 0.08, 0.08, 60.0, 30.0, 3.0, 150.0, 1.0],
        }
    }
}

impl Normalization {
    pub fn apply(&self, v: &[f64; JOINT_DIM]) -> [f64; JOINT_DIM] {
        let mut z = [0.0; JOINT_DIM];
        for i in 0..JOINT_DIM {
            z[i] = (v[i] - self.center[i]) / self.scale[i];
        }
        z
    }
}

/// Raw joint vector `[x, u]`.
pub fn joint(x: &RlState, u: &ControlInput) -> [f64; JOINT_DIM] {
    let s = x.to_array();
    let a = u.to_array();
    let mut v = [0.0; JOINT_DIM];
    v[..12].copy_from_slice(&s);
    v[12..].copy_from_slice(&a);
    v
}

/// Ordered monomials `z_i z_j` plus the normalization they are taken over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub entries: Vec<(usize, usize)>,
    pub normalization: Normalization,
}

impl Default for BasisSpec {
    /// Squares of every component except the warm-tank fraction and
    /// temperature (both redundant with their cold-side counterparts), plus
    /// cross terms only between quantities that act on each other within one
    /// step: each input with the states and signals of its own loop, and the
    /// chilled-loop inputs with each other.
    fn default() -> Self {
        let mut entries: Vec<(usize, usize)> = (0..JOINT_DIM).filter(|&i| i != 1 && i != 4).map(|i| (i, i)).collect();
        entries.extend_from_slice(&[
            // load flow: return temperature, requested load, supply temperature
            (M_LW, 0),
            (M_LW, 9),
            (M_LW, 5),
            // tank flow: storage level, prices, load, load flow
            (M_TW, 2),
            (M_TW, 10),
            (M_TW, 11),
            (M_TW, 9),
            (M_TW, M_LW),
            // chiller count: load, chilled-loop flows, price, supply temperature
            (N_CH, 9),
            (N_CH, M_LW),
            (N_CH, M_TW),
            (N_CH, 10),
            (N_CH, 5),
            // cooling-water loop
            (M_CW, N_CH),
            (M_CW, 6),
            (M_CW, 8),
            (M_OA, 8),
            (M_OA, M_CW),
            (M_OA, 7),
            // exogenous couplings
            (9, 0),
            (10, 11),
        ]);
        Self { entries, normalization: Normalization::default() }
    }
}

impl BasisSpec {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn embedding(&self) -> Result<SymmetricEmbedding> {
        SymmetricEmbedding::new(JOINT_DIM, self.entries.clone())
    }

    pub fn features_of_joint(&self, v: &[f64; JOINT_DIM]) -> DVector<f64> {
        let z = self.normalization.apply(v);
        DVector::from_iterator(self.entries.len(), self.entries.iter().map(|&(i, j)| z[i] * z[j]))
    }

    pub fn features(&self, x: &RlState, u: &ControlInput) -> DVector<f64> {
        self.features_of_joint(&joint(x, u))
    }

    pub fn q_value(&self, theta: &DVector<f64>, x: &RlState, u: &ControlInput) -> f64 {
        theta.dot(&self.features(x, u))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let spec: Self = toml::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Config(e.to_string()))?;
        spec.embedding()?;
        Ok(spec)
    }
}
