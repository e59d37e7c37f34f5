//! Physical and empirical constants of the plant.
//!
//! Every field has a documented default. The defaults are a calibration choice
//! for a seven-chiller plant with a ~600 kW unit capacity, a 1000 t stratified
//! storage tank and a single evaporative tower; they give a whole-plant COP of
//! roughly 5 at the nominal 1.3 MW load. All of them can be overridden from a
//! flat `key = value` TOML file (see [`PlantParams::load`]).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offset between the Celsius and Kelvin scales.
pub const KELVIN_OFFSET: f64 = 273.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantParams {
    /// Specific heat of water, kJ/(kg·°C).
    pub c_pw: f64,
    /// Total water mass of the storage tank, kg.
    pub m_tes: f64,
    /// Sampling period, s.
    pub t_s: f64,
    /// Evaporator flow through one running chiller, kg/s.
    pub m_indv: f64,
    /// Nominal cooling capacity of one chiller, kW.
    pub q_ch_indv: f64,
    pub n_ch_max: u32,

    pub m_lw_min: f64,
    pub m_lw_max: f64,
    pub m_tw_min: f64,
    pub m_tw_max: f64,
    pub m_cw_min: f64,
    pub m_cw_max: f64,
    pub m_oa_min: f64,
    pub m_oa_max: f64,

    pub s_min: f64,
    pub s_max: f64,
    /// Cooling-coil capacity limit on the load return temperature, °C.
    pub t_lwr_max: f64,
    pub t_chws_min: f64,
    pub t_chws_max: f64,
    /// Condenser capacity limit on the cooling-water return temperature, °C.
    pub t_cwr_max: f64,
    /// Minimum tower approach to the wet-bulb temperature, °C.
    pub approach_min: f64,

    pub t_chws_set: f64,
    pub t_cws_set: f64,

    /// Projection weights: load tracking (error in MW), chilled-water and
    /// cooling-water setpoints (errors in °C).
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,

    /// Fraction of compressor power rejected at the condenser.
    pub eta1: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    /// Fan coefficient, kW/(kg/s)^3.
    pub lambda: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            c_pw: 4.186,
            m_tes: 1.0e6,
            t_s: 600.0,
            m_indv: 50.0,
            q_ch_indv: 600.0,
            n_ch_max: 7,
            m_lw_min: 20.0,
            m_lw_max: 350.0,
            m_tw_min: -30.0,
            m_tw_max: 30.0,
            m_cw_min: 20.0,
            m_cw_max: 300.0,
            m_oa_min: 0.2,
            m_oa_max: 2.0,
            s_min: 0.05,
            s_max: 0.95,
            t_lwr_max: 16.0,
            t_chws_min: 4.0,
            t_chws_max: 10.0,
            t_cwr_max: 38.0,
            approach_min: 1.0,
            t_chws_set: 6.5,
            t_cws_set: 29.0,
            r1: 1.0e3,
            r2: 1.0,
            r3: 1.0,
            eta1: 0.9,
            // per-chiller standby draw of ~40 kW at 29 °C / 6.5 °C, rising 1.5 kW/K
            beta1: 402.4,
            beta2: 1.5,
            beta3: 10.0,
            alpha1: 8.0,
            alpha2: 0.02,
            alpha3: 0.12,
            alpha4: 0.0,
            gamma1: 6.0,
            gamma2: 0.02,
            gamma3: 0.10,
            gamma4: 0.0,
            lambda: 8.0,
            c1: 14.4,
            c2: 0.025,
            c3: 0.8,
        }
    }
}

impl PlantParams {
    pub fn alpha(&self) -> [f64; 4] {
        [self.alpha1, self.alpha2, self.alpha3, self.alpha4]
    }

    pub fn gamma(&self) -> [f64; 4] {
        [self.gamma1, self.gamma2, self.gamma3, self.gamma4]
    }

    /// Largest temperature drop one fully loaded chiller imposes on its own flow.
    pub fn chiller_delta_t_max(&self) -> f64 {
        self.q_ch_indv / (self.c_pw * self.m_indv)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c_pw", self.c_pw),
            ("m_tes", self.m_tes),
            ("t_s", self.t_s),
            ("m_indv", self.m_indv),
            ("q_ch_indv", self.q_ch_indv),
            ("m_lw_min", self.m_lw_min),
            ("m_cw_min", self.m_cw_min),
            ("m_oa_min", self.m_oa_min),
            ("c3", self.c3),
            ("r1", self.r1),
            ("r2", self.r2),
            ("r3", self.r3),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be strictly positive, got {v}")));
            }
        }
        let ordered = [
            ("m_lw", self.m_lw_min, self.m_lw_max),
            ("m_tw", self.m_tw_min, self.m_tw_max),
            ("m_cw", self.m_cw_min, self.m_cw_max),
            ("m_oa", self.m_oa_min, self.m_oa_max),
            ("s", self.s_min, self.s_max),
            ("t_chws", self.t_chws_min, self.t_chws_max),
        ];
        for (name, lo, hi) in ordered {
            if !(lo <= hi) {
                return Err(Error::Config(format!("{name} bounds out of order: [{lo}, {hi}]")));
            }
        }
        if self.n_ch_max == 0 {
            return Err(Error::Config("n_ch_max must be at least 1".into()));
        }
        if self.r1 < 10.0 * self.r2.max(self.r3) {
            return Err(Error::Config(format!(
                "r1 must dominate r2 and r3 by at least 10x (r1={}, r2={}, r3={})",
                self.r1, self.r2, self.r3
            )));
        }
        if !(0.0 < self.s_min && self.s_max < 1.0) {
            return Err(Error::Config("storage fraction bounds must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let params: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat struct of numbers always serializes")
    }

    /// Reads a flat `key = value` file. Missing keys fall back to defaults.
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
    fn defaults_are_valid() {
        PlantParams::default().validate().unwrap();
    }

    #[test]
    fn partial_file_overrides_only_given_keys() {
        let p = PlantParams::from_toml_str("m_tes = 2.0e6\nlambda = 3.5\n").unwrap();
        assert_eq!(p.m_tes, 2.0e6);
        assert_eq!(p.lambda, 3.5);
        assert_eq!(p.c_pw, PlantParams::default().c_pw);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PlantParams::from_toml_str("m_tess = 1.0").is_err());
    }

    #[test]
    fn weak_load_weight_is_rejected() {
        let err = PlantParams::from_toml_str("r1 = 5.0").unwrap_err();
        assert!(err.to_string().contains("dominate"));
    }

    #[test]
    fn text_round_trip() {
        let p = PlantParams { beta2: 1.75, ..Default::default() };
        assert_eq!(PlantParams::from_toml_str(&p.to_toml_string()).unwrap(), p);
    }

    #[test]
    fn tank_fills_in_about_nine_hours_at_full_flow() {
        let p = PlantParams::default();
        let per_step = p.t_s * p.m_tw_max / p.m_tes;
        assert!((per_step - 0.018).abs() < 1e-12);
        let hours = p.m_tes / p.m_tw_max / 3600.0;
        assert!((hours - 9.26).abs() < 0.01);
    }
}
