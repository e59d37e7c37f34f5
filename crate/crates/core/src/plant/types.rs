use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::params::PlantParams;

/// Physical plant state. Temperatures in °C, storage fractions dimensionless.
///
/// The warm fraction is stored alongside the cold fraction but is always
/// `1 - s_twc`; construct through [`PlantState::new`] to keep that true.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub t_lwr: f64,
    pub s_tww: f64,
    pub s_twc: f64,
    pub t_twc: f64,
    pub t_tww: f64,
    pub t_chws: f64,
    pub t_cwr: f64,
    pub t_cws: f64,
}

impl PlantState {
    pub const DIM: usize = 8;
    pub const FIELDS: [&'static str; 8] =
        ["t_lwr", "s_tww", "s_twc", "t_twc", "t_tww", "t_chws", "t_cwr", "t_cws"];

    pub fn new(t_lwr: f64, s_twc: f64, t_twc: f64, t_tww: f64, t_chws: f64, t_cwr: f64, t_cws: f64) -> Self {
        Self { t_lwr, s_tww: 1.0 - s_twc, s_twc, t_twc, t_tww, t_chws, t_cwr, t_cws }
    }

    /// A mid-charge plant sitting at its setpoints.
    pub fn nominal(params: &PlantParams) -> Self {
        Self::new(
            params.t_lwr_max - 3.0,
            0.5,
            params.t_chws_set,
            params.t_lwr_max - 3.0,
            params.t_chws_set,
            params.t_cws_set + 3.0,
            params.t_cws_set,
        )
    }

    pub fn to_array(&self) -> [f64; 8] {
        [self.t_lwr, self.s_tww, self.s_twc, self.t_twc, self.t_tww, self.t_chws, self.t_cwr, self.t_cws]
    }

    pub fn from_array(v: [f64; 8]) -> Self {
        Self { t_lwr: v[0], s_tww: v[1], s_twc: v[2], t_twc: v[3], t_tww: v[4], t_chws: v[5], t_cwr: v[6], t_cws: v[7] }
    }

    pub fn validate(&self, params: &PlantParams) -> Result<()> {
        ensure_finite("plant state", &self.to_array())?;
        if (self.s_tww + self.s_twc - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "storage fractions must sum to one (s_tww={}, s_twc={})",
                self.s_tww, self.s_twc
            )));
        }
        let tol = 1e-9;
        if self.s_twc < params.s_min - tol || self.s_twc > params.s_max + tol {
            return Err(Error::InvalidArgument(format!("s_twc={} outside storage bounds", self.s_twc)));
        }
        Ok(())
    }
}

/// Supervisory command. Flows in kg/s; `m_tw > 0` charges the tank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub m_lw: f64,
    pub m_tw: f64,
    pub n_ch: u32,
    pub m_cw: f64,
    pub m_oa: f64,
}

impl ControlInput {
    pub const FIELDS: [&'static str; 5] = ["m_lw", "m_tw", "n_ch", "m_cw", "m_oa"];

    /// Supply flow drawn from the chillers.
    pub fn m_sw(&self) -> f64 {
        self.m_lw + self.m_tw
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.m_lw, self.m_tw, self.n_ch as f64, self.m_cw, self.m_oa]
    }

    /// Mid-box command with the given chiller count.
    pub fn mid_box(params: &PlantParams, n_ch: u32) -> Self {
        Self {
            m_lw: 0.5 * (params.m_lw_min + params.m_lw_max),
            m_tw: 0.5 * (params.m_tw_min + params.m_tw_max),
            n_ch: n_ch.min(params.n_ch_max),
            m_cw: 0.5 * (params.m_cw_min + params.m_cw_max),
            m_oa: 0.5 * (params.m_oa_min + params.m_oa_max),
        }
    }

    /// Clamps every component into the static input box.
    pub fn clamped(&self, params: &PlantParams) -> Self {
        Self {
            m_lw: self.m_lw.clamp(params.m_lw_min, params.m_lw_max),
            m_tw: self.m_tw.clamp(params.m_tw_min, params.m_tw_max),
            n_ch: self.n_ch.min(params.n_ch_max),
            m_cw: self.m_cw.clamp(params.m_cw_min, params.m_cw_max),
            m_oa: self.m_oa.clamp(params.m_oa_min, params.m_oa_max),
        }
    }

    pub fn in_box(&self, params: &PlantParams) -> bool {
        let tol = 1e-9;
        let within = |v: f64, lo: f64, hi: f64| v >= lo - tol && v <= hi + tol;
        within(self.m_lw, params.m_lw_min, params.m_lw_max)
            && within(self.m_tw, params.m_tw_min, params.m_tw_max)
            && self.n_ch <= params.n_ch_max
            && within(self.m_cw, params.m_cw_min, params.m_cw_max)
            && within(self.m_oa, params.m_oa_min, params.m_oa_max)
    }

    pub fn validate(&self, params: &PlantParams) -> Result<()> {
        ensure_finite("control input", &self.to_array())?;
        if !self.in_box(params) {
            return Err(Error::InvalidArgument(format!("command outside the input box: {self:?}")));
        }
        Ok(())
    }
}

/// Exogenous plant disturbance: wet-bulb temperature (°C) and requested cooling (kW).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub t_oawb: f64,
    pub q_l_ref: f64,
}

impl Disturbance {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("disturbance", &[self.t_oawb, self.q_l_ref])?;
        if self.q_l_ref < 0.0 {
            return Err(Error::InvalidArgument(format!("negative load reference {}", self.q_l_ref)));
        }
        if !(-20.0..=45.0).contains(&self.t_oawb) {
            return Err(Error::InvalidArgument(format!("wet-bulb temperature {} out of range", self.t_oawb)));
        }
        Ok(())
    }
}

/// Heat flows (kW), electric powers (kW) and the step's electricity cost.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantOutputs {
    pub q_l: f64,
    pub q_ch: f64,
    pub q_ct: f64,
    pub q_cond: f64,
    pub p_ch: f64,
    pub p_chw_pump: f64,
    pub p_cw_pump: f64,
    pub p_ct: f64,
    pub p_tot: f64,
    pub c_e: f64,
}

impl PlantOutputs {
    pub const FIELDS: [&'static str; 10] =
        ["q_l", "q_ch", "q_ct", "q_cond", "p_ch", "p_chw_pump", "p_cw_pump", "p_ct", "p_tot", "c_e"];

    pub fn to_array(&self) -> [f64; 10] {
        [
            self.q_l,
            self.q_ch,
            self.q_ct,
            self.q_cond,
            self.p_ch,
            self.p_chw_pump,
            self.p_cw_pump,
            self.p_ct,
            self.p_tot,
            self.c_e,
        ]
    }
}

/// Electricity cost of one step: price in $/kWh, power in kW, step in seconds.
pub fn electricity_cost(price: f64, p_tot: f64, t_s: f64) -> f64 {
    price * p_tot * (t_s / 3600.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructor_keeps_fractions_complementary() {
        let x = PlantState::new(12.0, 0.3, 6.0, 12.0, 6.5, 32.0, 29.0);
        assert_eq!(x.s_tww + x.s_twc, 1.0);
    }

    #[test]
    fn state_rejects_broken_fraction_sum() {
        let p = PlantParams::default();
        let mut x = PlantState::nominal(&p);
        x.s_tww = 0.7;
        assert!(x.validate(&p).is_err());
    }

    #[test]
    fn input_box_check() {
        let p = PlantParams::default();
        let u = ControlInput::mid_box(&p, 3);
        assert!(u.validate(&p).is_ok());
        let bad = ControlInput { m_lw: 10.0, ..u };
        assert!(bad.validate(&p).is_err());
        assert!(bad.clamped(&p).in_box(&p));
        let too_many = ControlInput { n_ch: 8, ..u };
        assert!(too_many.validate(&p).is_err());
    }

    #[test]
    fn disturbance_bounds() {
        assert!(Disturbance { t_oawb: 25.0, q_l_ref: 1000.0 }.validate().is_ok());
        assert!(Disturbance { t_oawb: 25.0, q_l_ref: -1.0 }.validate().is_err());
        assert!(Disturbance { t_oawb: 50.0, q_l_ref: 1.0 }.validate().is_err());
    }

    #[test]
    fn cost_uses_hours() {
        assert!((electricity_cost(0.1, 600.0, 600.0) - 10.0).abs() < 1e-12);
    }
}
