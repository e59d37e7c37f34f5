//! Heat-balance equations and capacity limits that define the one-step
//! projection set of the plant.
//!
//! The decision vector of a step is the next state followed by the three heat
//! flows the projection chooses: met load, chiller duty and tower rejection.
//! Flow-mixing quantities (supply and return temperatures, bypass flow) are
//! explicit functions of the current state and the command and are evaluated
//! directly in [`Intermediates`] instead of being carried as unknowns.

use crate::error::{ensure_finite, Error, Result};
use crate::params::PlantParams;

use super::power::{plant_chiller_power, tower_capacity};
use super::types::{ControlInput, Disturbance, PlantState};

/// Decision vector of the plant projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub next: PlantState,
    pub q_l: f64,
    pub q_ch: f64,
    pub q_ct: f64,
}

impl Decision {
    pub const DIM: usize = 11;
    pub const Q_L: usize = 8;
    pub const Q_CH: usize = 9;
    pub const Q_CT: usize = 10;

    pub fn to_array(&self) -> [f64; 11] {
        let s = self.next.to_array();
        [s[0], s[1], s[2], s[3], s[4], s[5], s[6], s[7], self.q_l, self.q_ch, self.q_ct]
    }

    pub fn from_slice(z: &[f64]) -> Self {
        assert_eq!(z.len(), Self::DIM, "decision vector has 11 entries");
        let mut s = [0.0; 8];
        s.copy_from_slice(&z[..8]);
        Self { next: PlantState::from_array(s), q_l: z[8], q_ch: z[9], q_ct: z[10] }
    }
}

/// Explicit mixing quantities of a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intermediates {
    /// Supply water temperature leaving the chiller header.
    pub t_sw: f64,
    /// Supply flow drawn from the chillers.
    pub m_sw: f64,
    /// Load-water supply temperature after blending tank discharge.
    pub t_lws: f64,
    /// Return water temperature after blending warm-tank outflow.
    pub t_rw: f64,
    pub m_chw: f64,
    pub m_bp: f64,
    /// Evaporator inlet temperature after bypass mixing.
    pub t_chwr: f64,
}

impl Intermediates {
    /// Evaluates the mixing relations. Rejects commands that make the bypass
    /// balance impossible (no chiller running while supply flow is requested,
    /// or more discharge than load flow).
    pub fn compute(x: &PlantState, u: &ControlInput, params: &PlantParams) -> Result<Self> {
        if u.m_lw < params.m_lw_min - 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "load flow {} below its lower bound {}",
                u.m_lw, params.m_lw_min
            )));
        }
        let m_sw = u.m_sw();
        if m_sw < -1e-9 {
            return Err(Error::Infeasible(format!(
                "tank discharge {} exceeds load flow {}",
                -u.m_tw, u.m_lw
            )));
        }
        let m_sw = m_sw.max(0.0);
        let m_chw = u.n_ch as f64 * params.m_indv;
        if u.n_ch == 0 && m_sw > 1e-9 {
            return Err(Error::Infeasible(format!(
                "no chiller running but supply flow {m_sw} kg/s requested (bypass balance)"
            )));
        }
        let m_bp = m_chw - m_sw;
        let t_sw = x.t_chws;
        let t_lws = t_sw + u.m_tw.min(0.0) / u.m_lw * (t_sw - x.t_twc);
        let t_rw = if u.m_tw > 0.0 {
            x.t_lwr + u.m_tw / m_sw * (x.t_tww - x.t_lwr)
        } else {
            x.t_lwr
        };
        let t_chwr = if m_chw > 0.0 { t_rw + m_bp / m_chw * (x.t_chws - t_rw) } else { t_rw };
        Ok(Self { t_sw, m_sw, t_lws, t_rw, m_chw, m_bp, t_chwr })
    }
}

/// Names of the equality residuals, in stacking order.
pub const EQUALITY_NAMES: [&str; 8] = [
    "load_return_heat_balance",
    "cold_fraction_update",
    "warm_fraction_update",
    "warm_tank_temperature",
    "cold_tank_temperature",
    "evaporator_heat_balance",
    "condenser_temperature_rise",
    "tower_heat_rejection",
];

/// Names of the inequality slacks, in stacking order. A slack is satisfied when `>= 0`.
pub const INEQUALITY_NAMES: [&str; 16] = [
    "load_met_nonnegative",
    "load_met_below_reference",
    "load_return_below_max",
    "chiller_duty_nonnegative",
    "chiller_duty_below_capacity",
    "chilled_supply_above_min",
    "chilled_supply_below_max",
    "bypass_nonnegative",
    "condenser_return_below_max",
    "tower_supply_above_approach",
    "tower_duty_nonnegative",
    "tower_duty_below_capacity",
    "cold_fraction_above_min",
    "cold_fraction_below_max",
    "warm_fraction_above_min",
    "warm_fraction_below_max",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintEval {
    pub equality: [f64; 8],
    pub inequality: [f64; 16],
    pub mix: Intermediates,
}

impl ConstraintEval {
    pub fn max_equality_violation(&self) -> f64 {
        self.equality.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
    }

    /// Most negative slack (zero when all are satisfied).
    pub fn worst_slack(&self) -> f64 {
        self.inequality.iter().fold(0.0_f64, |m, s| m.min(*s))
    }
}

/// Lower bound the tower can pull its supply water down to. The approach
/// limit only binds while the tower rejects heat; it never warms the water.
pub fn tower_supply_floor(t_cwr: f64, t_oawb: f64, params: &PlantParams) -> f64 {
    (t_oawb + params.approach_min).min(t_cwr)
}

/// Heat driven into the condenser by `q_ch` of chiller duty.
pub fn condenser_load(x: &PlantState, n_ch: f64, q_ch: f64, params: &PlantParams) -> f64 {
    q_ch + params.eta1 * plant_chiller_power(n_ch, x.t_cws, x.t_chws, q_ch, params)
}

/// Evaluates every equality residual and inequality slack of the projection set at `z`.
pub fn eval_constraints(
    z: &Decision,
    x: &PlantState,
    u: &ControlInput,
    w: &Disturbance,
    params: &PlantParams,
) -> Result<ConstraintEval> {
    ensure_finite("decision", &z.to_array())?;
    let mix = Intermediates::compute(x, u, params)?;
    let p = params;
    let c = p.c_pw;
    let n = z.next;
    let ts = p.t_s;

    let warm_rate = u.m_tw.min(0.0) / (p.m_tes * x.s_tww - ts * u.m_tw);
    let cold_rate = u.m_tw.max(0.0) / (p.m_tes * x.s_twc + ts * u.m_tw);
    let evaporator = if u.n_ch == 0 {
        // idle evaporator: stagnant water keeps its temperature
        n.t_chws - x.t_chws
    } else {
        n.t_chws - mix.t_chwr + z.q_ch / (c * mix.m_chw)
    };
    let q_cond = condenser_load(x, u.n_ch as f64, z.q_ch, p);

    let equality = [
        n.t_lwr - mix.t_lws - z.q_l / (c * u.m_lw),
        n.s_twc - x.s_twc - ts * u.m_tw / p.m_tes,
        n.s_tww - x.s_tww + ts * u.m_tw / p.m_tes,
        n.t_tww - x.t_tww - ts * warm_rate * (x.t_tww - x.t_lwr),
        n.t_twc - x.t_twc - ts * cold_rate * (mix.t_sw - x.t_twc),
        evaporator,
        n.t_cwr - x.t_cws - q_cond / (c * u.m_cw),
        n.t_cws - x.t_cwr + z.q_ct / (c * u.m_cw),
    ];

    let q_ub = tower_capacity(u.m_cw, u.m_oa, x.t_cwr, w.t_oawb, p);
    let inequality = [
        z.q_l,
        w.q_l_ref - z.q_l,
        p.t_lwr_max - n.t_lwr,
        z.q_ch,
        u.n_ch as f64 * p.q_ch_indv - z.q_ch,
        n.t_chws - p.t_chws_min,
        p.t_chws_max - n.t_chws,
        mix.m_bp,
        p.t_cwr_max - n.t_cwr,
        n.t_cws - tower_supply_floor(x.t_cwr, w.t_oawb, p),
        z.q_ct,
        q_ub - z.q_ct,
        n.s_twc - p.s_min,
        p.s_max - n.s_twc,
        n.s_tww - p.s_min,
        p.s_max - n.s_tww,
    ];
    Ok(ConstraintEval { equality, inequality, mix })
}

/// Next state implied by the heat flows `(q_l, q_ch, q_ct)`: the unique point
/// of the equality manifold with those flows.
pub fn forward_state(
    x: &PlantState,
    u: &ControlInput,
    q_l: f64,
    q_ch: f64,
    q_ct: f64,
    params: &PlantParams,
) -> Result<PlantState> {
    let mix = Intermediates::compute(x, u, params)?;
    let p = params;
    let c = p.c_pw;
    let ts = p.t_s;
    let s_twc = x.s_twc + ts * u.m_tw / p.m_tes;
    let warm_rate = u.m_tw.min(0.0) / (p.m_tes * x.s_tww - ts * u.m_tw);
    let cold_rate = u.m_tw.max(0.0) / (p.m_tes * x.s_twc + ts * u.m_tw);
    let t_chws = if u.n_ch == 0 { x.t_chws } else { mix.t_chwr - q_ch / (c * mix.m_chw) };
    let q_cond = condenser_load(x, u.n_ch as f64, q_ch, p);
    Ok(PlantState {
        t_lwr: mix.t_lws + q_l / (c * u.m_lw),
        s_tww: x.s_tww - ts * u.m_tw / p.m_tes,
        s_twc,
        t_twc: x.t_twc + ts * cold_rate * (mix.t_sw - x.t_twc),
        t_tww: x.t_tww + ts * warm_rate * (x.t_tww - x.t_lwr),
        t_chws,
        t_cwr: x.t_cws + q_cond / (c * u.m_cw),
        t_cws: x.t_cwr - q_ct / (c * u.m_cw),
    })
}
