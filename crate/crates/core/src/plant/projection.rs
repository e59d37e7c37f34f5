//! Closed-form solution of the one-step projection.
//!
//! Once the command is fixed, each heat flow enters exactly one block of the
//! equalities: the met load only drives the load return temperature, the
//! chiller duty drives the chilled supply and condenser return temperatures,
//! and the tower duty drives the cooling-water supply temperature. The
//! projection therefore separates into three scalar problems over intervals,
//! each minimized by clamping its unconstrained target into the interval.
//! This module is used to seed and cross-check the numerical solve and to
//! decide feasibility of a command without running a solver.

use crate::error::{Error, Result};
use crate::params::PlantParams;

use super::constraints::{condenser_load, forward_state, tower_supply_floor, Decision, Intermediates};
use super::power::{chiller_curve, tower_capacity};
use super::types::{ControlInput, Disturbance, PlantState};

/// Feasible interval of each heat flow, given the command.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowIntervals {
    pub q_l: (f64, f64),
    pub q_ch: (f64, f64),
    pub q_ct: (f64, f64),
}

const INTERVAL_TOL: f64 = 1e-9;

fn nonempty(name: &str, lo: f64, hi: f64) -> Result<(f64, f64)> {
    if lo > hi + INTERVAL_TOL * (1.0 + hi.abs()) {
        return Err(Error::Infeasible(format!("{name} has no feasible value (needs >= {lo:.6}, allows <= {hi:.6})")));
    }
    Ok((lo, hi.max(lo)))
}

/// Largest chiller duty whose condenser load stays at or below `q_cond_max`.
fn max_duty_for_condenser(x: &PlantState, n: f64, q_cond_max: f64, params: &PlantParams) -> Result<f64> {
    let (slope, offset) = chiller_curve(x.t_cws, x.t_chws, params);
    let gain = 1.0 + params.eta1 * slope;
    if gain <= 0.0 {
        return Err(Error::InvalidArgument("condenser load not increasing in chiller duty".into()));
    }
    let q = (q_cond_max - params.eta1 * n * offset) / gain;
    if slope * q + n * offset >= 0.0 {
        Ok(q)
    } else {
        // compressor power clamped to zero at this duty
        Ok(q_cond_max)
    }
}

/// Checks the command-only constraints and returns the flow intervals.
pub fn flow_intervals(x: &PlantState, u: &ControlInput, w: &Disturbance, params: &PlantParams) -> Result<FlowIntervals> {
    let p = params;
    let c = p.c_pw;
    let mix = Intermediates::compute(x, u, p)?;
    if mix.m_bp < -1e-9 {
        return Err(Error::Infeasible(format!(
            "supply flow {:.3} kg/s exceeds chiller flow {:.3} kg/s (bypass balance)",
            mix.m_sw, mix.m_chw
        )));
    }
    let s_next = x.s_twc + p.t_s * u.m_tw / p.m_tes;
    if s_next < p.s_min - 1e-12 || s_next > p.s_max + 1e-12 {
        return Err(Error::Infeasible(format!("storage fraction would leave its bounds ({s_next:.6})")));
    }
    let q_l = nonempty("met load", 0.0, w.q_l_ref.min(c * u.m_lw * (p.t_lwr_max - mix.t_lws)))?;

    let n = u.n_ch as f64;
    let q_cond_max = c * u.m_cw * (p.t_cwr_max - x.t_cws);
    let q_ch = if u.n_ch == 0 {
        if x.t_chws < p.t_chws_min - 1e-12 || x.t_chws > p.t_chws_max + 1e-12 {
            return Err(Error::Infeasible("idle evaporator holds chilled supply outside its bounds".into()));
        }
        nonempty("chiller duty", 0.0, 0.0_f64.min(q_cond_max))?
    } else {
        let lo = (c * mix.m_chw * (mix.t_chwr - p.t_chws_max)).max(0.0);
        let hi = (n * p.q_ch_indv)
            .min(c * mix.m_chw * (mix.t_chwr - p.t_chws_min))
            .min(max_duty_for_condenser(x, n, q_cond_max, p)?);
        nonempty("chiller duty", lo, hi)?
    };

    let floor = tower_supply_floor(x.t_cwr, w.t_oawb, p);
    let q_ub = tower_capacity(u.m_cw, u.m_oa, x.t_cwr, w.t_oawb, p);
    let q_ct = nonempty("tower duty", 0.0, q_ub.min(c * u.m_cw * (x.t_cwr - floor)))?;
    Ok(FlowIntervals { q_l, q_ch, q_ct })
}

/// Exact minimizer of the projection objective. Errors when the set is empty.
pub fn analytic_projection(x: &PlantState, u: &ControlInput, w: &Disturbance, params: &PlantParams) -> Result<Decision> {
    let p = params;
    let iv = flow_intervals(x, u, w, p)?;
    let mix = Intermediates::compute(x, u, p)?;
    let q_l = w.q_l_ref.clamp(iv.q_l.0, iv.q_l.1);
    let q_ch_target = if u.n_ch == 0 { 0.0 } else { p.c_pw * mix.m_chw * (mix.t_chwr - p.t_chws_set) };
    let q_ch = q_ch_target.clamp(iv.q_ch.0, iv.q_ch.1);
    let q_ct = (p.c_pw * u.m_cw * (x.t_cwr - p.t_cws_set)).clamp(iv.q_ct.0, iv.q_ct.1);
    let next = forward_state(x, u, q_l, q_ch, q_ct, p)?;
    Ok(Decision { next, q_l, q_ch, q_ct })
}

/// True when the command leaves the projection set non-empty.
pub fn is_feasible(x: &PlantState, u: &ControlInput, w: &Disturbance, params: &PlantParams) -> bool {
    flow_intervals(x, u, w, params).is_ok()
}

/// Condenser load produced by the largest admissible chiller duty.
pub fn max_condenser_load(x: &PlantState, u: &ControlInput, w: &Disturbance, params: &PlantParams) -> Result<f64> {
    let iv = flow_intervals(x, u, w, params)?;
    Ok(condenser_load(x, u.n_ch as f64, iv.q_ch.1, params))
}
