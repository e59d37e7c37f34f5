//! State-dependent admissible command set.
//!
//! For each chiller count the set is a box on the four flows plus one coupling
//! constraint `0 <= m_lw + m_tw <= msw_max` on the supply flow. Every command
//! inside it leaves the plant projection feasible, and the load-flow lower
//! bound is sized so the coils can absorb the requested load at the current
//! supply temperature.

use rand::Rng;

use crate::params::PlantParams;

use super::constraints::condenser_load;
use super::projection::flow_intervals;
use super::types::{ControlInput, Disturbance, PlantState};

/// Relative margin kept from every derived bound.
const MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub n_ch: u32,
    pub m_lw: (f64, f64),
    pub m_tw: (f64, f64),
    pub m_cw: (f64, f64),
    pub m_oa: (f64, f64),
    /// Upper limit on the chiller supply flow `m_lw + m_tw`.
    pub msw_max: f64,
}

impl Envelope {
    pub fn contains(&self, u: &ControlInput) -> bool {
        let tol = 1e-9;
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo - tol && v <= hi + tol;
        u.n_ch == self.n_ch
            && within(u.m_lw, self.m_lw)
            && within(u.m_tw, self.m_tw)
            && within(u.m_cw, self.m_cw)
            && within(u.m_oa, self.m_oa)
            && within(u.m_sw(), (0.0, self.msw_max))
    }

    /// Closest-in-spirit admissible command: clamp each flow, then restore the
    /// supply-flow coupling by moving the tank flow, and the load flow if the
    /// tank flow saturates.
    pub fn repair(&self, u: &ControlInput) -> ControlInput {
        let mut m_lw = u.m_lw.clamp(self.m_lw.0, self.m_lw.1);
        let mut m_tw = u.m_tw.clamp(self.m_tw.0, self.m_tw.1);
        if m_lw + m_tw > self.msw_max {
            m_tw = (self.msw_max - m_lw).max(self.m_tw.0);
            m_lw = (self.msw_max - m_tw).clamp(self.m_lw.0, self.m_lw.1);
        }
        if m_lw + m_tw < 0.0 {
            m_tw = (-m_lw).min(self.m_tw.1);
            m_lw = (-m_tw).clamp(self.m_lw.0, self.m_lw.1);
        }
        if self.n_ch == 0 {
            m_tw = -m_lw;
        }
        ControlInput {
            m_lw,
            m_tw,
            n_ch: self.n_ch,
            m_cw: u.m_cw.clamp(self.m_cw.0, self.m_cw.1),
            m_oa: u.m_oa.clamp(self.m_oa.0, self.m_oa.1),
        }
    }

    /// Uniform draw over the box, repaired onto the coupling constraint.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ControlInput {
        let draw = |rng: &mut R, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let u = ControlInput {
            m_lw: draw(rng, self.m_lw),
            m_tw: draw(rng, self.m_tw),
            n_ch: self.n_ch,
            m_cw: draw(rng, self.m_cw),
            m_oa: draw(rng, self.m_oa),
        };
        self.repair(&u)
    }
}

fn shrink((lo, hi): (f64, f64)) -> (f64, f64) {
    let pad = MARGIN * (hi - lo).max(0.0);
    (lo + pad, hi - pad)
}

/// Admissible set for chiller count `n_ch`, or `None` if that count cannot run.
pub fn envelope(x: &PlantState, w: &Disturbance, n_ch: u32, params: &PlantParams) -> Option<Envelope> {
    let p = params;
    let c = p.c_pw;
    if n_ch > p.n_ch_max {
        return None;
    }
    let n = n_ch as f64;
    let per_step = p.t_s / p.m_tes;
    let m_tw = shrink((
        p.m_tw_min.max((p.s_min - x.s_twc) / per_step),
        p.m_tw_max.min((p.s_max - x.s_twc) / per_step),
    ));
    if m_tw.0 > m_tw.1 {
        return None;
    }

    // chilled supply must stay below its ceiling with the chillers at full duty
    let t_rw_worst = x.t_lwr.max(x.t_tww);
    let mut msw_max = n * p.m_indv;
    if t_rw_worst > x.t_chws {
        let h_max = n * (p.m_indv * (p.t_chws_max - x.t_chws) + p.q_ch_indv / c);
        msw_max = msw_max.min(h_max / (t_rw_worst - x.t_chws));
    }
    msw_max *= 1.0 - MARGIN;
    if msw_max < 0.0 {
        return None;
    }

    // condenser must reject the smallest duty the evaporator is forced to take
    let lift = p.t_cwr_max - x.t_cws;
    let forced_duty = if n_ch == 0 {
        0.0
    } else {
        let h = msw_max * (t_rw_worst - x.t_chws).max(0.0);
        (c * (n * p.m_indv * (x.t_chws - p.t_chws_max) + h)).max(0.0)
    };
    let q_cond = condenser_load(x, n, forced_duty, p);
    let m_cw_lo = if q_cond <= 0.0 {
        p.m_cw_min
    } else if lift <= 0.0 {
        return None;
    } else {
        (q_cond / (c * lift) * (1.0 + MARGIN)).max(p.m_cw_min)
    };
    if m_cw_lo > p.m_cw_max {
        return None;
    }

    let t_lws_worst = x.t_chws.max(x.t_twc);
    let m_lw_hi = p.m_lw_max.min(msw_max - m_tw.0);
    if m_lw_hi < p.m_lw_min {
        return None;
    }
    let m_lw_need = if t_lws_worst < p.t_lwr_max {
        w.q_l_ref / (c * (p.t_lwr_max - t_lws_worst)) * (1.0 + 10.0 * MARGIN)
    } else {
        return None;
    };
    let m_lw = (m_lw_need.clamp(p.m_lw_min, m_lw_hi), m_lw_hi);
    // supply flow cannot be negative: the tank cannot discharge more than the load flow
    if m_lw.0 + m_tw.1 < 0.0 {
        return None;
    }
    if n_ch == 0 && -m_tw.0 < m_lw.0 {
        return None;
    }
    let env = Envelope { n_ch, m_lw, m_tw, m_cw: (m_cw_lo, p.m_cw_max), m_oa: (p.m_oa_min, p.m_oa_max), msw_max };
    // the corner used by repair must be feasible; this guards the derivation above
    let probe = env.repair(&ControlInput { m_lw: m_lw.0, m_tw: 0.0, n_ch, m_cw: p.m_cw_max, m_oa: p.m_oa_max });
    flow_intervals(x, &probe, w, p).ok()?;
    Some(env)
}

/// Envelopes for every chiller count that can run, in increasing order.
pub fn admissible_envelopes(x: &PlantState, w: &Disturbance, params: &PlantParams) -> Vec<Envelope> {
    (0..=params.n_ch_max).filter_map(|n| envelope(x, w, n, params)).collect()
}

/// Repairs `u` onto the admissible set, keeping its chiller count when possible
/// and otherwise moving to the nearest admissible count (ties to more chillers).
pub fn repair_command(x: &PlantState, w: &Disturbance, u: &ControlInput, params: &PlantParams) -> Option<ControlInput> {
    let envs = admissible_envelopes(x, w, params);
    let env = envs.iter().min_by_key(|e| {
        let d = (e.n_ch as i64 - u.n_ch as i64).abs();
        (d, u32::MAX - e.n_ch)
    })?;
    Some(env.repair(u))
}
