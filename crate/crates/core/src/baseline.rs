//! Rule-based supervisory controller.
//!
//! The chilled-water loop shifts tank flow against the price signal and then
//! nudges load flow, tank flow and chiller count until a one-step prediction of
//! the load return temperature, the chilled supply temperature and the cold
//! storage fraction sits inside its band. The cooling-water loop keeps the
//! predicted condenser return temperature under its limit and sizes the tower
//! airflow so the tower capacity slightly exceeds the duty needed to bring the
//! return water back to its setpoint.
//!
//! Every adjustment loop only moves a variable in one direction per call, which
//! bounds the number of iterations by the box width over the increment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::PlantParams;
use crate::plant::power::tower_capacity;
use crate::plant::{ControlInput, Disturbance, PlantState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    /// Relative price deviation from its moving average that triggers a tank move.
    pub price_threshold: f64,
    pub tw_step: f64,
    pub lw_step: f64,
    pub cw_step: f64,
    pub oa_step: f64,
    /// Tower capacity may exceed the required duty by at most this factor.
    pub tower_overshoot: f64,
    /// Assumed ratio of condenser load to chiller duty.
    pub eta_hat: f64,
    /// Load flow is reduced while the predicted return temperature sits more
    /// than this far below its limit, °C.
    pub lwr_band: f64,
    /// Cooling-water flow is reduced while the predicted condenser return
    /// temperature sits more than this far below its limit, °C.
    pub cwr_band: f64,
    pub max_iterations: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            price_threshold: 0.05,
            tw_step: 10.0,
            lw_step: 10.0,
            cw_step: 20.0,
            oa_step: 0.05,
            tower_overshoot: 1.1,
            eta_hat: 1.147,
            lwr_band: 3.0,
            cwr_band: 5.0,
            max_iterations: 1000,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let steps = [self.tw_step, self.lw_step, self.cw_step, self.oa_step, self.lwr_band, self.cwr_band];
        if steps.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("baseline increments and bands must be positive".into()));
        }
        if !(self.price_threshold > 0.0 && self.price_threshold < 1.0) {
            return Err(Error::Config(format!("price threshold {} outside (0, 1)", self.price_threshold)));
        }
        if !(self.tower_overshoot > 1.0 && self.eta_hat >= 1.0) {
            return Err(Error::Config("tower overshoot must exceed 1 and eta_hat must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Memory of the rule controller: the command it issued last.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineState {
    pub prev: ControlInput,
}

impl BaselineState {
    /// Mid-box command with enough chillers for the first requested load.
    pub fn cold_start(q_l_ref: f64, params: &PlantParams) -> Self {
        let n = (q_l_ref / params.q_ch_indv).ceil().clamp(0.0, params.n_ch_max as f64) as u32;
        let mut prev = ControlInput::mid_box(params, n);
        if n == 0 {
            prev.m_tw = -prev.m_lw.min(-params.m_tw_min);
            prev.m_lw = -prev.m_tw;
        }
        Self { prev }
    }
}

/// One-way stepper: once a variable has moved up it may not move down in the
/// same call, and vice versa.
#[derive(Default)]
struct Direction(i8);

impl Direction {
    fn allows(&self, dir: i8) -> bool {
        self.0 == 0 || self.0 == dir
    }
}

/// Nudges `v` by `dir * step` inside `[lo, hi]`. Returns whether it moved.
fn nudge(v: &mut f64, dir: i8, step: f64, lo: f64, hi: f64, memory: &mut Direction) -> bool {
    if !memory.allows(dir) {
        return false;
    }
    let next = (*v + dir as f64 * step).clamp(lo, hi);
    if next == *v {
        return false;
    }
    *v = next;
    memory.0 = dir;
    true
}

/// Predicted `(T_lwr, T_chws, S_twc)` at the next step with no bypass flow and
/// every running chiller at full duty.
fn predict_chilled(x: &PlantState, w: &Disturbance, m_lw: f64, m_tw: f64, n_ch: u32, p: &PlantParams) -> (f64, f64, f64) {
    let c = p.c_pw;
    let t_sw = x.t_chws;
    let t_lws = t_sw + m_tw.min(0.0) / m_lw * (t_sw - x.t_twc);
    let t_lwr = t_lws + w.q_l_ref / (c * m_lw);
    let m_sw = m_lw + m_tw;
    let t_chws = if n_ch == 0 || m_sw <= 0.0 {
        x.t_chws
    } else {
        let t_rw = if m_tw > 0.0 { x.t_lwr + m_tw / m_sw * (x.t_tww - x.t_lwr) } else { x.t_lwr };
        t_rw - n_ch as f64 * p.q_ch_indv / (c * m_sw)
    };
    (t_lwr, t_chws, x.s_twc + p.t_s * m_tw / p.m_tes)
}

/// Chiller duty the cooling-water loop plans for: what it takes to bring the
/// supply flow to the chilled setpoint, capped by the running capacity.
fn expected_duty(x: &PlantState, u: &ControlInput, p: &PlantParams) -> f64 {
    let m_sw = u.m_sw();
    if u.n_ch == 0 || m_sw <= 0.0 {
        return 0.0;
    }
    let t_rw = if u.m_tw > 0.0 { x.t_lwr + u.m_tw / m_sw * (x.t_tww - x.t_lwr) } else { x.t_lwr };
    (p.c_pw * m_sw * (t_rw - p.t_chws_set)).clamp(0.0, u.n_ch as f64 * p.q_ch_indv)
}

fn cap_exceeded(what: &str, cfg: &BaselineConfig) -> Error {
    Error::Defect(format!("{what} rule loop exceeded {} iterations", cfg.max_iterations))
}

fn chilled_water_loop(
    x: &PlantState,
    w: &Disturbance,
    rho: f64,
    rho_bar: f64,
    prev: &ControlInput,
    cfg: &BaselineConfig,
    p: &PlantParams,
) -> Result<(f64, f64, u32)> {
    let (mut m_lw, mut m_tw, mut n) = (prev.m_lw, prev.m_tw, prev.n_ch.min(p.n_ch_max));
    if rho < (1.0 - cfg.price_threshold) * rho_bar {
        m_tw += cfg.tw_step;
    } else if rho > (1.0 + cfg.price_threshold) * rho_bar {
        m_tw -= cfg.tw_step;
    }
    m_tw = m_tw.clamp(p.m_tw_min, p.m_tw_max);
    m_lw = m_lw.clamp(p.m_lw_min, p.m_lw_max);

    let (mut d_lw, mut d_tw, mut d_n) = (Direction::default(), Direction::default(), Direction::default());
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > cfg.max_iterations {
            return Err(cap_exceeded("chilled-water", cfg));
        }
        let (t_lwr, t_chws, s_twc) = predict_chilled(x, w, m_lw, m_tw, n, p);
        let mut moved = false;
        if s_twc > p.s_max {
            moved |= nudge(&mut m_tw, -1, cfg.tw_step, p.m_tw_min, p.m_tw_max, &mut d_tw);
        } else if s_twc < p.s_min {
            moved |= nudge(&mut m_tw, 1, cfg.tw_step, p.m_tw_min, p.m_tw_max, &mut d_tw);
        }
        if t_lwr > p.t_lwr_max {
            moved |= nudge(&mut m_lw, 1, cfg.lw_step, p.m_lw_min, p.m_lw_max, &mut d_lw);
        } else if t_lwr < p.t_lwr_max - cfg.lwr_band {
            moved |= nudge(&mut m_lw, -1, cfg.lw_step, p.m_lw_min, p.m_lw_max, &mut d_lw);
        }
        if t_chws > p.t_chws_max && n < p.n_ch_max && d_n.allows(1) {
            n += 1;
            d_n.0 = 1;
            moved = true;
        } else if t_chws < p.t_chws_min && n > 0 && d_n.allows(-1) {
            n -= 1;
            d_n.0 = -1;
            moved = true;
        }
        if !moved {
            break;
        }
    }

    // the tank cannot discharge more than the load flow
    m_tw = m_tw.max(-m_lw);
    // supply flow fixes the minimum number of running chillers
    let n_cap = p.n_ch_max as f64 * p.m_indv;
    if m_lw + m_tw > n_cap {
        m_tw = (n_cap - m_lw).max(p.m_tw_min).max(-m_lw);
    }
    let m_sw = m_lw + m_tw;
    let n_min = if m_sw > 1e-9 { (m_sw / p.m_indv - 1e-9).ceil() as u32 } else { 0 };
    Ok((m_lw, m_tw, n.max(n_min).min(p.n_ch_max)))
}

fn cooling_water_loop(
    x: &PlantState,
    w: &Disturbance,
    chilled: &ControlInput,
    prev: &ControlInput,
    cfg: &BaselineConfig,
    p: &PlantParams,
) -> Result<(f64, f64)> {
    let c = p.c_pw;
    let q_cond = cfg.eta_hat * expected_duty(x, chilled, p);
    let t_cwr_next = |m_cw: f64| x.t_cws + q_cond / (c * m_cw);
    let (mut m_cw, mut m_oa) = (prev.m_cw.clamp(p.m_cw_min, p.m_cw_max), prev.m_oa.clamp(p.m_oa_min, p.m_oa_max));

    let mut d_cw = Direction::default();
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > cfg.max_iterations {
            return Err(cap_exceeded("cooling-water", cfg));
        }
        let t = t_cwr_next(m_cw);
        let moved = if t > p.t_cwr_max {
            nudge(&mut m_cw, 1, cfg.cw_step, p.m_cw_min, p.m_cw_max, &mut d_cw)
        } else if t < p.t_cwr_max - cfg.cwr_band {
            nudge(&mut m_cw, -1, cfg.cw_step, p.m_cw_min, p.m_cw_max, &mut d_cw)
        } else {
            false
        };
        if !moved {
            break;
        }
    }

    // tower window: required duty <= capacity <= overshoot * required duty
    let (mut d_oa, mut d_cw) = (Direction::default(), Direction::default());
    let mut iterations = 0;
    loop {
        iterations += 1;
        if iterations > cfg.max_iterations {
            return Err(cap_exceeded("tower", cfg));
        }
        let q_set = c * m_cw * (x.t_cwr - p.t_cws_set);
        let q_ub = tower_capacity(m_cw, m_oa, x.t_cwr, w.t_oawb, p);
        let moved = if q_ub < q_set {
            // capacity grows slower than the required duty in m_cw
            nudge(&mut m_oa, 1, cfg.oa_step, p.m_oa_min, p.m_oa_max, &mut d_oa) || {
                let mut trial = m_cw;
                nudge(&mut trial, -1, cfg.cw_step, p.m_cw_min, p.m_cw_max, &mut d_cw)
                    && t_cwr_next(trial) <= p.t_cwr_max
                    && {
                        m_cw = trial;
                        true
                    }
            }
        } else if q_ub > cfg.tower_overshoot * q_set {
            nudge(&mut m_oa, -1, cfg.oa_step, p.m_oa_min, p.m_oa_max, &mut d_oa)
                || (q_set > 0.0 && nudge(&mut m_cw, 1, cfg.cw_step, p.m_cw_min, p.m_cw_max, &mut d_cw))
        } else {
            false
        };
        if !moved {
            break;
        }
    }
    Ok((m_cw, m_oa))
}

/// Computes the next command and stores it as the controller's memory.
pub fn baseline_step(
    x: &PlantState,
    w: &Disturbance,
    rho: f64,
    rho_bar: f64,
    state: &mut BaselineState,
    cfg: &BaselineConfig,
    params: &PlantParams,
) -> Result<ControlInput> {
    let prev = state.prev;
    let (m_lw, m_tw, n_ch) = chilled_water_loop(x, w, rho, rho_bar, &prev, cfg, params)?;
    let chilled = ControlInput { m_lw, m_tw, n_ch, ..prev };
    let (m_cw, m_oa) = cooling_water_loop(x, w, &chilled, &prev, cfg, params)?;
    let u = ControlInput { m_lw, m_tw, n_ch, m_cw, m_oa };
    state.prev = u;
    Ok(u)
}
