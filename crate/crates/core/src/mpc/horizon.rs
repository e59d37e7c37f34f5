//! Full-horizon transcription of the plant constraints.
//!
//! Each step carries its command, the state it leads to, the three heat flows
//! and five slacks that turn the non-box inequalities into equalities. The
//! warm storage fraction is eliminated through `s_tww = 1 - s_twc`. Kinks of
//! the plant model (tank flow direction, compressor power floor, tower
//! capacity and approach floor) are smoothed so the problem is C¹.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::ScenarioRow;
use crate::params::{PlantParams, KELVIN_OFFSET};
use crate::plant::power::{chiller_curve, fan_power, plant_chiller_power, pump_power, tower_capacity};
use crate::plant::constraints::tower_supply_floor;
use crate::plant::{ControlInput, PlantOutputs, PlantState};
use crate::plant::types::electricity_cost;
use crate::solver::Nlp;

/// Variables per step.
pub const NV: usize = 20;
/// Equalities per step.
pub const NE: usize = 12;

// block layout
pub const M_LW: usize = 0;
pub const M_TW: usize = 1;
pub const N_CH: usize = 2;
pub const M_CW: usize = 3;
pub const M_OA: usize = 4;
/// First of the seven next-state entries, ordered
/// `t_lwr, s_twc, t_twc, t_tww, t_chws, t_cwr, t_cws`.
pub const STATE: usize = 5;
pub const Q_L: usize = 12;
pub const Q_CH: usize = 13;
pub const Q_CT: usize = 14;
pub const S_SW: usize = 15;
pub const S_BP: usize = 16;
pub const S_CH: usize = 17;
pub const S_CT: usize = 18;
pub const S_AP: usize = 19;

// offsets inside a seven-entry state
const T_LWR: usize = 0;
const S_TWC: usize = 1;
const T_TWC: usize = 2;
const T_TWW: usize = 3;
const T_CHWS: usize = 4;
const T_CWR: usize = 5;
const T_CWS: usize = 6;

/// Local vector: previous state (7) followed by the step block.
const NL: usize = 7 + NV;
const B: usize = 7;

pub const EQUATION_NAMES: [&str; NE] = [
    "load_return_heat_balance",
    "cold_fraction_update",
    "warm_tank_temperature",
    "cold_tank_temperature",
    "evaporator_heat_balance",
    "condenser_temperature_rise",
    "tower_heat_rejection",
    "supply_flow_nonnegative",
    "bypass_nonnegative",
    "chiller_duty_below_capacity",
    "tower_duty_below_capacity",
    "tower_supply_above_approach",
];

/// Physical size of one unit of each block variable.
const VAR_SCALE: [f64; NV] = [
    100.0, 10.0, 1.0, 100.0, 1.0, // command
    10.0, 1.0, 10.0, 10.0, 10.0, 10.0, 10.0, // next state
    1000.0, 1000.0, 1000.0, // heat flows
    100.0, 100.0, 1000.0, 1000.0, 10.0, // slacks
];

/// Residual multipliers: heat balances in MW, flows in 100 kg/s.
const RES_SCALE: [f64; NE] = [1e-3, 10.0, 1.0, 1.0, 1e-3, 1e-3, 1e-3, 1e-2, 1e-2, 1e-3, 1e-3, 1.0];

/// Widths of the smoothing kinks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Smoothing {
    /// Tank flow direction, kg/s.
    pub flow: f64,
    /// Compressor power floor, kW.
    pub power: f64,
    /// Tower capacity and approach floor, °C.
    pub temperature: f64,
}

impl Default for Smoothing {
    fn default() -> Self {
        Self { flow: 0.1, power: 1.0, temperature: 0.05 }
    }
}

/// `max(a, 0)` smoothed; returns value and derivative.
fn smax(a: f64, eps: f64) -> (f64, f64) {
    let s = (a * a + eps * eps).sqrt();
    (0.5 * (a + s), 0.5 * (1.0 + a / s))
}

/// `min(a, b)` smoothed; returns value and the two partials.
fn smin(a: f64, b: f64, eps: f64) -> (f64, f64, f64) {
    let d = a - b;
    let s = (d * d + eps * eps).sqrt();
    (0.5 * (a + b - s), 0.5 * (1.0 - d / s), 0.5 * (1.0 + d / s))
}

fn pump_slope(m: f64, c: [f64; 4]) -> f64 {
    c[0] * c[1] / (1.0 + c[1] * m) + c[2]
}

/// Chiller-count treatment of the problem.
#[derive(Debug, Clone, PartialEq)]
pub enum ChillerMode {
    /// Continuous count in `[0, n_max]`.
    Relaxed,
    /// Count pinned per step.
    Fixed(Vec<u32>),
}

/// The horizon problem in scaled variables.
pub struct HorizonNlp<'a> {
    pub x0: PlantState,
    pub forecast: &'a [ScenarioRow],
    pub params: &'a PlantParams,
    pub smoothing: Smoothing,
    /// Value per unit of cold storage fraction left at the end of the
    /// horizon, $ (zero disables the terminal term).
    pub terminal_value: f64,
    pub mode: ChillerMode,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

struct Local {
    res: [f64; NE],
    jac: [[f64; NL]; NE],
}

impl<'a> HorizonNlp<'a> {
    pub fn new(
        x0: PlantState,
        forecast: &'a [ScenarioRow],
        params: &'a PlantParams,
        smoothing: Smoothing,
        terminal_value: f64,
        mode: ChillerMode,
    ) -> Result<Self> {
        let t = forecast.len();
        if t == 0 {
            return Err(Error::InvalidArgument("empty forecast".into()));
        }
        if let ChillerMode::Fixed(n) = &mode {
            if n.len() != t || n.iter().any(|v| *v > params.n_ch_max) {
                return Err(Error::InvalidArgument(format!("fixed chiller schedule must hold {t} counts in 0..={}", params.n_ch_max)));
            }
        }
        let p = params;
        let n_max = p.n_ch_max as f64;
        let mut lower = Vec::with_capacity(t * NV);
        let mut upper = Vec::with_capacity(t * NV);
        for (k, row) in forecast.iter().enumerate() {
            let (n_lo, n_hi) = match &mode {
                ChillerMode::Relaxed => (0.0, n_max),
                ChillerMode::Fixed(n) => (n[k] as f64, n[k] as f64),
            };
            let lo = [
                p.m_lw_min, p.m_tw_min, n_lo, p.m_cw_min, p.m_oa_min, //
                -40.0, p.s_min, -40.0, -40.0, p.t_chws_min, -40.0, -40.0, //
                0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0, 0.0,
            ];
            let hi = [
                p.m_lw_max,
                p.m_tw_max,
                n_hi,
                p.m_cw_max,
                p.m_oa_max,
                p.t_lwr_max,
                p.s_max,
                120.0,
                120.0,
                p.t_chws_max,
                p.t_cwr_max,
                120.0,
                row.q_l_ref,
                n_max * p.q_ch_indv,
                1e5,
                n_max * p.m_indv,
                n_max * p.m_indv,
                n_max * p.q_ch_indv,
                1e5,
                200.0,
            ];
            for i in 0..NV {
                lower.push(lo[i] / VAR_SCALE[i]);
                upper.push(hi[i] / VAR_SCALE[i]);
            }
        }
        Ok(Self { x0, forecast, params, smoothing, terminal_value, mode, lower, upper })
    }

    pub fn horizon(&self) -> usize {
        self.forecast.len()
    }

    fn state7(x: &PlantState) -> [f64; 7] {
        [x.t_lwr, x.s_twc, x.t_twc, x.t_tww, x.t_chws, x.t_cwr, x.t_cws]
    }

    fn fixed_count(&self, k: usize) -> Option<u32> {
        match &self.mode {
            ChillerMode::Relaxed => None,
            ChillerMode::Fixed(n) => Some(n[k]),
        }
    }

    /// Physical local vector of step `k`.
    fn local(&self, v: &[f64], k: usize) -> [f64; NL] {
        let mut l = [0.0; NL];
        if k == 0 {
            l[..7].copy_from_slice(&Self::state7(&self.x0));
        } else {
            let base = (k - 1) * NV + STATE;
            for i in 0..7 {
                l[i] = v[base + i] * VAR_SCALE[STATE + i];
            }
        }
        for i in 0..NV {
            l[B + i] = v[k * NV + i] * VAR_SCALE[i];
        }
        l
    }

    /// Global scaled index of local entry `i` at step `k`, if it is a variable.
    fn global(k: usize, i: usize) -> Option<usize> {
        if i >= B {
            Some(k * NV + i - B)
        } else if k > 0 {
            Some((k - 1) * NV + STATE + i)
        } else {
            None
        }
    }

    fn var_scale(i: usize) -> f64 {
        if i >= B {
            VAR_SCALE[i - B]
        } else {
            VAR_SCALE[STATE + i]
        }
    }

    /// Compressor power argument `a` and its partials w.r.t. (q_ch, n, t_cws, t_chws).
    fn chiller_arg(&self, q_ch: f64, n: f64, t_cws: f64, t_chws: f64) -> (f64, [f64; 4]) {
        let p = self.params;
        let (slope, offset) = chiller_curve(t_cws, t_chws, p);
        let dr_cws = 1.0 / (t_chws + KELVIN_OFFSET);
        let dr_chws = -(t_cws + KELVIN_OFFSET) / (t_chws + KELVIN_OFFSET).powi(2);
        let a = slope * q_ch + n * offset;
        let d_cws = q_ch * dr_cws + n * (p.beta2 - p.beta3 * dr_cws);
        let d_chws = q_ch * dr_chws - n * p.beta3 * dr_chws;
        (a, [slope, offset, d_cws, d_chws])
    }

    fn residuals_local(&self, k: usize, l: &[f64; NL]) -> Local {
        let p = self.params;
        let sm = self.smoothing;
        let c = p.c_pw;
        let ts = p.t_s;
        let mt = p.m_tes;
        let row = &self.forecast[k];
        let mut res = [0.0; NE];
        let mut jac = [[0.0; NL]; NE];

        let (m_lw, m_tw, n, m_cw, m_oa) = (l[B + M_LW], l[B + M_TW], l[B + N_CH], l[B + M_CW], l[B + M_OA]);
        let nx = |i: usize| l[B + STATE + i];
        let ix = |i: usize| B + STATE + i;
        let (q_l, q_ch, q_ct) = (l[B + Q_L], l[B + Q_CH], l[B + Q_CT]);
        let (pos, dpos) = smax(m_tw, sm.flow);
        let (neg, dneg) = (m_tw - pos, 1.0 - dpos);

        // load return: c (m_lw (t_lwr' - t_chws) - neg (t_chws - t_twc)) - q_l
        res[0] = c * (m_lw * (nx(T_LWR) - l[T_CHWS]) - neg * (l[T_CHWS] - l[T_TWC])) - q_l;
        jac[0][B + M_LW] = c * (nx(T_LWR) - l[T_CHWS]);
        jac[0][ix(T_LWR)] = c * m_lw;
        jac[0][T_CHWS] = c * (-m_lw - neg);
        jac[0][B + M_TW] = -c * dneg * (l[T_CHWS] - l[T_TWC]);
        jac[0][T_TWC] = c * neg;
        jac[0][B + Q_L] = -1.0;

        // cold fraction
        res[1] = nx(S_TWC) - l[S_TWC] - ts * m_tw / mt;
        jac[1][ix(S_TWC)] = 1.0;
        jac[1][S_TWC] = -1.0;
        jac[1][B + M_TW] = -ts / mt;

        // warm tank temperature, mixing only while discharging
        let dw = mt * (1.0 - l[S_TWC]) - ts * m_tw;
        let g = ts * neg / dw;
        let dg_m = ts * (dneg * dw + ts * neg) / (dw * dw);
        let dg_s = ts * neg * mt / (dw * dw);
        let spread_w = l[T_TWW] - l[T_LWR];
        res[2] = nx(T_TWW) - l[T_TWW] - g * spread_w;
        jac[2][ix(T_TWW)] = 1.0;
        jac[2][T_TWW] = -1.0 - g;
        jac[2][T_LWR] = g;
        jac[2][B + M_TW] = -dg_m * spread_w;
        jac[2][S_TWC] = -dg_s * spread_w;

        // cold tank temperature, mixing only while charging
        let dc = mt * l[S_TWC] + ts * m_tw;
        let h = ts * pos / dc;
        let dh_m = ts * (dpos * dc - pos * ts) / (dc * dc);
        let dh_s = -ts * pos * mt / (dc * dc);
        let spread_c = l[T_CHWS] - l[T_TWC];
        res[3] = nx(T_TWC) - l[T_TWC] - h * spread_c;
        jac[3][ix(T_TWC)] = 1.0;
        jac[3][T_TWC] = -1.0 + h;
        jac[3][T_CHWS] = -h;
        jac[3][B + M_TW] = -dh_m * spread_c;
        jac[3][S_TWC] = -dh_s * spread_c;

        // evaporator
        let mi = p.m_indv;
        if self.fixed_count(k) == Some(0) {
            // idle evaporator keeps its water temperature
            res[4] = nx(T_CHWS) - l[T_CHWS];
            jac[4][ix(T_CHWS)] = 1.0;
            jac[4][T_CHWS] = -1.0;
        } else {
            let m_sw = m_lw + m_tw;
            let m_bp = n * mi - m_sw;
            res[4] = c * (n * mi * nx(T_CHWS) - m_sw * l[T_LWR] - pos * (l[T_TWW] - l[T_LWR]) - m_bp * l[T_CHWS]) + q_ch;
            jac[4][B + N_CH] = c * mi * (nx(T_CHWS) - l[T_CHWS]);
            jac[4][ix(T_CHWS)] = c * n * mi;
            jac[4][B + M_LW] = c * (l[T_CHWS] - l[T_LWR]);
            jac[4][B + M_TW] = c * (l[T_CHWS] - l[T_LWR] - dpos * (l[T_TWW] - l[T_LWR]));
            jac[4][T_LWR] = c * (pos - m_sw);
            jac[4][T_TWW] = -c * pos;
            jac[4][T_CHWS] = -c * m_bp;
            jac[4][B + Q_CH] = 1.0;
        }

        // condenser
        let (a, da) = self.chiller_arg(q_ch, n, l[T_CWS], l[T_CHWS]);
        let (pc, dpc) = smax(a, sm.power);
        let eta = p.eta1;
        res[5] = c * m_cw * (nx(T_CWR) - l[T_CWS]) - q_ch - eta * pc;
        jac[5][B + M_CW] = c * (nx(T_CWR) - l[T_CWS]);
        jac[5][ix(T_CWR)] = c * m_cw;
        jac[5][T_CWS] = -c * m_cw - eta * dpc * da[2];
        jac[5][T_CHWS] = -eta * dpc * da[3];
        jac[5][B + Q_CH] = -1.0 - eta * dpc * da[0];
        jac[5][B + N_CH] = -eta * dpc * da[1];

        // tower rejection
        res[6] = c * m_cw * (nx(T_CWS) - l[T_CWR]) + q_ct;
        jac[6][B + M_CW] = c * (nx(T_CWS) - l[T_CWR]);
        jac[6][ix(T_CWS)] = c * m_cw;
        jac[6][T_CWR] = -c * m_cw;
        jac[6][B + Q_CT] = 1.0;

        // supply flow and bypass
        res[7] = m_lw + m_tw - l[B + S_SW];
        jac[7][B + M_LW] = 1.0;
        jac[7][B + M_TW] = 1.0;
        jac[7][B + S_SW] = -1.0;
        res[8] = n * mi - l[B + S_SW] - l[B + S_BP];
        jac[8][B + N_CH] = mi;
        jac[8][B + S_SW] = -1.0;
        jac[8][B + S_BP] = -1.0;

        // chiller capacity
        res[9] = n * p.q_ch_indv - q_ch - l[B + S_CH];
        jac[9][B + N_CH] = p.q_ch_indv;
        jac[9][B + Q_CH] = -1.0;
        jac[9][B + S_CH] = -1.0;

        // tower capacity
        let (c1, c2, c3) = (p.c1, p.c2, p.c3);
        let (dt, ddt) = smax(l[T_CWR] - row.t_oawb, sm.temperature);
        let am = m_cw.powf(c3);
        let ratio = m_cw / m_oa;
        let bm = 1.0 + c2 * ratio.powf(c3);
        let q_ub = c1 * am / bm * dt;
        let da_m = c3 * m_cw.powf(c3 - 1.0);
        let db_m = c2 * c3 * ratio.powf(c3 - 1.0) / m_oa;
        let db_o = -c2 * c3 * ratio.powf(c3 - 1.0) * m_cw / (m_oa * m_oa);
        res[10] = q_ub - q_ct - l[B + S_CT];
        jac[10][B + M_CW] = c1 * dt * (da_m * bm - am * db_m) / (bm * bm);
        jac[10][B + M_OA] = -c1 * dt * am * db_o / (bm * bm);
        jac[10][T_CWR] = c1 * am / bm * ddt;
        jac[10][B + Q_CT] = -1.0;
        jac[10][B + S_CT] = -1.0;

        // approach floor
        let (fl, _, dfl_b) = smin(row.t_oawb + p.approach_min, l[T_CWR], sm.temperature);
        res[11] = nx(T_CWS) - fl - l[B + S_AP];
        jac[11][ix(T_CWS)] = 1.0;
        jac[11][T_CWR] = -dfl_b;
        jac[11][B + S_AP] = -1.0;

        for e in 0..NE {
            let s = if e == 4 && self.fixed_count(k) == Some(0) { 1.0 } else { RES_SCALE[e] };
            res[e] *= s;
            for j in 0..NL {
                jac[e][j] *= s;
            }
        }
        Local { res, jac }
    }

    /// Stage objective of step `k` and its gradient w.r.t. the local vector.
    fn objective_local(&self, k: usize, l: &[f64; NL], grad: &mut [f64; NL]) -> f64 {
        let p = self.params;
        let row = &self.forecast[k];
        let w = row.price * p.t_s / 3600.0;
        let (q_ch, n, m_cw, m_oa) = (l[B + Q_CH], l[B + N_CH], l[B + M_CW], l[B + M_OA]);
        let (a, da) = self.chiller_arg(q_ch, n, l[T_CWS], l[T_CHWS]);
        let (pc, dpc) = smax(a, self.smoothing.power);
        let m_chw = n * p.m_indv;
        let power = pc + pump_raw(m_chw, p.alpha()) + pump_raw(m_cw, p.gamma()) + fan_power(m_oa, p.lambda);
        grad.fill(0.0);
        grad[B + Q_CH] = w * dpc * da[0];
        grad[B + N_CH] = w * (dpc * da[1] + p.m_indv * pump_slope(m_chw, p.alpha()));
        grad[T_CWS] = w * dpc * da[2];
        grad[T_CHWS] = w * dpc * da[3];
        grad[B + M_CW] = w * pump_slope(m_cw, p.gamma());
        grad[B + M_OA] = w * 3.0 * p.lambda * m_oa * m_oa;

        let e_l = (l[B + Q_L] - row.q_l_ref) / 1000.0;
        let e_chws = l[B + STATE + T_CHWS] - p.t_chws_set;
        let e_cws = l[B + STATE + T_CWS] - p.t_cws_set;
        grad[B + Q_L] = 2.0 * p.r1 * e_l / 1000.0;
        grad[B + STATE + T_CHWS] = 2.0 * p.r2 * e_chws;
        grad[B + STATE + T_CWS] = 2.0 * p.r3 * e_cws;
        w * power + p.r1 * e_l * e_l + p.r2 * e_chws * e_chws + p.r3 * e_cws * e_cws
    }

    /// Residuals in physical units of step `k`, for diagnostics.
    pub fn step_residuals(&self, v: &[f64], k: usize) -> [f64; NE] {
        self.residuals_local(k, &self.local(v, k)).res
    }

    /// Step with the largest scaled residual, its equation name and value.
    pub fn worst_residual(&self, v: &[f64]) -> (usize, &'static str, f64) {
        let mut worst = (0, EQUATION_NAMES[0], 0.0);
        for k in 0..self.horizon() {
            for (e, r) in self.step_residuals(v, k).iter().enumerate() {
                if r.abs() > worst.2 {
                    worst = (k, EQUATION_NAMES[e], r.abs());
                }
            }
        }
        worst
    }

    /// Scaled variable vector from physical per-step trajectories; slacks
    /// are computed from the rest and everything is clamped into the box.
    pub fn pack(&self, inputs: &[(f64, f64, f64, f64, f64)], states: &[PlantState], flows: &[(f64, f64, f64)]) -> Vec<f64> {
        let p = self.params;
        let t = self.horizon();
        let mut v = vec![0.0; t * NV];
        let mut prev = self.x0;
        for k in 0..t {
            let (m_lw, m_tw, n, m_cw, m_oa) = inputs[k];
            let x = states[k];
            let (q_l, q_ch, q_ct) = flows[k];
            let m_sw = m_lw + m_tw;
            let row = &self.forecast[k];
            let q_ub = tower_capacity(m_cw, m_oa, prev.t_cwr, row.t_oawb, p);
            let phys = [
                m_lw,
                m_tw,
                n,
                m_cw,
                m_oa,
                x.t_lwr,
                x.s_twc,
                x.t_twc,
                x.t_tww,
                x.t_chws,
                x.t_cwr,
                x.t_cws,
                q_l,
                q_ch,
                q_ct,
                m_sw,
                n * p.m_indv - m_sw,
                n * p.q_ch_indv - q_ch,
                q_ub - q_ct,
                x.t_cws - tower_supply_floor(prev.t_cwr, row.t_oawb, p),
            ];
            for i in 0..NV {
                let g = k * NV + i;
                v[g] = (phys[i] / VAR_SCALE[i]).clamp(self.lower[g], self.upper[g]);
            }
            prev = x;
        }
        v
    }

    /// Physical value of block entry `i` at step `k`.
    pub fn value(v: &[f64], k: usize, i: usize) -> f64 {
        v[k * NV + i] * VAR_SCALE[i]
    }

    /// Relaxed or fixed chiller count at every step.
    pub fn chiller_trace(v: &[f64], t: usize) -> Vec<f64> {
        (0..t).map(|k| Self::value(v, k, N_CH)).collect()
    }

    pub fn state_at(&self, v: &[f64], k: usize) -> PlantState {
        let s = |i: usize| Self::value(v, k, STATE + i);
        PlantState::new(s(T_LWR), s(S_TWC), s(T_TWC), s(T_TWW), s(T_CHWS), s(T_CWR), s(T_CWS))
    }

    /// Command of step `k` with the count rounded to the nearest integer.
    pub fn input_at(&self, v: &[f64], k: usize) -> ControlInput {
        let n = Self::value(v, k, N_CH).round().clamp(0.0, self.params.n_ch_max as f64) as u32;
        ControlInput {
            m_lw: Self::value(v, k, M_LW),
            m_tw: Self::value(v, k, M_TW),
            n_ch: n,
            m_cw: Self::value(v, k, M_CW),
            m_oa: Self::value(v, k, M_OA),
        }
    }

    /// Plant outputs implied by the plan at step `k`, with exact (unsmoothed) power curves.
    pub fn outputs_at(&self, v: &[f64], k: usize) -> PlantOutputs {
        let p = self.params;
        let prev = if k == 0 { self.x0 } else { self.state_at(v, k - 1) };
        let n = Self::value(v, k, N_CH);
        let (q_l, q_ch, q_ct) = (Self::value(v, k, Q_L), Self::value(v, k, Q_CH), Self::value(v, k, Q_CT));
        let m_cw = Self::value(v, k, M_CW);
        let p_ch = plant_chiller_power(n, prev.t_cws, prev.t_chws, q_ch, p);
        let p_chw_pump = pump_raw(n * p.m_indv, p.alpha()).max(0.0);
        let p_cw_pump = pump_power(m_cw, p.gamma()).unwrap_or(0.0);
        let p_ct = fan_power(Self::value(v, k, M_OA), p.lambda);
        let p_tot = p_ch + p_chw_pump + p_cw_pump + p_ct;
        PlantOutputs {
            q_l,
            q_ch,
            q_ct,
            q_cond: q_ch + p.eta1 * p_ch,
            p_ch,
            p_chw_pump,
            p_cw_pump,
            p_ct,
            p_tot,
            c_e: electricity_cost(self.forecast[k].price, p_tot, p.t_s),
        }
    }
}

/// Pump curve without the floor (smooth for nonnegative flow).
fn pump_raw(m: f64, c: [f64; 4]) -> f64 {
    c[0] * (1.0 + c[1] * m).ln() + c[2] * m + c[3]
}

impl Nlp for HorizonNlp<'_> {
    fn dim(&self) -> usize {
        self.horizon() * NV
    }

    fn num_eq(&self) -> usize {
        self.horizon() * NE
    }

    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn objective(&self, v: &[f64], grad: &mut [f64]) -> f64 {
        grad.fill(0.0);
        let mut f = 0.0;
        let mut g = [0.0; NL];
        for k in 0..self.horizon() {
            let l = self.local(v, k);
            f += self.objective_local(k, &l, &mut g);
            for i in 0..NL {
                if g[i] != 0.0 {
                    if let Some(gi) = Self::global(k, i) {
                        grad[gi] += g[i] * Self::var_scale(i);
                    }
                }
            }
        }
        if self.terminal_value != 0.0 {
            let last = (self.horizon() - 1) * NV + STATE + S_TWC;
            f += self.terminal_value * (self.x0.s_twc - v[last] * VAR_SCALE[STATE + S_TWC]);
            grad[last] -= self.terminal_value * VAR_SCALE[STATE + S_TWC];
        }
        f
    }

    fn eq_residuals(&self, v: &[f64], out: &mut [f64]) {
        for k in 0..self.horizon() {
            let r = self.residuals_local(k, &self.local(v, k)).res;
            out[k * NE..(k + 1) * NE].copy_from_slice(&r);
        }
    }

    fn add_jacobian_transpose(&self, v: &[f64], y: &[f64], out: &mut [f64]) {
        for k in 0..self.horizon() {
            let loc = self.residuals_local(k, &self.local(v, k));
            for e in 0..NE {
                let ye = y[k * NE + e];
                if ye == 0.0 {
                    continue;
                }
                for i in 0..NL {
                    let d = loc.jac[e][i];
                    if d != 0.0 {
                        if let Some(gi) = Self::global(k, i) {
                            out[gi] += ye * d * Self::var_scale(i);
                        }
                    }
                }
            }
        }
    }
}
