//! Controller-agnostic closed-loop simulation.

use std::path::Path;
use std::time::Instant;

use crate::baseline::{baseline_step, BaselineConfig, BaselineState};
use crate::error::{Error, Result};
use crate::params::PlantParams;
use crate::plant::{plant_step, repair_command, ControlInput, Disturbance, PlantOutputs, PlantState, PlantStep};
use crate::solver::SolverConfig;

use super::metrics::{e_rmse, mean_std, n_switch};
use super::scenario::Scenario;

/// What a controller sees at step `k`.
pub struct Observation<'a> {
    pub k: usize,
    pub state: &'a PlantState,
    pub disturbance: Disturbance,
    pub price: f64,
    pub price_avg: f64,
    /// Full scenario, for controllers that use forecasts.
    pub scenario: &'a Scenario,
}

pub trait Controller {
    fn name(&self) -> &str;
    fn command(&mut self, obs: &Observation) -> Result<ControlInput>;
    /// The command the plant actually ran, after clamping or repair.
    fn applied(&mut self, _u: &ControlInput) {}
}

/// Rule-based controller wrapped for the harness.
pub struct BaselineController {
    pub config: BaselineConfig,
    pub params: PlantParams,
    state: Option<BaselineState>,
}

impl BaselineController {
    pub fn new(config: BaselineConfig, params: PlantParams) -> Self {
        Self { config, params, state: None }
    }
}

impl Controller for BaselineController {
    fn name(&self) -> &str {
        "baseline"
    }

    fn command(&mut self, obs: &Observation) -> Result<ControlInput> {
        let params = &self.params;
        let state = self.state.get_or_insert_with(|| BaselineState::cold_start(obs.disturbance.q_l_ref, params));
        baseline_step(obs.state, &obs.disturbance, obs.price, obs.price_avg, state, &self.config, params)
    }

    fn applied(&mut self, u: &ControlInput) {
        if let Some(state) = self.state.as_mut() {
            state.prev = *u;
        }
    }
}

/// Steps the plant, falling back to the nearest admissible command when the
/// requested one leaves the projection set empty. The flag says whether the
/// fallback was used.
pub fn step_with_fallback(
    x: &PlantState,
    u: &ControlInput,
    w: &Disturbance,
    price: f64,
    params: &PlantParams,
    solver: &SolverConfig,
) -> Result<(ControlInput, PlantStep, bool)> {
    let u = u.clamped(params);
    match plant_step(x, &u, w, price, params, solver) {
        Ok(step) => Ok((u, step, false)),
        Err(Error::Infeasible(reason)) => {
            let repaired = repair_command(x, w, &u, params)
                .ok_or_else(|| Error::Infeasible(format!("no admissible command at this state ({reason})")))?;
            log::debug!("command {u:?} infeasible ({reason}); using {repaired:?}");
            let step = plant_step(x, &repaired, w, price, params, solver)?;
            Ok((repaired, step, true))
        }
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub timestamp: f64,
    /// State reached at the end of the step.
    pub state: PlantState,
    pub outputs: PlantOutputs,
    pub input: ControlInput,
    pub t_oawb: f64,
    pub q_l_ref: f64,
    pub price: f64,
    pub price_avg: f64,
    pub control_seconds: f64,
    pub repaired: bool,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub controller: String,
    pub total_cost: f64,
    pub e_rmse: f64,
    pub n_switch: usize,
    pub time_mean: f64,
    pub time_std: f64,
    /// Steps whose command had to be moved onto the admissible set.
    pub repairs: usize,
    pub mean_load: f64,
    pub initial_state: PlantState,
    pub rows: Vec<TrajectoryRow>,
}

impl RunReport {
    pub fn from_rows(controller: &str, initial_state: PlantState, rows: Vec<TrajectoryRow>) -> Self {
        let q_l: Vec<f64> = rows.iter().map(|r| r.outputs.q_l).collect();
        let q_ref: Vec<f64> = rows.iter().map(|r| r.q_l_ref).collect();
        let n_ch: Vec<u32> = rows.iter().map(|r| r.input.n_ch).collect();
        let times: Vec<f64> = rows.iter().map(|r| r.control_seconds).collect();
        let (time_mean, time_std) = mean_std(&times);
        Self {
            controller: controller.to_string(),
            total_cost: rows.iter().map(|r| r.outputs.c_e).sum(),
            e_rmse: e_rmse(&q_l, &q_ref),
            n_switch: n_switch(&n_ch),
            time_mean,
            time_std,
            repairs: rows.iter().filter(|r| r.repaired).count(),
            mean_load: q_ref.iter().sum::<f64>() / q_ref.len().max(1) as f64,
            initial_state,
            rows,
        }
    }

    pub fn write_trajectory_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(TrajectoryRow::header())?;
        for r in &self.rows {
            w.write_record(r.record())?;
        }
        w.flush()?;
        Ok(())
    }
}

const TRAILER: [&str; 6] = ["t_oawb", "q_l_ref", "price", "price_avg", "control_seconds", "repaired"];

impl TrajectoryRow {
    /// CSV column names, in record order.
    pub fn header() -> Vec<&'static str> {
        let mut h = vec!["step", "timestamp"];
        h.extend(PlantState::FIELDS);
        h.extend(PlantOutputs::FIELDS);
        h.extend(ControlInput::FIELDS);
        h.extend(TRAILER);
        h
    }

    pub fn record(&self) -> Vec<String> {
        let mut r = vec![self.step.to_string(), self.timestamp.to_string()];
        r.extend(self.state.to_array().iter().map(f64::to_string));
        r.extend(self.outputs.to_array().iter().map(f64::to_string));
        r.extend(self.input.to_array().iter().map(f64::to_string));
        r.extend([self.t_oawb, self.q_l_ref, self.price, self.price_avg, self.control_seconds].iter().map(f64::to_string));
        r.push(self.repaired.to_string());
        r
    }

    fn from_record(rec: &csv::StringRecord, line: usize) -> Result<Self> {
        let bad = |what: &str| Error::InvalidArgument(format!("trajectory line {line}: bad {what}"));
        if rec.len() != Self::header().len() {
            return Err(bad("column count"));
        }
        let num = |i: usize| -> Result<f64> { rec[i].trim().parse::<f64>().map_err(|_| bad(Self::header()[i])) };
        let mut i = 2;
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let v = (i..i + n).map(num).collect::<Result<Vec<_>>>()?;
            i += n;
            Ok(v)
        };
        let s = take(PlantState::DIM)?;
        let o = take(PlantOutputs::FIELDS.len())?;
        let u = take(ControlInput::FIELDS.len())?;
        let t = take(5)?;
        let mut state = [0.0; 8];
        state.copy_from_slice(&s);
        let outputs = PlantOutputs {
            q_l: o[0],
            q_ch: o[1],
            q_ct: o[2],
            q_cond: o[3],
            p_ch: o[4],
            p_chw_pump: o[5],
            p_cw_pump: o[6],
            p_ct: o[7],
            p_tot: o[8],
            c_e: o[9],
        };
        if u[2] < 0.0 || u[2].fract() != 0.0 {
            return Err(bad("n_ch"));
        }
        Ok(Self {
            step: rec[0].trim().parse().map_err(|_| bad("step"))?,
            timestamp: num(1)?,
            state: PlantState::from_array(state),
            outputs,
            input: ControlInput { m_lw: u[0], m_tw: u[1], n_ch: u[2] as u32, m_cw: u[3], m_oa: u[4] },
            t_oawb: t[0],
            q_l_ref: t[1],
            price: t[2],
            price_avg: t[3],
            control_seconds: t[4],
            repaired: rec[rec.len() - 1].trim().parse().map_err(|_| bad("repaired"))?,
        })
    }
}

/// Reads a trajectory written by [`RunReport::write_trajectory_csv`].
pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TrajectoryRow::header() {
        return Err(Error::InvalidArgument("trajectory header does not match the expected columns".into()));
    }
    r.records().enumerate().map(|(i, rec)| TrajectoryRow::from_record(&rec?, i + 2)).collect()
}

/// Runs `controller` over every row of `scenario` starting from `x0`.
pub fn simulate(
    controller: &mut dyn Controller,
    scenario: &Scenario,
    x0: PlantState,
    params: &PlantParams,
    solver: &SolverConfig,
) -> Result<RunReport> {
    x0.validate(params)?;
    let avg = scenario.price_average();
    let mut x = x0;
    let mut rows = Vec::with_capacity(scenario.len());
    for k in 0..scenario.len() {
        let r = scenario.rows[k];
        let w = scenario.disturbance(k);
        let obs = Observation { k, state: &x, disturbance: w, price: r.price, price_avg: avg[k], scenario };
        let start = Instant::now();
        let u = controller.command(&obs)?;
        let control_seconds = start.elapsed().as_secs_f64();
        let (u, step, repaired) = step_with_fallback(&x, &u, &w, r.price, params, solver)
            .map_err(|e| Error::InvalidArgument(format!("{} failed at step {k}: {e}", controller.name())))?;
        controller.applied(&u);
        x = step.state;
        rows.push(TrajectoryRow {
            step: k,
            timestamp: r.timestamp,
            state: step.state,
            outputs: step.outputs,
            input: u,
            t_oawb: r.t_oawb,
            q_l_ref: r.q_l_ref,
            price: r.price,
            price_avg: avg[k],
            control_seconds,
            repaired,
        });
    }
    Ok(RunReport::from_rows(controller.name(), x0, rows))
}
