//! Receding-horizon controller: relax, round, resolve.

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baseline::{baseline_step, BaselineConfig, BaselineState};
use crate::error::{Error, Result};
use crate::harness::scenario::backward_average;
use crate::harness::simulate::step_with_fallback;
use crate::harness::{Controller, Observation, ScenarioRow};
use crate::params::PlantParams;
use crate::plant::{plant_solver_config, ControlInput, Disturbance, PlantOutputs, PlantState};
use crate::solver::{solve_nlp, SolveReport, SolverConfig};

use super::filters::integer_schedule;
use super::horizon::{ChillerMode, HorizonNlp, Smoothing, N_CH, Q_CH, Q_CT, Q_L};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Planning horizon, steps.
    pub horizon: usize,
    /// Window shared by both rounding filters (even).
    pub window: usize,
    /// Steps between replans; stored plan inputs are applied in between.
    pub replan: usize,
    pub smoothing: Smoothing,
    /// Chiller efficiency used to price the cold left in the tank at the
    /// end of the horizon. Zero drops the terminal term.
    pub terminal_cop: f64,
    /// Relative standard deviation of multiplicative noise on forecast load
    /// and price. The default of zero gives perfect forecasts.
    pub forecast_noise: f64,
    pub noise_seed: u64,
    pub solver: SolverConfig,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 144,
            window: 12,
            replan: 1,
            smoothing: Smoothing::default(),
            terminal_cop: 5.0,
            forecast_noise: 0.0,
            noise_seed: 0,
            solver: SolverConfig { eq_tol: 1e-6, pg_tol: 1e-5, max_outer: 60, max_inner: 400, ..SolverConfig::default() },
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 2 || self.window % 2 != 0 {
            return Err(Error::Config(format!("mpc window must be even and at least 2, got {}", self.window)));
        }
        if self.horizon < self.window {
            return Err(Error::Config(format!("mpc horizon {} is shorter than the window {}", self.horizon, self.window)));
        }
        if self.replan == 0 || self.replan > self.horizon {
            return Err(Error::Config("replan interval must lie in 1..=horizon".into()));
        }
        let s = self.smoothing;
        if [s.flow, s.power, s.temperature].iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::Config("smoothing widths must be positive".into()));
        }
        if !(self.terminal_cop.is_finite() && self.terminal_cop >= 0.0) {
            return Err(Error::Config("terminal COP must be non-negative".into()));
        }
        if !(self.forecast_noise.is_finite() && (0.0..1.0).contains(&self.forecast_noise)) {
            return Err(Error::Config("forecast noise must lie in [0, 1)".into()));
        }
        self.solver.validate()
    }
}

/// One solved horizon.
#[derive(Debug, Clone)]
pub struct HorizonPlan {
    pub forecast: Vec<ScenarioRow>,
    pub relaxed_n: Vec<f64>,
    pub integer_n: Vec<u32>,
    pub inputs: Vec<ControlInput>,
    pub states: Vec<PlantState>,
    /// Outputs along the plan, with exact power curves.
    pub outputs: Vec<PlantOutputs>,
    pub relaxed_objective: f64,
    pub objective: f64,
    /// Equality residual of the integer resolve (scaled, infinity norm).
    pub residual: f64,
    pub relaxed_converged: bool,
    pub converged: bool,
    /// Some step misses its reference load by more than 1 %.
    pub shortfall: bool,
    /// Scaled decision vector of the integer resolve.
    pub solution: Vec<f64>,
}

impl HorizonPlan {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["step", "relaxed_n", "integer_n"];
        header.extend(ControlInput::FIELDS);
        header.extend(PlantState::FIELDS);
        header.extend(PlantOutputs::FIELDS);
        header.extend(["q_l_ref", "price"]);
        w.write_record(&header)?;
        for k in 0..self.inputs.len() {
            let mut r = vec![k.to_string(), self.relaxed_n[k].to_string(), self.integer_n[k].to_string()];
            r.extend(self.inputs[k].to_array().iter().map(f64::to_string));
            r.extend(self.states[k].to_array().iter().map(f64::to_string));
            r.extend(self.outputs[k].to_array().iter().map(f64::to_string));
            r.extend([self.forecast[k].q_l_ref.to_string(), self.forecast[k].price.to_string()]);
            w.write_record(&r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Largest planned shortfall against the reference load, kW.
    pub fn max_shortfall(&self) -> f64 {
        self.outputs.iter().zip(&self.forecast).map(|(o, r)| r.q_l_ref - o.q_l).fold(0.0, f64::max)
    }
}

/// Cost per unit of cold-fraction drawn down over the horizon: the
/// electricity needed to recharge it at `cop` and the mean forecast price.
pub fn terminal_value(x0: &PlantState, forecast: &[ScenarioRow], cop: f64, params: &PlantParams) -> f64 {
    if cop <= 0.0 || forecast.is_empty() {
        return 0.0;
    }
    let price = forecast.iter().map(|r| r.price).sum::<f64>() / forecast.len() as f64;
    let kj = params.m_tes * params.c_pw * (x0.t_tww - x0.t_twc).max(0.0);
    kj / cop / 3600.0 * price
}

/// Physical per-step trajectories used to seed a solve.
#[derive(Debug, Clone)]
pub struct HorizonSeed {
    inputs: Vec<(f64, f64, f64, f64, f64)>,
    states: Vec<PlantState>,
    flows: Vec<(f64, f64, f64)>,
}

impl HorizonSeed {
    fn from_solution(v: &[f64], nlp: &HorizonNlp) -> Self {
        let t = nlp.horizon();
        let val = HorizonNlp::value;
        Self {
            inputs: (0..t)
                .map(|k| {
                    let u = nlp.input_at(v, k);
                    (u.m_lw, u.m_tw, val(v, k, N_CH), u.m_cw, u.m_oa)
                })
                .collect(),
            states: (0..t).map(|k| nlp.state_at(v, k)).collect(),
            flows: (0..t).map(|k| (val(v, k, Q_L), val(v, k, Q_CH), val(v, k, Q_CT))).collect(),
        }
    }

    /// Rule-controller rollout over the forecast.
    pub fn from_baseline(
        x0: &PlantState,
        forecast: &[ScenarioRow],
        price_avg: &[f64],
        baseline: &BaselineConfig,
        params: &PlantParams,
    ) -> Result<Self> {
        if forecast.is_empty() || price_avg.len() != forecast.len() {
            return Err(Error::InvalidArgument("forecast and price average must be non-empty and of equal length".into()));
        }
        let solver = plant_solver_config();
        let mut state = BaselineState::cold_start(forecast[0].q_l_ref, params);
        let mut x = *x0;
        let mut seed = Self { inputs: vec![], states: vec![], flows: vec![] };
        for (row, avg) in forecast.iter().zip(price_avg) {
            let w = Disturbance { t_oawb: row.t_oawb, q_l_ref: row.q_l_ref };
            let u = baseline_step(&x, &w, row.price, *avg, &mut state, baseline, params)?;
            let (u, step, _) = step_with_fallback(&x, &u, &w, row.price, params, &solver)?;
            state.prev = u;
            x = step.state;
            seed.inputs.push((u.m_lw, u.m_tw, u.n_ch as f64, u.m_cw, u.m_oa));
            seed.states.push(x);
            seed.flows.push((step.outputs.q_l, step.outputs.q_ch, step.outputs.q_ct));
        }
        Ok(seed)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Drops the first `shift` steps and repeats the last one.
    fn shifted(mut self, shift: usize) -> Self {
        fn roll<T: Copy>(v: &mut Vec<T>, s: usize) {
            let last = *v.last().expect("non-empty seed");
            v.drain(..s.min(v.len()));
            v.resize(v.len() + s, last);
        }
        roll(&mut self.inputs, shift);
        roll(&mut self.states, shift);
        roll(&mut self.flows, shift);
        self
    }
}

/// Solution of the relaxed horizon problem.
#[derive(Debug, Clone)]
pub struct RelaxedSolution {
    /// Scaled decision vector.
    pub x: Vec<f64>,
    /// Continuous chiller count per step.
    pub n: Vec<f64>,
    pub objective: f64,
    pub residual: f64,
    pub converged: bool,
    pub terminal_value: f64,
}

/// Scaled residual above which a horizon solve is reported as failed.
const FAILED_RESIDUAL: f64 = 1e-3;

fn solve(stage: &str, nlp: &HorizonNlp, v0: &[f64], solver: &SolverConfig) -> Result<SolveReport> {
    let r = solve_nlp(nlp, v0, solver)?;
    let (k, name, value) = nlp.worst_residual(&r.x);
    if r.residual > FAILED_RESIDUAL {
        return Err(Error::SolveFailed(format!(
            "{stage} horizon solve ended at residual {:.2e}; worst is {name} at step {k} ({value:.2e})",
            r.residual
        )));
    }
    if r.converged {
        log::debug!("{stage} solve: objective {:.4} in {} iterations", r.objective, r.iterations);
    } else {
        log::debug!(
            "{stage} solve stopped after {} iterations: residual {:.2e} ({name} at step {k}), projected gradient {:.2e}",
            r.iterations,
            r.residual,
            r.projected_gradient
        );
    }
    Ok(r)
}

/// Minimizes the horizon objective with the chiller count continuous in `[0, n_max]`.
pub fn solve_relaxed_horizon(
    x0: &PlantState,
    forecast: &[ScenarioRow],
    seed: &HorizonSeed,
    cfg: &MpcConfig,
    params: &PlantParams,
) -> Result<RelaxedSolution> {
    if seed.len() != forecast.len() {
        return Err(Error::InvalidArgument(format!("seed holds {} steps, forecast {}", seed.len(), forecast.len())));
    }
    let vt = terminal_value(x0, forecast, cfg.terminal_cop, params);
    let nlp = HorizonNlp::new(*x0, forecast, params, cfg.smoothing, vt, ChillerMode::Relaxed)?;
    let v0 = nlp.pack(&seed.inputs, &seed.states, &seed.flows);
    let r = solve("relaxed", &nlp, &v0, &cfg.solver)?;
    Ok(RelaxedSolution {
        n: HorizonNlp::chiller_trace(&r.x, forecast.len()),
        x: r.x,
        objective: r.objective,
        residual: r.residual,
        converged: r.converged,
        terminal_value: vt,
    })
}

/// Solves the horizon again with the chiller count pinned to `n_d`, starting
/// from the relaxed solution.
pub fn resolve_fixed_integers(
    x0: &PlantState,
    forecast: &[ScenarioRow],
    relaxed: &RelaxedSolution,
    n_d: &[u32],
    cfg: &MpcConfig,
    params: &PlantParams,
) -> Result<HorizonPlan> {
    let t = forecast.len();
    let vt = relaxed.terminal_value;
    let fixed = HorizonNlp::new(*x0, forecast, params, cfg.smoothing, vt, ChillerMode::Fixed(n_d.to_vec()))?;
    let relaxed_nlp = HorizonNlp::new(*x0, forecast, params, cfg.smoothing, vt, ChillerMode::Relaxed)?;
    let mut s = HorizonSeed::from_solution(&relaxed.x, &relaxed_nlp);
    for (u, n) in s.inputs.iter_mut().zip(n_d) {
        u.2 = *n as f64;
    }
    let v1 = fixed.pack(&s.inputs, &s.states, &s.flows);
    let r = solve("integer", &fixed, &v1, &cfg.solver)?;
    let outputs: Vec<PlantOutputs> = (0..t).map(|k| fixed.outputs_at(&r.x, k)).collect();
    let shortfall = outputs.iter().zip(forecast).any(|(o, row)| row.q_l_ref - o.q_l > SHORTFALL_TOL * row.q_l_ref.max(1.0));
    Ok(HorizonPlan {
        forecast: forecast.to_vec(),
        inputs: (0..t).map(|k| fixed.input_at(&r.x, k)).collect(),
        states: (0..t).map(|k| fixed.state_at(&r.x, k)).collect(),
        outputs,
        relaxed_n: relaxed.n.clone(),
        integer_n: n_d.to_vec(),
        relaxed_objective: relaxed.objective,
        objective: r.objective,
        residual: r.residual,
        relaxed_converged: relaxed.converged,
        converged: r.converged,
        shortfall,
        solution: r.x,
    })
}

/// Relative load shortfall that flags a plan.
const SHORTFALL_TOL: f64 = 1e-2;

/// Relaxed solve, integer rounding and fixed-count resolve over one horizon.
pub fn solve_horizon(
    x0: &PlantState,
    forecast: &[ScenarioRow],
    seed: &HorizonSeed,
    cfg: &MpcConfig,
    params: &PlantParams,
) -> Result<(HorizonPlan, RelaxedSolution)> {
    let relaxed = solve_relaxed_horizon(x0, forecast, seed, cfg, params)?;
    let integer_n = integer_schedule(&relaxed.n, cfg.window, params.n_ch_max)?;
    let plan = resolve_fixed_integers(x0, forecast, &relaxed, &integer_n, cfg, params)?;
    Ok((plan, relaxed))
}

/// Plans one horizon from `x0`, seeded by the rule controller.
pub fn plan_horizon(
    x0: &PlantState,
    forecast: &[ScenarioRow],
    price_avg: &[f64],
    cfg: &MpcConfig,
    baseline: &BaselineConfig,
    params: &PlantParams,
) -> Result<HorizonPlan> {
    cfg.validate()?;
    if forecast.len() != cfg.horizon || price_avg.len() != cfg.horizon {
        return Err(Error::InvalidArgument(format!("forecast must hold {} rows", cfg.horizon)));
    }
    let seed = HorizonSeed::from_baseline(x0, forecast, price_avg, baseline, params)?;
    Ok(solve_horizon(x0, forecast, &seed, cfg, params)?.0)
}

pub struct MpcController {
    pub config: MpcConfig,
    pub baseline: BaselineConfig,
    pub params: PlantParams,
    plan: Option<HorizonPlan>,
    seed: Option<HorizonSeed>,
    /// Steps since the stored plan was made.
    age: usize,
    fallback: Option<BaselineState>,
    /// Every plan made so far, if requested.
    pub history: Option<Vec<HorizonPlan>>,
}

impl MpcController {
    pub fn new(config: MpcConfig, baseline: BaselineConfig, params: PlantParams) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, baseline, params, plan: None, seed: None, age: 0, fallback: None, history: None })
    }

    pub fn keep_history(mut self) -> Self {
        self.history = Some(Vec::new());
        self
    }

    pub fn last_plan(&self) -> Option<&HorizonPlan> {
        self.plan.as_ref()
    }

    fn replan(&mut self, obs: &Observation) -> Result<()> {
        let t = self.config.horizon;
        let mut forecast = obs.scenario.forecast(obs.k, t);
        if self.config.forecast_noise > 0.0 {
            perturb(&mut forecast, self.config.forecast_noise, self.config.noise_seed.wrapping_add(obs.k as u64));
        }
        let price_avg = forecast_price_average(obs, &forecast);
        let seed = match self.seed.take() {
            Some(s) => s.shifted(self.age),
            None => HorizonSeed::from_baseline(obs.state, &forecast, &price_avg, &self.baseline, &self.params)?,
        };
        let (plan, relaxed) = solve_horizon(obs.state, &forecast, &seed, &self.config, &self.params)?;
        if plan.shortfall {
            log::info!("step {}: plan falls short of the load by up to {:.1} kW", obs.k, plan.max_shortfall());
        }
        // the relaxed solution seeds the next relaxed solve
        let relaxed_nlp = HorizonNlp::new(*obs.state, &forecast, &self.params, self.config.smoothing, 0.0, ChillerMode::Relaxed)?;
        let next_seed = HorizonSeed::from_solution(&relaxed.x, &relaxed_nlp);
        if let Some(h) = self.history.as_mut() {
            h.push(plan.clone());
        }
        self.plan = Some(plan);
        self.seed = Some(next_seed);
        self.age = 0;
        Ok(())
    }
}

/// Multiplies load and price of every row but the current one by `1 + sd * N(0, 1)`, floored at 10 %.
fn perturb(forecast: &mut [ScenarioRow], sd: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for row in forecast.iter_mut().skip(1) {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        row.q_l_ref = (row.q_l_ref * (1.0 + sd * a)).max(0.1 * row.q_l_ref);
        row.price = (row.price * (1.0 + sd * b)).max(0.1 * row.price);
    }
}

/// Backward price average along the forecast, continuing the observed history.
fn forecast_price_average(obs: &Observation, forecast: &[ScenarioRow]) -> Vec<f64> {
    let tau = obs.scenario.tau.max(1);
    let start = obs.k.saturating_sub(tau - 1);
    let mut prices: Vec<f64> = obs.scenario.rows[start..obs.k].iter().map(|r| r.price).collect();
    let head = prices.len();
    prices.extend(forecast.iter().map(|r| r.price));
    let mut avg = backward_average(&prices, tau);
    avg.drain(..head);
    avg
}

impl Controller for MpcController {
    fn name(&self) -> &str {
        "mpc"
    }

    fn command(&mut self, obs: &Observation) -> Result<ControlInput> {
        if self.plan.is_none() || self.age >= self.config.replan {
            let t = Instant::now();
            if let Err(e) = self.replan(obs) {
                // keep the plant running on the rule controller until a plan succeeds
                log::warn!("step {}: planning failed ({e}); using the rule controller", obs.k);
                self.plan = None;
                self.seed = None;
                let params = &self.params;
                let state =
                    self.fallback.get_or_insert_with(|| BaselineState::cold_start(obs.disturbance.q_l_ref, params));
                let u = baseline_step(obs.state, &obs.disturbance, obs.price, obs.price_avg, state, &self.baseline, params)?;
                return Ok(u);
            }
            log::debug!("step {}: planned in {:.2} s", obs.k, t.elapsed().as_secs_f64());
        }
        let plan = self.plan.as_ref().expect("plan present after replan");
        let u = plan.inputs[self.age.min(plan.inputs.len() - 1)];
        self.age += 1;
        if let Some(f) = self.fallback.as_mut() {
            f.prev = u;
        }
        Ok(u)
    }
}
