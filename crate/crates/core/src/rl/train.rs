//! Batch off-policy least-squares policy iteration.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::{baseline_step, BaselineConfig, BaselineState};
use crate::error::{Error, Result};
use crate::harness::scenario::backward_average;
use crate::harness::{simulate, Controller, Observation, Scenario, ScenarioRow};
use crate::params::PlantParams;
use crate::plant::{admissible_envelopes, ControlInput, Disturbance, PlantState};
use crate::solver::{solve_psd_lsq, PsdConfig, PsdLsqProblem, PsdSolution, SolverConfig};
use crate::harness::simulate::step_with_fallback;

use super::basis::BasisSpec;
use super::greedy::{greedy_action, greedy_solver_config};
use super::state::{stage_cost, RlState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Discount factor.
    pub gamma: f64,
    /// Weight of the squared load shortfall (MW²) in the stage cost.
    pub kappa: f64,
    /// Proximal weight at iteration `j` is `j / beta`.
    pub beta: f64,
    /// Rollout length in steps.
    pub t_sim: usize,
    /// Number of policy iterations.
    pub n_pol: usize,
    /// Probabilities of (greedy policy, random admissible command, baseline)
    /// up to and including iteration `explore_switch`.
    pub explore_early: [f64; 3],
    /// The same probabilities after `explore_switch`.
    pub explore_late: [f64; 3],
    pub explore_switch: usize,
    /// Diagonal entries of the initial parameter vector.
    pub theta0_diagonal: f64,
    /// Weigh the proximal term against the root-mean-square TD residual
    /// rather than the residual norm, so its pull does not fade as rollouts
    /// get longer.
    pub rms_residual: bool,
    pub seed: u64,
    pub psd: PsdConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            gamma: 0.97,
            kappa: 500.0,
            beta: 100.0,
            t_sim: 432,
            n_pol: 50,
            explore_early: [0.0, 0.1, 0.9],
            explore_late: [0.5, 0.25, 0.25],
            explore_switch: 5,
            theta0_diagonal: 1e-3,
            rms_residual: true,
            seed: 0,
            psd: PsdConfig::default(),
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.kappa > 0.0 && self.beta > 0.0) {
            return Err(Error::Config("kappa and beta must be positive".into()));
        }
        if self.t_sim == 0 {
            return Err(Error::Config("rollout length must be positive".into()));
        }
        for pmf in [self.explore_early, self.explore_late] {
            if pmf.iter().any(|p| !(*p >= 0.0)) || (pmf.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("exploration probabilities {pmf:?} must be nonnegative and sum to 1")));
            }
        }
        Ok(())
    }

    pub fn exploration(&self, j: usize) -> [f64; 3] {
        if j <= self.explore_switch {
            self.explore_early
        } else {
            self.explore_late
        }
    }
}

/// Diagonal-only starting point; PSD by construction.
pub fn initial_theta(spec: &BasisSpec, diagonal: f64) -> DVector<f64> {
    DVector::from_iterator(spec.len(), spec.entries.iter().map(|&(i, j)| if i == j { diagonal } else { 0.0 }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub x: RlState,
    pub u: ControlInput,
    pub cost: f64,
    pub next: RlState,
}

/// Temporal-difference error `c + gamma Q(x', u') - Q(x, u)`.
pub fn td_residual(spec: &BasisSpec, theta: &DVector<f64>, t: &Transition, u_next: &ControlInput, gamma: f64) -> f64 {
    t.cost + gamma * spec.q_value(theta, &t.next, u_next) - spec.q_value(theta, &t.x, &t.u)
}

/// Row `a` with `a . theta - cost = -td_residual`.
pub fn td_row(spec: &BasisSpec, t: &Transition, u_next: &ControlInput, gamma: f64) -> DVector<f64> {
    spec.features(&t.x, &t.u) - gamma * spec.features(&t.next, u_next)
}

/// Parameters minimizing the TD residual norm of the batch under the policy
/// that picks `next_actions`, plus `alpha` times the distance to `anchor`,
/// subject to a PSD parameter matrix.
pub fn policy_evaluation(
    spec: &BasisSpec,
    batch: &[Transition],
    next_actions: &[ControlInput],
    anchor: &DVector<f64>,
    alpha: f64,
    gamma: f64,
    cfg: &PsdConfig,
) -> Result<PsdSolution> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("policy evaluation needs at least one transition".into()));
    }
    if next_actions.len() != batch.len() {
        return Err(Error::InvalidArgument("one successor action per transition is required".into()));
    }
    let d = spec.len();
    let mut a = DMatrix::zeros(batch.len(), d);
    let mut b = DVector::zeros(batch.len());
    for (k, (t, u)) in batch.iter().zip(next_actions).enumerate() {
        a.set_row(k, &td_row(spec, t, u, gamma).transpose());
        b[k] = t.cost;
    }
    let problem = PsdLsqProblem { a, b, anchor: anchor.clone(), alpha, embedding: spec.embedding()? };
    solve_psd_lsq(&problem, cfg)
}

/// Where a rollout command came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ActionSource {
    Policy,
    Random,
    Baseline,
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub transitions: Vec<Transition>,
    pub sources: Vec<ActionSource>,
    /// Summed stage cost of the kept transitions.
    pub cost: f64,
    /// Steps whose plant update failed and whose transition was dropped.
    pub discarded: usize,
}

/// Scenario rows `0..=t_sim` (wrapping past the end) with their price averages.
fn rollout_rows(scenario: &Scenario, t_sim: usize) -> (Vec<ScenarioRow>, Vec<f64>) {
    let rows = scenario.forecast(0, t_sim + 1);
    let prices: Vec<f64> = rows.iter().map(|r| r.price).collect();
    let avg = backward_average(&prices, scenario.tau);
    (rows, avg)
}

fn rl_state(x: PlantState, row: &ScenarioRow, avg: f64) -> RlState {
    RlState::new(x, &Disturbance { t_oawb: row.t_oawb, q_l_ref: row.q_l_ref }, row.price, avg)
}

/// Everything a rollout needs besides the exploration mix.
pub struct RolloutEnv<'a> {
    pub scenario: &'a Scenario,
    pub x0: PlantState,
    pub params: &'a PlantParams,
    pub plant_solver: &'a SolverConfig,
    pub baseline: &'a BaselineConfig,
    pub kappa: f64,
    pub t_sim: usize,
}

/// Runs `t_sim` steps, drawing each command from the greedy policy of `theta`,
/// a uniformly random admissible command, or the baseline, with probabilities
/// `pmf`. The baseline always remembers the command actually applied.
pub fn rollout(
    env: &RolloutEnv,
    spec: &BasisSpec,
    theta: &DVector<f64>,
    pmf: [f64; 3],
    rng: &mut ChaCha8Rng,
) -> Result<Rollout> {
    let (rows, avg) = rollout_rows(env.scenario, env.t_sim);
    let params = env.params;
    let greedy_cfg = greedy_solver_config();
    let mut baseline = BaselineState::cold_start(rows[0].q_l_ref, params);
    let mut x = env.x0;
    let mut out = Rollout { transitions: Vec::with_capacity(env.t_sim), sources: Vec::new(), cost: 0.0, discarded: 0 };
    for k in 0..env.t_sim {
        let s = rl_state(x, &rows[k], avg[k]);
        let w = s.disturbance();
        let draw: f64 = rng.random();
        let mut source = if draw < pmf[0] {
            ActionSource::Policy
        } else if draw < pmf[0] + pmf[1] {
            ActionSource::Random
        } else {
            ActionSource::Baseline
        };
        let mut u = None;
        if source == ActionSource::Policy {
            match greedy_action(spec, theta, &s, params, &greedy_cfg) {
                Ok(c) => u = Some(c.input),
                Err(e) => {
                    log::warn!("greedy action failed at step {k}: {e}; using the baseline");
                    source = ActionSource::Baseline;
                }
            }
        }
        if source == ActionSource::Random {
            let envs = admissible_envelopes(&x, &w, params);
            if envs.is_empty() {
                source = ActionSource::Baseline;
            } else {
                let e = &envs[rng.random_range(0..envs.len())];
                u = Some(e.sample(rng));
            }
        }
        let u = match u {
            Some(u) => u,
            None => baseline_step(&x, &w, s.price, s.price_avg, &mut baseline, env.baseline, params)?,
        };
        match step_with_fallback(&x, &u, &w, s.price, params, env.plant_solver) {
            Ok((applied, step, _)) => {
                baseline.prev = applied;
                let cost = stage_cost(&step.outputs, w.q_l_ref, env.kappa);
                let next = rl_state(step.state, &rows[k + 1], avg[k + 1]);
                out.cost += cost;
                out.transitions.push(Transition { x: s, u: applied, cost, next });
                out.sources.push(source);
                x = step.state;
            }
            Err(e) => {
                log::warn!("plant update failed at rollout step {k}: {e}; transition dropped");
                out.discarded += 1;
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLogRow {
    pub iteration: usize,
    /// Distance to the previous iterate; zero for the initial one.
    pub step_norm: f64,
    /// Summed stage cost of the rollout that produced this iterate's data.
    pub rollout_cost: f64,
    pub transitions: usize,
    pub discarded: usize,
    pub policy_actions: usize,
    pub random_actions: usize,
    pub baseline_actions: usize,
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub spec: BasisSpec,
    /// `thetas[j]` is the iterate after `j` policy iterations.
    pub thetas: Vec<DVector<f64>>,
    pub log: Vec<TrainingLogRow>,
}

/// Policy iteration on `scenario`, with a fresh rollout per iteration.
pub fn train(env: &RolloutEnv, spec: &BasisSpec, cfg: &TrainingConfig) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let spec = spec.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let greedy_cfg = greedy_solver_config();
    let theta0 = initial_theta(&spec, cfg.theta0_diagonal);
    let mut log = vec![TrainingLogRow {
        iteration: 0,
        step_norm: 0.0,
        rollout_cost: f64::NAN,
        transitions: 0,
        discarded: 0,
        policy_actions: 0,
        random_actions: 0,
        baseline_actions: 0,
        min_eigenvalue: cfg.theta0_diagonal.min(0.0),
    }];
    let mut thetas = vec![theta0];
    for j in 0..cfg.n_pol {
        let theta = thetas[j].clone();
        let data = rollout(env, &spec, &theta, cfg.exploration(j), &mut rng)?;
        if data.transitions.is_empty() {
            return Err(Error::InvalidArgument(format!("rollout {j} produced no transitions")));
        }
        let next_actions = data
            .transitions
            .iter()
            .map(|t| greedy_action(&spec, &theta, &t.next, env.params, &greedy_cfg).map(|c| c.input))
            .collect::<Result<Vec<_>>>()?;
        let mut alpha = j as f64 / cfg.beta;
        if cfg.rms_residual {
            alpha *= (data.transitions.len() as f64).sqrt();
        }
        let sol = policy_evaluation(&spec, &data.transitions, &next_actions, &theta, alpha, cfg.gamma, &cfg.psd)?;
        let count = |s: ActionSource| data.sources.iter().filter(|x| **x == s).count();
        log.push(TrainingLogRow {
            iteration: j + 1,
            step_norm: (&sol.theta - &theta).norm(),
            rollout_cost: data.cost,
            transitions: data.transitions.len(),
            discarded: data.discarded,
            policy_actions: count(ActionSource::Policy),
            random_actions: count(ActionSource::Random),
            baseline_actions: count(ActionSource::Baseline),
            min_eigenvalue: sol.min_eigenvalue,
        });
        log::info!(
            "policy iteration {}: rollout cost {:.2}, |dtheta| {:.4e}",
            j + 1,
            data.cost,
            log.last().map_or(0.0, |r| r.step_norm)
        );
        thetas.push(sol.theta);
    }
    Ok(TrainingOutcome { spec, thetas, log })
}

/// Closed-loop controller acting greedily on a fixed parameter vector.
pub struct RlController {
    pub spec: BasisSpec,
    pub theta: DVector<f64>,
    pub params: PlantParams,
    pub solver: SolverConfig,
}

impl RlController {
    pub fn new(spec: BasisSpec, theta: DVector<f64>, params: PlantParams) -> Result<Self> {
        if theta.len() != spec.len() {
            return Err(Error::InvalidArgument(format!("theta has {} entries, basis has {}", theta.len(), spec.len())));
        }
        Ok(Self { spec, theta, params, solver: greedy_solver_config() })
    }
}

impl Controller for RlController {
    fn name(&self) -> &str {
        "rl"
    }

    fn command(&mut self, obs: &Observation) -> Result<ControlInput> {
        let s = RlState::new(*obs.state, &obs.disturbance, obs.price, obs.price_avg);
        Ok(greedy_action(&self.spec, &self.theta, &s, &self.params, &self.solver)?.input)
    }
}

/// Closed-loop stage cost of each candidate on `scenario`, and the index of
/// the cheapest (ties to the earliest). Candidates run on separate threads;
/// a candidate whose run fails scores infinity.
pub fn select_best_policy(
    spec: &BasisSpec,
    candidates: &[DVector<f64>],
    scenario: &Scenario,
    x0: PlantState,
    params: &PlantParams,
    plant_solver: &SolverConfig,
    kappa: f64,
) -> Result<(usize, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("no candidate policies".into()));
    }
    let costs: Vec<f64> = std::thread::scope(|s| {
        let handles: Vec<_> = candidates
            .iter()
            .map(|theta| {
                s.spawn(move || -> Result<f64> {
                    let mut c = RlController::new(spec.clone(), theta.clone(), params.clone())?;
                    let run = simulate(&mut c, scenario, x0, params, plant_solver)?;
                    Ok(run.rows.iter().map(|r| stage_cost(&r.outputs, r.q_l_ref, kappa)).sum())
                })
            })
            .collect();
        handles
            .into_iter()
            .enumerate()
            .map(|(j, h)| match h.join() {
                Ok(Ok(c)) => c,
                Ok(Err(e)) => {
                    log::warn!("candidate {j} failed in closed loop: {e}");
                    f64::INFINITY
                }
                Err(_) => f64::INFINITY,
            })
            .collect()
    });
    let mut best = 0;
    for (j, c) in costs.iter().enumerate() {
        if *c < costs[best] {
            best = j;
        }
    }
    Ok((best, costs))
}

#[derive(Serialize, Deserialize)]
struct ThetaRow {
    index: usize,
    value: f64,
}

pub fn save_theta(theta: &DVector<f64>, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (index, &value) in theta.iter().enumerate() {
        w.serialize(ThetaRow { index, value })?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_theta(path: impl AsRef<Path>) -> Result<DVector<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows: Vec<ThetaRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
    for (k, row) in rows.iter().enumerate() {
        if row.index != k || !row.value.is_finite() {
            return Err(Error::InvalidArgument(format!("theta row {k} is out of order or not finite")));
        }
    }
    Ok(DVector::from_iterator(rows.len(), rows.iter().map(|r| r.value)))
}

impl TrainingOutcome {
    pub fn theta_path(dir: impl AsRef<Path>, j: usize) -> PathBuf {
        dir.as_ref().join(format!("theta_{j:03}.csv"))
    }

    /// Writes `basis.toml`, one `theta_NNN.csv` per iterate and `training_log.csv`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.spec.save(dir.join("basis.toml"))?;
        for (j, theta) in self.thetas.iter().enumerate() {
            save_theta(theta, Self::theta_path(dir, j))?;
        }
        let mut w = csv::Writer::from_path(dir.join("training_log.csv"))?;
        for row in &self.log {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_switches_after_fifth_iteration() {
        let cfg = TrainingConfig::default();
        assert_eq!(cfg.exploration(5), [0.0, 0.1, 0.9]);
        assert_eq!(cfg.exploration(6), [0.5, 0.25, 0.25]);
        let bad = TrainingConfig { explore_late: [0.5, 0.5, 0.5], ..cfg };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn theta_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let theta = DVector::from_vec(vec![1.5, -0.25, 3e-9]);
        let path = dir.path().join("t.csv");
        save_theta(&theta, &path).unwrap();
        assert_eq!(load_theta(&path).unwrap(), theta);
    }
}
