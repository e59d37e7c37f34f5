//! Greedy action: minimize the learned Q over the admissible command set.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::params::PlantParams;
use crate::plant::{admissible_envelopes, ControlInput, Envelope};
use crate::solver::{solve_nlp, NlpProblem, SolverConfig};

use super::basis::{joint, BasisSpec, M_CW, M_LW, M_OA, M_TW};
use super::state::RlState;

/// Continuous inputs, in the order of the subproblem variables.
const CONTINUOUS: [usize; 4] = [M_LW, M_TW, M_CW, M_OA];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyChoice {
    pub input: ControlInput,
    pub q: f64,
}

/// Tolerances for the per-count quadratic subproblems.
pub fn greedy_solver_config() -> SolverConfig {
    SolverConfig { eq_tol: 1e-10, pg_tol: 1e-9, ..SolverConfig::default() }
}

/// Minimizes `Q` over one envelope. The four flows are optimized in
/// normalized coordinates; a slack keeps the chiller supply flow inside
/// `[0, msw_max]`. The result is repaired onto the envelope so that solver
/// tolerance never produces an inadmissible command.
pub fn minimize_on_envelope(
    spec: &BasisSpec,
    p: &DMatrix<f64>,
    theta: &DVector<f64>,
    x: &RlState,
    env: &Envelope,
    solver: &SolverConfig,
) -> Result<GreedyChoice> {
    let norm = &spec.normalization;
    let start = env.repair(&ControlInput {
        m_lw: 0.5 * (env.m_lw.0 + env.m_lw.1),
        m_tw: 0.5 * (env.m_tw.0 + env.m_tw.1),
        n_ch: env.n_ch,
        m_cw: 0.5 * (env.m_cw.0 + env.m_cw.1),
        m_oa: 0.5 * (env.m_oa.0 + env.m_oa.1),
    });
    let mut z_fixed = norm.apply(&joint(x, &start));
    for &i in &CONTINUOUS {
        z_fixed[i] = 0.0;
    }
    let pz = p * DVector::from_row_slice(&z_fixed);

    let mut h = vec![vec![0.0; 5]; 5];
    let mut g = vec![0.0; 5];
    for (a, &i) in CONTINUOUS.iter().enumerate() {
        g[a] = 2.0 * pz[i];
        for (b, &j) in CONTINUOUS.iter().enumerate() {
            h[a][b] = 2.0 * p[(i, j)];
        }
    }
    let to_z = |i: usize, v: f64| (v - norm.center[i]) / norm.scale[i];
    let bounds = [env.m_lw, env.m_tw, env.m_cw, env.m_oa];
    let s_ref = norm.scale[M_LW].max(norm.scale[M_TW]);
    let mut lower = Vec::with_capacity(5);
    let mut upper = Vec::with_capacity(5);
    for (&i, &(lo, hi)) in CONTINUOUS.iter().zip(&bounds) {
        lower.push(to_z(i, lo));
        upper.push(to_z(i, hi));
    }
    let sigma_hi = if env.n_ch == 0 { 0.0 } else { env.msw_max / s_ref };
    lower.push(0.0);
    upper.push(sigma_hi);
    // m_lw + m_tw - sigma = 0 in physical units, divided by s_ref
    let a = vec![vec![norm.scale[M_LW] / s_ref, norm.scale[M_TW] / s_ref, 0.0, 0.0, -1.0]];
    let b = vec![-(norm.center[M_LW] + norm.center[M_TW]) / s_ref];

    let x0 = [
        to_z(M_LW, start.m_lw),
        to_z(M_TW, start.m_tw),
        to_z(M_CW, start.m_cw),
        to_z(M_OA, start.m_oa),
        (start.m_sw() / s_ref).clamp(0.0, sigma_hi),
    ];
    let problem = NlpProblem::quadratic(h, g, a, b, lower, upper);
    let report = solve_nlp(&problem, &x0, solver)?;
    if !report.converged {
        log::debug!("greedy subproblem n_ch={} stopped at residual {:.2e}", env.n_ch, report.residual);
    }
    let y = &report.x;
    let from_z = |i: usize, v: f64| norm.center[i] + norm.scale[i] * v;
    let raw = ControlInput {
        m_lw: from_z(M_LW, y[0]),
        m_tw: from_z(M_TW, y[1]),
        n_ch: env.n_ch,
        m_cw: from_z(M_CW, y[2]),
        m_oa: from_z(M_OA, y[3]),
    };
    let input = env.repair(&raw);
    let q = spec.q_value(theta, x, &input);
    if !q.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite Q for chiller count {}", env.n_ch)));
    }
    Ok(GreedyChoice { input, q })
}

/// Least-`Q` admissible command. Every feasible chiller count is solved and
/// the best kept; ties go to fewer chillers. Counts whose subproblem fails are
/// skipped, and the call errors only if all of them fail.
pub fn greedy_action(
    spec: &BasisSpec,
    theta: &DVector<f64>,
    x: &RlState,
    params: &PlantParams,
    solver: &SolverConfig,
) -> Result<GreedyChoice> {
    if theta.len() != spec.len() || theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument(format!("theta must hold {} finite values", spec.len())));
    }
    let p = spec.embedding()?.matrix(theta.as_slice());
    let envs = admissible_envelopes(&x.plant, &x.disturbance(), params);
    if envs.is_empty() {
        return Err(Error::Infeasible("no chiller count admits a feasible command".into()));
    }
    let mut best: Option<GreedyChoice> = None;
    let mut last_err = None;
    for env in &envs {
        match minimize_on_envelope(spec, &p, theta, x, env, solver) {
            Ok(c) => {
                if best.is_none_or(|b| c.q < b.q) {
                    best = Some(c);
                }
            }
            Err(e) => {
                log::debug!("greedy subproblem n_ch={} failed: {e}", env.n_ch);
                last_err = Some(e);
            }
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Defect("no greedy candidate".into())))
}

/// Exhaustive search over a `points^4` grid on each envelope, skipping grid
/// points that break the supply-flow coupling. Used as a test oracle.
pub fn grid_search(spec: &BasisSpec, theta: &DVector<f64>, x: &RlState, params: &PlantParams, points: usize) -> Option<GreedyChoice> {
    let axis = |(lo, hi): (f64, f64)| -> Vec<f64> {
        if points < 2 {
            return vec![0.5 * (lo + hi)];
        }
        (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect()
    };
    let mut best: Option<GreedyChoice> = None;
    for env in admissible_envelopes(&x.plant, &x.disturbance(), params) {
        let (lw, tw, cw, oa) = (axis(env.m_lw), axis(env.m_tw), axis(env.m_cw), axis(env.m_oa));
        for &m_lw in &lw {
            for &m_tw in &tw {
                let u0 = ControlInput { m_lw, m_tw, n_ch: env.n_ch, m_cw: 0.0, m_oa: 0.0 };
                let sw = u0.m_sw();
                if sw < -1e-9 || sw > env.msw_max + 1e-9 || (env.n_ch == 0 && sw.abs() > 1e-9) {
                    continue;
                }
                for &m_cw in &cw {
                    for &m_oa in &oa {
                        let u = ControlInput { m_cw, m_oa, ..u0 };
                        let q = spec.q_value(theta, x, &u);
                        if best.is_none_or(|b| q < b.q) {
                            best = Some(GreedyChoice { input: u, q });
                        }
                    }
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{Disturbance, PlantState};
    use crate::rl::basis::{JOINT_DIM, N_CH};

    fn rl_state(params: &PlantParams) -> RlState {
        let w = Disturbance { t_oawb: 25.5, q_l_ref: 1313.0 };
        RlState::new(PlantState::nominal(params), &w, 0.08, 0.08)
    }

    /// Theta for `sum_i (z_i - target_i)^2` over the inputs is not expressible
    /// without linear terms, so put the bowl at the center: only squares.
    fn squares(spec: &BasisSpec, weights: &[(usize, f64)]) -> DVector<f64> {
        DVector::from_iterator(
            spec.len(),
            spec.entries.iter().map(|&(i, j)| {
                if i != j {
                    return 0.0;
                }
                weights.iter().find(|(k, _)| *k == i).map_or(0.0, |(_, w)| *w)
            }),
        )
    }

    #[test]
    fn bowl_returns_its_center() {
        let params = PlantParams::default();
        let mut spec = BasisSpec::default();
        let x = rl_state(&params);
        // center the bowl on an interior command with three chillers
        let target = ControlInput { m_lw: 70.0, m_tw: 5.0, n_ch: 3, m_cw: 120.0, m_oa: 1.1 };
        let v = joint(&x, &target);
        for i in 0..JOINT_DIM {
            spec.normalization.center[i] = v[i];
        }
        let theta = squares(&spec, &[(M_LW, 1.0), (M_TW, 1.0), (N_CH, 1.0), (M_CW, 1.0), (M_OA, 1.0)]);
        let got = greedy_action(&spec, &theta, &x, &params, &greedy_solver_config()).unwrap().input;
        assert_eq!(got.n_ch, 3);
        assert!((got.m_lw - 70.0).abs() < 1e-5, "{got:?}");
        assert!((got.m_tw - 5.0).abs() < 1e-5, "{got:?}");
        assert!((got.m_cw - 120.0).abs() < 1e-4, "{got:?}");
        assert!((got.m_oa - 1.1).abs() < 1e-6, "{got:?}");
    }

    #[test]
    fn cost_rising_in_chiller_count_picks_fewest() {
        let params = PlantParams::default();
        let mut spec = BasisSpec::default();
        spec.normalization.center[N_CH] = -1.0;
        let x = rl_state(&params);
        let theta = squares(&spec, &[(N_CH, 1.0)]);
        let envs = admissible_envelopes(&x.plant, &x.disturbance(), &params);
        let got = greedy_action(&spec, &theta, &x, &params, &greedy_solver_config()).unwrap();
        assert_eq!(got.input.n_ch, envs[0].n_ch);
    }

    #[test]
    fn greedy_is_admissible() {
        let params = PlantParams::default();
        let spec = BasisSpec::default();
        let x = rl_state(&params);
        let theta = DVector::from_iterator(spec.len(), spec.entries.iter().map(|&(i, j)| if i == j { 1.0 } else { 0.3 }));
        let got = greedy_action(&spec, &theta, &x, &params, &greedy_solver_config()).unwrap();
        let env = crate::plant::envelope(&x.plant, &x.disturbance(), got.input.n_ch, &params).unwrap();
        assert!(env.contains(&got.input));
    }

    #[test]
    fn wrong_theta_length_is_rejected() {
        let params = PlantParams::default();
        let spec = BasisSpec::default();
        let x = rl_state(&params);
        assert!(greedy_action(&spec, &DVector::zeros(3), &x, &params, &greedy_solver_config()).is_err());
    }
}
