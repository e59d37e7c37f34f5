//! One plant step: project the decision vector onto the dynamics and the
//! heat-exchanger capacity limits with the general NLP solver.

use crate::error::{Error, Result};
use crate::params::PlantParams;
use crate::solver::nlp::{solve_nlp, Nlp, SolverConfig};

use super::constraints::{eval_constraints, forward_state, tower_supply_floor, Decision, Intermediates};
use super::power::{fan_power, plant_chiller_power, pump_power, tower_capacity};
use super::projection::{analytic_projection, flow_intervals};
use super::types::{electricity_cost, ControlInput, Disturbance, PlantOutputs, PlantState};

/// Heat flows are solved in units of this many kW so that every Jacobian entry is O(1).
const Q_SCALE: f64 = 100.0;
const WIDE_T: (f64, f64) = (-40.0, 120.0);
/// Next-state entry each equality residual is solved for.
const RESIDUAL_STATE: [usize; 8] = [0, 2, 1, 4, 3, 5, 6, 7];

/// Solver settings for the plant projection. Tighter than the generic default
/// so heat balances close to ~1e-8 relative.
pub fn plant_solver_config() -> SolverConfig {
    SolverConfig { eq_tol: 1e-10, pg_tol: 1e-7, memory: 11, initial_penalty: 1e3, ..SolverConfig::default() }
}

#[derive(Debug, Clone)]
pub struct PlantStep {
    pub state: PlantState,
    pub outputs: PlantOutputs,
    pub decision: Decision,
    /// Infinity norm of the equality residuals at the accepted point.
    pub residual: f64,
    pub iterations: usize,
}

struct Projection<'a> {
    x: &'a PlantState,
    u: &'a ControlInput,
    w: &'a Disturbance,
    params: &'a PlantParams,
    mix: Intermediates,
    lower: [f64; 11],
    upper: [f64; 11],
}

impl<'a> Projection<'a> {
    fn new(x: &'a PlantState, u: &'a ControlInput, w: &'a Disturbance, params: &'a PlantParams) -> Result<Self> {
        let p = params;
        let mix = Intermediates::compute(x, u, p)?;
        let q_ub = tower_capacity(u.m_cw, u.m_oa, x.t_cwr, w.t_oawb, p);
        let lower = [
            WIDE_T.0,
            p.s_min,
            p.s_min,
            WIDE_T.0,
            WIDE_T.0,
            p.t_chws_min,
            WIDE_T.0,
            tower_supply_floor(x.t_cwr, w.t_oawb, p),
            0.0,
            0.0,
            0.0,
        ];
        let upper = [
            p.t_lwr_max,
            p.s_max,
            p.s_max,
            WIDE_T.1,
            WIDE_T.1,
            p.t_chws_max,
            p.t_cwr_max,
            WIDE_T.1.max(x.t_cwr),
            w.q_l_ref / Q_SCALE,
            u.n_ch as f64 * p.q_ch_indv / Q_SCALE,
            q_ub / Q_SCALE,
        ];
        Ok(Self { x, u, w, params, mix, lower, upper })
    }

    fn decision(v: &[f64]) -> Decision {
        let mut z = [0.0; 11];
        z.copy_from_slice(v);
        for q in &mut z[8..] {
            *q *= Q_SCALE;
        }
        Decision::from_slice(&z)
    }

    fn scaled(z: &Decision) -> [f64; 11] {
        let mut v = z.to_array();
        for q in &mut v[8..] {
            *q /= Q_SCALE;
        }
        v
    }
}

impl Nlp for Projection<'_> {
    fn dim(&self) -> usize {
        11
    }
    fn num_eq(&self) -> usize {
        8
    }
    fn lower(&self) -> &[f64] {
        &self.lower
    }
    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn objective(&self, v: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.params;
        // load error in MW keeps all three terms of comparable size
        let e_l = (v[8] * Q_SCALE - self.w.q_l_ref) / 1000.0;
        let e_chws = v[5] - p.t_chws_set;
        let e_cws = v[7] - p.t_cws_set;
        grad.fill(0.0);
        grad[8] = 2.0 * p.r1 * e_l * Q_SCALE / 1000.0;
        grad[5] = 2.0 * p.r2 * e_chws;
        grad[7] = 2.0 * p.r3 * e_cws;
        p.r1 * e_l * e_l + p.r2 * e_chws * e_chws + p.r3 * e_cws * e_cws
    }

    fn eq_residuals(&self, v: &[f64], out: &mut [f64]) {
        let z = Self::decision(v);
        // the command was validated when the problem was built
        let ev = eval_constraints(&z, self.x, self.u, self.w, self.params).expect("validated command");
        out.copy_from_slice(&ev.equality);
    }

    fn add_jacobian_transpose(&self, v: &[f64], y: &[f64], out: &mut [f64]) {
        // All residuals are affine in the decision vector; the only nonlinearity
        // (the compressor power clamp) depends on q_ch through a fixed slope.
        let p = self.params;
        let c = p.c_pw;
        let u = self.u;
        // each residual is unit-linear in one entry of the next state
        for (r, &k) in RESIDUAL_STATE.iter().enumerate() {
            out[k] += y[r];
        }
        out[8] -= y[0] * Q_SCALE / (c * u.m_lw);
        if u.n_ch > 0 {
            out[9] += y[5] * Q_SCALE / (c * self.mix.m_chw);
        }
        out[9] -= y[6] * Q_SCALE * self.condenser_slope(v[9] * Q_SCALE) / (c * u.m_cw);
        out[10] += y[7] * Q_SCALE / (c * u.m_cw);
    }
}

impl Projection<'_> {
    /// d q_cond / d q_ch at the given duty.
    fn condenser_slope(&self, q_ch: f64) -> f64 {
        let x = self.x;
        let p = self.params;
        let n = self.u.n_ch as f64;
        if n <= 0.0 {
            return 1.0;
        }
        let (slope, offset) = super::power::chiller_curve(x.t_cws, x.t_chws, p);
        if slope * q_ch + n * offset > 0.0 {
            1.0 + p.eta1 * slope
        } else {
            1.0
        }
    }

    fn initial_guess(&self) -> Result<[f64; 11]> {
        let (l, u) = (&self.lower, &self.upper);
        let q = [0.5 * (l[8] + u[8]), 0.5 * (l[9] + u[9]), 0.5 * (l[10] + u[10])];
        let next = forward_state(self.x, self.u, q[0] * Q_SCALE, q[1] * Q_SCALE, q[2] * Q_SCALE, self.params)?;
        let mut v = Self::scaled(&Decision { next, q_l: q[0] * Q_SCALE, q_ch: q[1] * Q_SCALE, q_ct: q[2] * Q_SCALE });
        for i in 0..11 {
            v[i] = v[i].clamp(l[i], u[i]);
        }
        Ok(v)
    }
}

/// Electric powers and cost of a step for the decision `z`.
pub fn step_outputs(z: &Decision, x: &PlantState, u: &ControlInput, price: f64, params: &PlantParams) -> Result<PlantOutputs> {
    let p = params;
    let mix = Intermediates::compute(x, u, p)?;
    let p_ch = plant_chiller_power(u.n_ch as f64, x.t_cws, x.t_chws, z.q_ch, p);
    let p_chw_pump = pump_power(mix.m_chw, p.alpha())?;
    let p_cw_pump = pump_power(u.m_cw, p.gamma())?;
    let p_ct = fan_power(u.m_oa, p.lambda);
    let p_tot = p_ch + p_ct + p_chw_pump + p_cw_pump;
    Ok(PlantOutputs {
        q_l: z.q_l,
        q_ch: z.q_ch,
        q_ct: z.q_ct,
        q_cond: z.q_ch + p.eta1 * p_ch,
        p_ch,
        p_chw_pump,
        p_cw_pump,
        p_ct,
        p_tot,
        c_e: electricity_cost(price, p_tot, p.t_s),
    })
}

/// Advances the plant one sampling period under command `u`.
///
/// `price` ($/kWh) only enters the reported cost.
pub fn plant_step(
    x: &PlantState,
    u: &ControlInput,
    w: &Disturbance,
    price: f64,
    params: &PlantParams,
    solver: &SolverConfig,
) -> Result<PlantStep> {
    x.validate(params)?;
    u.validate(params)?;
    w.validate()?;
    flow_intervals(x, u, w, params)?;
    let problem = Projection::new(x, u, w, params)?;
    let v0 = problem.initial_guess()?;
    let report = solve_nlp(&problem, &v0, solver)?;
    let decision = if report.converged {
        let mut d = Projection::decision(&report.x);
        // the warm fraction is carried redundantly; restore the exact complement
        d.next.s_tww = 1.0 - d.next.s_twc;
        d
    } else {
        // stalls near degenerate active sets; the closed form solves the same problem
        analytic_projection(x, u, w, params).map_err(|_| Error::NonConvergence {
            iterations: report.iterations,
            residual: report.residual,
            objective: report.objective,
        })?
    };
    let ev = eval_constraints(&decision, x, u, w, params)?;
    if ev.worst_slack() < -1e-6 {
        return Err(Error::NonConvergence {
            iterations: report.iterations,
            residual: -ev.worst_slack(),
            objective: report.objective,
        });
    }
    let outputs = step_outputs(&decision, x, u, price, params)?;
    Ok(PlantStep { state: decision.next, outputs, decision, residual: ev.max_equality_violation(), iterations: report.iterations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (PlantParams, PlantState, ControlInput, Disturbance) {
        let p = PlantParams::default();
        let x = PlantState::new(13.0, 0.5, 6.2, 13.5, 6.8, 32.0, 29.5);
        let u = ControlInput { m_lw: 60.0, m_tw: 10.0, n_ch: 3, m_cw: 150.0, m_oa: 1.5 };
        let w = Disturbance { t_oawb: 25.0, q_l_ref: 1200.0 };
        (p, x, u, w)
    }

    #[test]
    fn numerical_step_matches_closed_form() {
        let (p, x, u, w) = setup();
        let step = plant_step(&x, &u, &w, 0.1, &p, &plant_solver_config()).unwrap();
        let exact = analytic_projection(&x, &u, &w, &p).unwrap();
        let (a, b) = (step.decision.to_array(), exact.to_array());
        for i in 0..11 {
            assert!((a[i] - b[i]).abs() < 1e-5 * (1.0 + b[i].abs()), "entry {i}: {} vs {}", a[i], b[i]);
        }
    }

    #[test]
    fn stalled_solver_falls_back_to_closed_form() {
        let (p, x, u, w) = setup();
        let cfg = SolverConfig { max_outer: 1, max_inner: 2, ..plant_solver_config() };
        let step = plant_step(&x, &u, &w, 0.1, &p, &cfg).unwrap();
        let exact = analytic_projection(&x, &u, &w, &p).unwrap();
        assert_eq!(step.decision.to_array(), exact.to_array());
    }

    #[test]
    fn idle_plant_mixes_only() {
        let (p, x, _, _) = setup();
        let u = ControlInput { m_lw: 40.0, m_tw: 0.0, n_ch: 0, m_cw: 100.0, m_oa: 1.0 };
        let w = Disturbance { t_oawb: 25.0, q_l_ref: 0.0 };
        let step = plant_step(&x, &u, &w, 0.1, &p, &plant_solver_config());
        // n = 0 with positive supply flow is structurally infeasible
        assert!(matches!(step, Err(Error::Infeasible(_))));
        let u = ControlInput { m_lw: 30.0, m_tw: -30.0, ..u };
        let step = plant_step(&x, &u, &w, 0.1, &p, &plant_solver_config()).unwrap();
        assert!(step.outputs.q_l.abs() < 1e-6 && step.outputs.q_ch.abs() < 1e-9);
        assert!((step.state.t_lwr - x.t_twc).abs() < 1e-6);
    }

    #[test]
    fn total_power_is_sum_of_parts() {
        let (p, x, u, w) = setup();
        let o = plant_step(&x, &u, &w, 0.1, &p, &plant_solver_config()).unwrap().outputs;
        assert_eq!(o.p_tot, o.p_ch + o.p_ct + o.p_chw_pump + o.p_cw_pump);
        assert!((o.c_e - 0.1 * o.p_tot / 6.0).abs() < 1e-12);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let (p, x, u, w) = setup();
        let prob = Projection::new(&x, &u, &w, &p).unwrap();
        let v = prob.initial_guess().unwrap();
        let h = 1e-6;
        for r in 0..8 {
            let mut y = [0.0; 8];
            y[r] = 1.0;
            let mut analytic = [0.0; 11];
            prob.add_jacobian_transpose(&v, &y, &mut analytic);
            for i in 0..11 {
                let (mut vp, mut vm) = (v, v);
                vp[i] += h;
                vm[i] -= h;
                let (mut cp, mut cm) = ([0.0; 8], [0.0; 8]);
                prob.eq_residuals(&vp, &mut cp);
                prob.eq_residuals(&vm, &mut cm);
                let fd = (cp[r] - cm[r]) / (2.0 * h);
                assert!((fd - analytic[i]).abs() <= 1e-5 * (1.0 + fd.abs()), "d c{r} / d v{i}: {fd} vs {}", analytic[i]);
            }
        }
        let mut g = [0.0; 11];
        let f0 = prob.objective(&v, &mut g);
        for i in 0..11 {
            let (mut vp, mut vm) = (v, v);
            vp[i] += h;
            vm[i] -= h;
            let mut tmp = [0.0; 11];
            let fd = (prob.objective(&vp, &mut tmp) - prob.objective(&vm, &mut tmp)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * (1.0 + fd.abs() + f0.abs()), "d f / d v{i}: {fd} vs {}", g[i]);
        }
    }
}
