//! Smooth equality-constrained NLP with box bounds.
//!
//! Augmented Lagrangian outer loop; each subproblem is minimized over the box
//! by a projected limited-memory BFGS method. Iterates are projected onto the
//! box at every step, so no returned point ever leaves it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A smooth problem `min f(v)  s.t.  c(v) = 0,  lower <= v <= upper`.
pub trait Nlp {
    fn dim(&self) -> usize;
    fn num_eq(&self) -> usize;
    fn lower(&self) -> &[f64];
    fn upper(&self) -> &[f64];
    /// Objective value; writes its gradient into `grad`.
    fn objective(&self, v: &[f64], grad: &mut [f64]) -> f64;
    fn eq_residuals(&self, v: &[f64], out: &mut [f64]);
    /// Adds `J(v)^T y` to `out`, where `J` is the Jacobian of the residuals.
    fn add_jacobian_transpose(&self, v: &[f64], y: &[f64], out: &mut [f64]);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Equality residual tolerance (infinity norm).
    pub eq_tol: f64,
    /// Projected-gradient tolerance of the Lagrangian (infinity norm), relative
    /// to `max(1, |J'y|_inf)` with `y` the current multiplier estimate.
    pub pg_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub memory: usize,
    pub initial_penalty: f64,
    pub max_penalty: f64,
    /// Keep one trace row per outer iteration.
    pub trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eq_tol: 1e-6,
            pg_tol: 1e-5,
            max_outer: 200,
            max_inner: 500,
            memory: 10,
            initial_penalty: 10.0,
            max_penalty: 1e12,
            trace: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eq_tol > 0.0 && self.pg_tol > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.memory == 0 {
            return Err(Error::Config("solver iteration caps and memory must be positive".into()));
        }
        if !(self.initial_penalty > 0.0 && self.max_penalty >= self.initial_penalty) {
            return Err(Error::Config("penalty bounds must satisfy 0 < initial <= max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub outer: usize,
    pub inner_iterations: usize,
    pub objective: f64,
    pub residual: f64,
    pub projected_gradient: f64,
    /// Augmented Lagrangian at the start and the end of the subproblem.
    pub merit_start: f64,
    pub merit_end: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub multipliers: Vec<f64>,
    /// Infinity norm of the equality residuals at `x`.
    pub residual: f64,
    pub projected_gradient: f64,
    /// `max(1, |J'y|_inf)` at `x`; the stationarity test is `projected_gradient <= pg_tol * gradient_scale`.
    pub gradient_scale: f64,
    pub objective: f64,
    /// Total inner iterations.
    pub iterations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl SolveReport {
    /// Turns a non-converged report into an error carrying its final residuals.
    pub fn into_result(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence { iterations: self.iterations, residual: self.residual, objective: self.objective })
        }
    }

    pub fn write_trace_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Infinity norm of `v - P(v - g)`, the first-order stationarity measure on a box.
pub fn projected_gradient_norm(v: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut m = 0.0_f64;
    for i in 0..v.len() {
        let p = (v[i] - g[i]).clamp(lower[i], upper[i]);
        m = m.max((v[i] - p).abs());
    }
    m
}

/// Augmented Lagrangian `f + y.c + mu/2 |c|^2` with its gradient.
struct Merit<'a, P: Nlp + ?Sized> {
    problem: &'a P,
    lambda: &'a [f64],
    mu: f64,
    c: Vec<f64>,
    y: Vec<f64>,
}

impl<P: Nlp + ?Sized> Merit<'_, P> {
    fn eval(&mut self, v: &[f64], grad: &mut [f64]) -> f64 {
        let f = self.problem.objective(v, grad);
        self.problem.eq_residuals(v, &mut self.c);
        let mut extra = 0.0;
        for i in 0..self.c.len() {
            extra += self.lambda[i] * self.c[i] + 0.5 * self.mu * self.c[i] * self.c[i];
            self.y[i] = self.lambda[i] + self.mu * self.c[i];
        }
        self.problem.add_jacobian_transpose(v, &self.y, grad);
        f + extra
    }
}

struct InnerResult {
    iterations: usize,
    merit_start: f64,
    merit_end: f64,
}

/// Projected L-BFGS on the box. Stops at `tol` or when no descent step is found.
fn minimize_box<P: Nlp + ?Sized>(
    merit: &mut Merit<'_, P>,
    v: &mut [f64],
    lower: &[f64],
    upper: &[f64],
    tol: f64,
    max_iter: usize,
    memory: usize,
) -> InnerResult {
    let n = v.len();
    let mut g = vec![0.0; n];
    let mut f = merit.eval(v, &mut g);
    let merit_start = f;
    let mut s_hist: Vec<Vec<f64>> = Vec::with_capacity(memory);
    let mut y_hist: Vec<Vec<f64>> = Vec::with_capacity(memory);
    let mut rho_hist: Vec<f64> = Vec::with_capacity(memory);
    let mut d = vec![0.0; n];
    let mut free = vec![true; n];
    let mut alpha = vec![0.0; memory];
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut iterations = 0;

    while iterations < max_iter {
        if projected_gradient_norm(v, &g, lower, upper) <= tol {
            break;
        }
        for i in 0..n {
            free[i] = !((v[i] <= lower[i] && g[i] > 0.0) || (v[i] >= upper[i] && g[i] < 0.0));
        }
        // two-loop recursion restricted to the free variables
        for i in 0..n {
            d[i] = if free[i] { g[i] } else { 0.0 };
        }
        let m = s_hist.len();
        for k in (0..m).rev() {
            let a = rho_hist[k] * masked_dot(&s_hist[k], &d, &free);
            alpha[k] = a;
            for i in 0..n {
                if free[i] {
                    d[i] -= a * y_hist[k][i];
                }
            }
        }
        if m > 0 {
            let sy = dot(&s_hist[m - 1], &y_hist[m - 1]);
            let yy = dot(&y_hist[m - 1], &y_hist[m - 1]);
            let scale = sy / yy;
            d.iter_mut().for_each(|x| *x *= scale);
        } else {
            let gmax = inf_norm(&d).max(1e-300);
            let scale = (1.0 / gmax).min(1.0);
            d.iter_mut().for_each(|x| *x *= scale);
        }
        for k in 0..m {
            let b = rho_hist[k] * masked_dot(&y_hist[k], &d, &free);
            for i in 0..n {
                if free[i] {
                    d[i] += (alpha[k] - b) * s_hist[k][i];
                }
            }
        }
        d.iter_mut().for_each(|x| *x = -*x);
        if masked_dot(&g, &d, &free) >= 0.0 {
            // lost descent: restart from scaled steepest descent
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            let gmax = inf_norm(&g).max(1e-300);
            for i in 0..n {
                d[i] = if free[i] { -g[i] / gmax.max(1.0) } else { 0.0 };
            }
        }

        // projected backtracking search along the path P(v + t d)
        let mut t = 1.0;
        let mut accepted = false;
        let mut f_trial = f;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = (v[i] + t * d[i]).clamp(lower[i], upper[i]);
            }
            let mut decrease = 0.0;
            for i in 0..n {
                decrease += g[i] * (trial[i] - v[i]);
            }
            if decrease >= 0.0 {
                t *= 0.5;
                continue;
            }
            f_trial = merit.eval(&trial, &mut g_trial);
            if f_trial.is_finite() && f_trial <= f + 1e-4 * decrease {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if !accepted {
            if s_hist.is_empty() {
                break;
            }
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            continue;
        }
        let mut s = vec![0.0; n];
        let mut y = vec![0.0; n];
        for i in 0..n {
            s[i] = trial[i] - v[i];
            y[i] = g_trial[i] - g[i];
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if s_hist.len() == memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            rho_hist.push(1.0 / sy);
            s_hist.push(s);
            y_hist.push(y);
        }
        v.copy_from_slice(&trial);
        g.copy_from_slice(&g_trial);
        f = f_trial;
    }
    InnerResult { iterations, merit_start, merit_end: f }
}

fn masked_dot(a: &[f64], b: &[f64], mask: &[bool]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        if mask[i] {
            s += a[i] * b[i];
        }
    }
    s
}

/// Solves `problem` from `x0` (projected onto the box first).
///
/// Never errors on iteration caps: the report's `converged` flag says whether
/// both tolerances were met. Errors only on malformed problems.
pub fn solve_nlp<P: Nlp + ?Sized>(problem: &P, x0: &[f64], config: &SolverConfig) -> Result<SolveReport> {
    solve_nlp_with_multipliers(problem, x0, None, config)
}

/// As [`solve_nlp`], optionally warm-starting the multipliers.
pub fn solve_nlp_with_multipliers<P: Nlp + ?Sized>(
    problem: &P,
    x0: &[f64],
    lambda0: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<SolveReport> {
    config.validate()?;
    let n = problem.dim();
    let m = problem.num_eq();
    let (lower, upper) = (problem.lower(), problem.upper());
    if x0.len() != n || lower.len() != n || upper.len() != n {
        return Err(Error::InvalidArgument(format!("dimension mismatch: problem has {n} variables, x0 has {}", x0.len())));
    }
    if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::InvalidArgument("box bounds must satisfy lower <= upper".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("initial guess must be finite".into()));
    }
    let mut v: Vec<f64> = x0.iter().zip(lower.iter().zip(upper)).map(|(x, (l, u))| x.clamp(*l, *u)).collect();
    let mut lambda = match lambda0 {
        Some(l) if l.len() == m => l.to_vec(),
        Some(_) => return Err(Error::InvalidArgument("multiplier warm start has wrong length".into())),
        None => vec![0.0; m],
    };
    let mut mu = config.initial_penalty;
    let mut c = vec![0.0; m];
    let mut grad = vec![0.0; n];
    let mut y = vec![0.0; m];

    // subproblem and feasibility targets follow the penalty (Conn, Gould and Toint)
    let omega_floor = 0.01 * config.pg_tol;
    let mut omega = (1.0 / mu).max(omega_floor);
    let mut eta = 1.0 / mu.powf(0.1);
    // stationarity is measured relative to the size of the constraint forces
    // J'y, which balance the objective gradient at a constrained optimum
    let mut jty = vec![0.0; n];
    problem.eq_residuals(&v, &mut c);
    for i in 0..m {
        y[i] = lambda[i] + mu * c[i];
    }
    problem.add_jacobian_transpose(&v, &y, &mut jty);
    let mut scale = inf_norm(&jty).max(1.0);
    let mut total_inner = 0;
    let mut trace = Vec::new();
    let mut report_pg = f64::INFINITY;
    let mut report_res = f64::INFINITY;
    let mut report_obj = f64::NAN;
    let mut converged = false;
    let mut outer = 0;

    while outer < config.max_outer {
        outer += 1;
        let inner = {
            let mut merit = Merit { problem, lambda: &lambda, mu, c: vec![0.0; m], y: vec![0.0; m] };
            minimize_box(&mut merit, &mut v, lower, upper, omega * scale, config.max_inner, config.memory)
        };
        total_inner += inner.iterations;

        problem.eq_residuals(&v, &mut c);
        let res = inf_norm(&c);
        for i in 0..m {
            y[i] = lambda[i] + mu * c[i];
        }
        let f = problem.objective(&v, &mut grad);
        jty.fill(0.0);
        problem.add_jacobian_transpose(&v, &y, &mut jty);
        scale = inf_norm(&jty).max(1.0);
        for i in 0..n {
            grad[i] += jty[i];
        }
        let pg = projected_gradient_norm(&v, &grad, lower, upper);
        report_pg = pg;
        report_res = res;
        report_obj = f;
        if config.trace {
            trace.push(TraceRow {
                outer,
                inner_iterations: inner.iterations,
                objective: f,
                residual: res,
                projected_gradient: pg,
                merit_start: inner.merit_start,
                merit_end: inner.merit_end,
                penalty: mu,
            });
        }
        if !f.is_finite() || !res.is_finite() {
            break;
        }
        if res <= config.eq_tol && pg <= config.pg_tol * scale {
            lambda.copy_from_slice(&y);
            converged = true;
            break;
        }
        if res <= eta.max(config.eq_tol) {
            lambda.copy_from_slice(&y);
            eta /= mu.powf(0.9);
            omega = (omega / mu).max(omega_floor);
        } else if mu < config.max_penalty {
            mu = (mu * 10.0).min(config.max_penalty);
            eta = 1.0 / mu.powf(0.1);
            omega = (1.0 / mu).max(omega_floor);
        } else {
            lambda.copy_from_slice(&y);
            omega = (omega * 0.1).max(omega_floor);
        }
    }

    Ok(SolveReport {
        x: v,
        multipliers: lambda,
        residual: report_res,
        projected_gradient: report_pg,
        gradient_scale: scale,
        objective: report_obj,
        iterations: total_inner,
        outer_iterations: outer,
        converged,
        trace,
    })
}

type ScalarFn = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
type JacobianFn = Box<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Problem assembled from closures, convenient for small or one-off problems.
pub struct NlpProblem {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub num_eq: usize,
    pub objective: ScalarFn,
    pub gradient: VectorFn,
    pub eq: VectorFn,
    /// Adds `J^T y` to its last argument.
    pub jacobian_transpose: JacobianFn,
}

impl NlpProblem {
    /// `min 1/2 v'Hv + g'v  s.t.  Av = b`, with dense row-major `a` of shape `m x n`.
    pub fn quadratic(h: Vec<Vec<f64>>, g: Vec<f64>, a: Vec<Vec<f64>>, b: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        let (h1, g1) = (h.clone(), g.clone());
        let a1 = a.clone();
        let num_eq = a.len();
        Self {
            lower,
            upper,
            num_eq,
            objective: Box::new(move |v| {
                let mut s = 0.0;
                for i in 0..v.len() {
                    s += g1[i] * v[i] + 0.5 * v[i] * dot(&h1[i], v);
                }
                s
            }),
            gradient: Box::new(move |v, out| {
                for i in 0..v.len() {
                    out[i] = dot(&h[i], v) + g[i];
                }
            }),
            eq: Box::new(move |v, out| {
                for (r, row) in a1.iter().enumerate() {
                    out[r] = dot(row, v) - b[r];
                }
            }),
            jacobian_transpose: Box::new(move |_, y, out| {
                for (r, row) in a.iter().enumerate() {
                    for (o, aij) in out.iter_mut().zip(row) {
                        *o += aij * y[r];
                    }
                }
            }),
        }
    }
}

impl Nlp for NlpProblem {
    fn dim(&self) -> usize {
        self.lower.len()
    }
    fn num_eq(&self) -> usize {
        self.num_eq
    }
    fn lower(&self) -> &[f64] {
        &self.lower
    }
    fn upper(&self) -> &[f64] {
        &self.upper
    }
    fn objective(&self, v: &[f64], grad: &mut [f64]) -> f64 {
        (self.gradient)(v, grad);
        (self.objective)(v)
    }
    fn eq_residuals(&self, v: &[f64], out: &mut [f64]) {
        (self.eq)(v, out)
    }
    fn add_jacobian_transpose(&self, v: &[f64], y: &[f64], out: &mut [f64]) {
        (self.jacobian_transpose)(v, y, out)
    }
}
