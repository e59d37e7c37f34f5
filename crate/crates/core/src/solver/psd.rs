//! Regularized least squares over a cone of positive semidefinite matrices.
//!
//! Solves `min |A theta - b|_2 + alpha |theta - anchor|_2  s.t.  P(theta) >= 0`
//! where `P` is a linear symmetric-matrix embedding of `theta`. Both norms are
//! smoothed as `sqrt(|r|^2 + eps^2)`. The outer loop is iteratively reweighted
//! least squares (each reweighted problem majorizes the smoothed objective);
//! each reweighted quadratic is solved by ADMM on the split `P(theta) = S`,
//! with `S` projected onto the PSD cone by eigenvalue clipping. A final
//! diagonal shift makes the returned matrix PSD to working precision.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear map from a parameter vector to a symmetric matrix. Entry `l` of
/// `theta` fills `P[i][i]` when `entries[l] = (i, i)`, and `P[i][j] = P[j][i]
/// = theta_l / 2` otherwise, so that `v' P v = sum_l theta_l v_i v_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricEmbedding {
    pub dim: usize,
    pub entries: Vec<(usize, usize)>,
}

impl SymmetricEmbedding {
    pub fn new(dim: usize, entries: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(i, j) in &entries {
            if i >= dim || j >= dim {
                return Err(Error::InvalidArgument(format!("entry ({i}, {j}) outside a {dim}x{dim} matrix")));
            }
            if !seen.insert((i.max(j), i.min(j))) {
                return Err(Error::InvalidArgument(format!("entry ({i}, {j}) listed twice")));
            }
        }
        for &(i, j) in &entries {
            if i != j && !(seen.contains(&(i, i)) && seen.contains(&(j, j))) {
                return Err(Error::InvalidArgument(format!(
                    "off-diagonal entry ({i}, {j}) needs both diagonal entries to be free"
                )));
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn matrix(&self, theta: &[f64]) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(self.dim, self.dim);
        for (&(i, j), &t) in self.entries.iter().zip(theta) {
            if i == j {
                p[(i, i)] = t;
            } else {
                p[(i, j)] = 0.5 * t;
                p[(j, i)] = 0.5 * t;
            }
        }
        p
    }

    /// Adjoint of [`Self::matrix`] with respect to the Frobenius inner product.
    fn adjoint(&self, m: &DMatrix<f64>, out: &mut DVector<f64>) {
        for (l, &(i, j)) in self.entries.iter().enumerate() {
            out[l] = if i == j { m[(i, i)] } else { 0.5 * (m[(i, j)] + m[(j, i)]) };
        }
    }

    /// Diagonal of `E'E`: 1 for diagonal entries, 1/2 for off-diagonal ones.
    fn gram_diagonal(&self) -> Vec<f64> {
        self.entries.iter().map(|&(i, j)| if i == j { 1.0 } else { 0.5 }).collect()
    }
}

pub fn min_eigenvalue(p: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(p.clone()).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = 0.5 * (m + m.transpose());
    let mut eig = SymmetricEigen::new(sym);
    eig.eigenvalues.apply(|v| *v = v.max(0.0));
    eig.recompose()
}

#[derive(Debug, Clone)]
pub struct PsdLsqProblem {
    /// One row per residual; the residual vector is `a * theta - b`.
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub anchor: DVector<f64>,
    pub alpha: f64,
    pub embedding: SymmetricEmbedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsdConfig {
    /// Smoothing of both norms.
    pub epsilon: f64,
    pub max_reweight: usize,
    /// Relative change of the smoothed objective that ends the reweighting loop.
    pub reweight_tol: f64,
    pub max_admm: usize,
    pub admm_tol: f64,
}

impl Default for PsdConfig {
    fn default() -> Self {
        Self { epsilon: 1e-9, max_reweight: 60, reweight_tol: 1e-10, max_admm: 20_000, admm_tol: 1e-10 }
    }
}

#[derive(Debug, Clone)]
pub struct PsdSolution {
    pub theta: DVector<f64>,
    pub objective: f64,
    pub min_eigenvalue: f64,
    pub reweight_iterations: usize,
    pub admm_iterations: usize,
}

fn smoothed_norm(v: &DVector<f64>, eps: f64) -> f64 {
    (v.norm_squared() + eps * eps).sqrt()
}

impl PsdLsqProblem {
    /// Smoothed objective value at `theta`.
    pub fn objective(&self, theta: &DVector<f64>, eps: f64) -> f64 {
        smoothed_norm(&(&self.a * theta - &self.b), eps) + self.alpha * smoothed_norm(&(theta - &self.anchor), eps)
    }

    fn validate(&self) -> Result<()> {
        let d = self.embedding.len();
        if self.a.ncols() != d || self.anchor.len() != d || self.b.len() != self.a.nrows() {
            return Err(Error::InvalidArgument(format!(
                "dimension mismatch: A is {}x{}, b has {}, anchor has {}, embedding has {d}",
                self.a.nrows(),
                self.a.ncols(),
                self.b.len(),
                self.anchor.len()
            )));
        }
        if self.a.nrows() < d {
            return Err(Error::InvalidArgument(format!("need at least {d} residual rows, got {}", self.a.nrows())));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("proximal gain must be finite and nonnegative, got {}", self.alpha)));
        }
        let finite = self.a.iter().chain(self.b.iter()).chain(self.anchor.iter()).all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("non-finite residual data".into()));
        }
        Ok(())
    }
}

/// ADMM for `min 1/2 theta' H theta - g' theta  s.t.  E(theta) in PSD`.
struct QuadraticPsd<'a> {
    embedding: &'a SymmetricEmbedding,
    h: DMatrix<f64>,
    g: DVector<f64>,
}

impl QuadraticPsd<'_> {
    fn solve(&self, theta: &mut DVector<f64>, cfg: &PsdConfig) -> Result<usize> {
        let e = self.embedding;
        let d = e.len();
        let gram = e.gram_diagonal();
        let rho = (self.h.trace() / d as f64).max(1e-12);
        let mut lhs = self.h.clone();
        for l in 0..d {
            lhs[(l, l)] += rho * gram[l];
        }
        let chol = lhs
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("reweighted normal matrix is not positive definite".into()))?;

        let mut s = project_psd(&e.matrix(theta.as_slice()));
        let mut dual = DMatrix::zeros(e.dim, e.dim);
        let mut rhs = DVector::zeros(d);
        let mut iters = 0;
        while iters < cfg.max_admm {
            iters += 1;
            e.adjoint(&(&s - &dual), &mut rhs);
            rhs *= rho;
            rhs += &self.g;
            *theta = chol.solve(&rhs);
            let p = e.matrix(theta.as_slice());
            let s_prev = s.clone();
            s = project_psd(&(&p + &dual));
            let primal = &p - &s;
            dual += &primal;
            let scale = p.norm().max(s.norm()).max(1e-12);
            let dual_res = rho * (&s - &s_prev).norm();
            if primal.norm() <= cfg.admm_tol * scale && dual_res <= cfg.admm_tol * (rho * dual.norm()).max(1e-12) {
                break;
            }
        }
        Ok(iters)
    }
}

/// Solves the PSD-constrained regularized least-squares problem.
pub fn solve_psd_lsq(problem: &PsdLsqProblem, cfg: &PsdConfig) -> Result<PsdSolution> {
    problem.validate()?;
    let d = problem.embedding.len();
    let eps = cfg.epsilon;
    let ata = problem.a.transpose() * &problem.a;
    let atb = problem.a.transpose() * &problem.b;
    // tiny ridge keeps the reweighted system definite when alpha = 0
    let ridge = 1e-14 * (ata.trace() / d as f64).max(1.0);

    let mut theta = problem.anchor.clone();
    let mut f = problem.objective(&theta, eps);
    let mut admm_total = 0;
    let mut rounds = 0;
    while rounds < cfg.max_reweight {
        rounds += 1;
        let r = &problem.a * &theta - &problem.b;
        let w1 = 1.0 / smoothed_norm(&r, eps);
        let w2 = problem.alpha / smoothed_norm(&(&theta - &problem.anchor), eps);
        let mut h = &ata * w1;
        for l in 0..d {
            h[(l, l)] += w2 + ridge;
        }
        let g = &atb * w1 + &problem.anchor * w2;
        let mut next = theta.clone();
        admm_total += QuadraticPsd { embedding: &problem.embedding, h, g }.solve(&mut next, cfg)?;
        let f_next = problem.objective(&next, eps);
        let done = (f - f_next).abs() <= cfg.reweight_tol * f.max(1e-300);
        if f_next <= f || rounds == 1 {
            theta = next;
            f = f_next;
        }
        if done {
            break;
        }
    }

    // ADMM leaves E(theta) PSD only up to its tolerance; close the gap on the diagonal
    let mut lam = min_eigenvalue(&problem.embedding.matrix(theta.as_slice()));
    let mut shift = 0.0;
    for _ in 0..8 {
        if lam >= 0.0 {
            break;
        }
        shift += -lam * 1.01 + 1e-14;
        let mut shifted = theta.clone();
        for (l, &(i, j)) in problem.embedding.entries.iter().enumerate() {
            if i == j {
                shifted[l] += shift;
            }
        }
        lam = min_eigenvalue(&problem.embedding.matrix(shifted.as_slice()));
        if lam >= -1e-12 {
            theta = shifted;
            break;
        }
    }
    let objective = problem.objective(&theta, eps);
    Ok(PsdSolution { theta, objective, min_eigenvalue: lam, reweight_iterations: rounds, admm_iterations: admm_total })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> SymmetricEmbedding {
        SymmetricEmbedding::new(2, vec![(0, 0), (1, 1), (0, 1)]).unwrap()
    }

    #[test]
    fn embedding_quadratic_form() {
        let e = two_by_two();
        let p = e.matrix(&[2.0, 3.0, 4.0]);
        let v = DVector::from_vec(vec![1.5, -0.5]);
        let q = (v.transpose() * &p * &v)[(0, 0)];
        assert!((q - (2.0 * 2.25 + 3.0 * 0.25 + 4.0 * 1.5 * -0.5)).abs() < 1e-12);
    }

    #[test]
    fn embedding_rejects_unpaired_cross_term() {
        assert!(SymmetricEmbedding::new(3, vec![(0, 0), (0, 1)]).is_err());
        assert!(SymmetricEmbedding::new(2, vec![(0, 0), (0, 0)]).is_err());
    }

    #[test]
    fn feasible_target_is_recovered() {
        let e = two_by_two();
        let target = DVector::from_vec(vec![2.0, 1.0, 1.0]);
        let prob = PsdLsqProblem {
            a: DMatrix::identity(3, 3),
            b: target.clone(),
            anchor: DVector::zeros(3),
            alpha: 0.0,
            embedding: e,
        };
        let sol = solve_psd_lsq(&prob, &PsdConfig::default()).unwrap();
        assert!((sol.theta - target).amax() < 1e-6);
    }

    #[test]
    fn rejects_non_finite_rows() {
        let prob = PsdLsqProblem {
            a: DMatrix::from_element(3, 3, f64::NAN),
            b: DVector::zeros(3),
            anchor: DVector::zeros(3),
            alpha: 0.0,
            embedding: two_by_two(),
        };
        assert!(matches!(solve_psd_lsq(&prob, &PsdConfig::default()), Err(Error::InvalidArgument(_))));
    }
}
