#![allow(dead_code)]
//! Reference implementations and instance generators shared by the test suites.

use dcep_core::mpc::filters::CEIL_SLACK;
use dcep_core::rl::basis::JOINT_DIM;
use dcep_core::rl::BasisSpec;
use dcep_core::solver::{NlpProblem, PsdLsqProblem, SymmetricEmbedding};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Windowed rounding written out segment by segment with 1-based indices.
pub fn reference_moving_average_round(x: &[f64], w: usize) -> Vec<i64> {
    let n = x.len();
    let h = w / 2;
    let at = |i: usize| x[i - 1];
    let mean_ceil = |a: usize, b: usize| {
        let mut s = 0.0;
        for i in a..=b {
            s += at(i);
        }
        (s / (b - a + 1) as f64 - CEIL_SLACK).ceil() as i64
    };
    let mut y = vec![0; n];
    for i in 1..=h {
        y[i - 1] = mean_ceil(1, i + h);
    }
    for i in h + 1..=n - h {
        y[i - 1] = mean_ceil(i - h, i + h);
    }
    for i in n - h + 1..=n {
        y[i - 1] = mean_ceil(i - h, n);
    }
    y
}

pub fn reference_switches(x: &[i64]) -> usize {
    let mut c = 0;
    for i in 1..x.len() {
        if x[i] != x[i - 1] {
            c += 1;
        }
    }
    c
}

/// Switch reduction from an explicit list of unfrozen indices.
pub fn reference_reduce_switching(x: &[i64], w: usize) -> Vec<i64> {
    let n = x.len();
    let mut unfrozen = Vec::new();
    for i in 1..=n {
        let a = if i > w { i - w } else { 1 };
        if reference_switches(&x[a - 1..i]) > 0 {
            unfrozen.push(i);
        }
    }
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for i in unfrozen {
        match runs.last_mut() {
            Some(r) if *r.last().unwrap() + 1 == i => r.push(i),
            _ => runs.push(vec![i]),
        }
    }
    let mut y = x.to_vec();
    for r in runs {
        let sum: i64 = r.iter().map(|&i| x[i - 1]).sum();
        let len = r.len() as f64;
        let v = (sum as f64 / len).ceil() as i64;
        for i in r {
            y[i - 1] = v;
        }
    }
    y
}

/// Random strictly convex equality-constrained QP with its KKT solution.
pub fn random_qp(seed: u64) -> (NlpProblem, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=8);
    let m = rng.random_range(1..n);
    let l = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = &l * l.transpose() + DMatrix::identity(n, n);
    let g = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let a = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let b = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));

    // [H A'; A 0] [v; y] = [-g; b]
    let mut kkt = DMatrix::zeros(n + m, n + m);
    kkt.view_mut((0, 0), (n, n)).copy_from(&h);
    kkt.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    kkt.view_mut((n, 0), (m, n)).copy_from(&a);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(&(-&g));
    rhs.rows_mut(n, m).copy_from(&b);
    let sol = kkt.lu().solve(&rhs).expect("KKT system is nonsingular");
    let v = sol.rows(0, n).into_owned();

    let rows = |mat: &DMatrix<f64>| (0..mat.nrows()).map(|i| mat.row(i).iter().cloned().collect()).collect();
    let bound = v.amax() + 10.0;
    let problem = NlpProblem::quadratic(rows(&h), g.iter().cloned().collect(), rows(&a), b.iter().cloned().collect(), vec![-bound; n], vec![bound; n]);
    (problem, v)
}

pub fn oracle_instance(alpha: f64) -> PsdLsqProblem {
    let a = DMatrix::from_row_slice(
        6,
        3,
        &[1.0, 0.2, 0.5, 0.3, 1.0, -0.4, 0.0, 0.5, 1.0, 1.2, -0.3, 0.8, 0.4, 0.9, 0.1, -0.6, 0.2, 1.1],
    );
    PsdLsqProblem {
        a,
        b: DVector::from_vec(vec![0.5, -1.0, 2.0, 1.5, -0.8, 1.9]),
        anchor: DVector::from_vec(vec![1.0, 1.0, 0.0]),
        alpha,
        embedding: SymmetricEmbedding::new(2, vec![(0, 0), (1, 1), (0, 1)]).unwrap(),
    }
}

/// Optima of `oracle_instance` at proximal weights 0 and 0.3: parameters and objective.
pub const ORACLE_OPTIMA: [(f64, [f64; 3], f64); 2] =
    [(0.0, [0.528773, 0.471220, 0.998335], 2.437080), (0.3, [0.509399, 0.445295, 0.952540], 2.801498)];

/// PSD by diagonal dominance: each diagonal entry exceeds the absolute row sum.
pub fn random_psd_theta(spec: &BasisSpec, rng: &mut impl Rng) -> DVector<f64> {
    let mut theta: Vec<f64> = spec.entries.iter().map(|&(i, j)| if i == j { 0.0 } else { rng.random_range(-1.0..1.0) }).collect();
    let mut row = [0.0; JOINT_DIM];
    for (&(i, j), t) in spec.entries.iter().zip(&theta) {
        if i != j {
            row[i] += 0.5 * t.abs();
            row[j] += 0.5 * t.abs();
        }
    }
    for (l, &(i, j)) in spec.entries.iter().enumerate() {
        if i == j {
            theta[l] = row[i] + rng.random_range(0.05..1.0);
        }
    }
    DVector::from_vec(theta)
}

pub fn random_joint(spec: &BasisSpec, rng: &mut impl Rng) -> [f64; JOINT_DIM] {
    let n = &spec.normalization;
    std::array::from_fn(|i| n.center[i] + n.scale[i] * rng.random_range(-3.0..3.0))
}

