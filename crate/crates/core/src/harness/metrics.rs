//! Closed-loop performance measures.

/// Number of adjacent entries that differ.
pub fn n_switch(signal: &[u32]) -> usize {
    signal.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Root-mean-square tracking error normalized by `N - 1`.
pub fn e_rmse(achieved: &[f64], reference: &[f64]) -> f64 {
    let n = achieved.len().min(reference.len());
    if n < 2 {
        return 0.0;
    }
    let sq: f64 = achieved.iter().zip(reference).map(|(a, r)| (a - r).powi(2)).sum();
    (sq / (n - 1) as f64).sqrt()
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_of_known_errors() {
        let e = e_rmse(&[10.0, 13.0, 24.0], &[10.0, 10.0, 20.0]);
        assert!((e - (25.0_f64 / 2.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn switches() {
        assert_eq!(n_switch(&[3, 3, 3]), 0);
        assert_eq!(n_switch(&[1, 2, 2, 1, 3]), 3);
        assert_eq!(n_switch(&[]), 0);
    }
}
