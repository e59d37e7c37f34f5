//! Integer repair of a relaxed chiller-count trace.

use crate::error::{Error, Result};

/// Means within this distance below an integer round to that integer, so that
/// solver noise on an integral relaxed value does not add a chiller.
pub const CEIL_SLACK: f64 = 1e-9;

fn ceil_mean(values: &[f64]) -> i64 {
    let m = values.iter().sum::<f64>() / values.len() as f64;
    (m - CEIL_SLACK).ceil() as i64
}

/// Windowed mean rounded up. With `h = w / 2` and 1-based index `i`:
/// entries `i <= h` average `x[1..=i+h]`, interior entries average
/// `x[i-h..=i+h]`, and entries `i > n - h` average `x[i-h..=n]`.
pub fn moving_average_round(x: &[f64], w: usize) -> Result<Vec<i64>> {
    if w < 2 || w % 2 != 0 {
        return Err(Error::InvalidArgument(format!("window must be even and at least 2, got {w}")));
    }
    let n = x.len();
    if n < w {
        return Err(Error::InvalidArgument(format!("signal of length {n} is shorter than the window {w}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("signal must be finite".into()));
    }
    let h = w / 2;
    Ok((0..n)
        .map(|i| {
            // 0-based inclusive bounds
            let lo = i.saturating_sub(h);
            let hi = (i + h).min(n - 1);
            ceil_mean(&x[lo..=hi])
        })
        .collect())
}

/// Keeps every entry whose trailing window `x[i-w..=i]` has no switch, and
/// replaces each maximal run of the remaining entries by the rounded-up mean
/// of the run.
pub fn reduce_switching(x: &[i64], w: usize) -> Vec<i64> {
    let n = x.len();
    let frozen: Vec<bool> = (0..n).map(|i| switch_count(&x[i.saturating_sub(w)..=i]) == 0).collect();
    let mut out = x.to_vec();
    let mut i = 0;
    while i < n {
        if frozen[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && !frozen[i] {
            i += 1;
        }
        let run = &x[start..i];
        let sum: i64 = run.iter().sum();
        let len = run.len() as i64;
        let y = sum.div_euclid(len) + i64::from(sum.rem_euclid(len) != 0);
        out[start..i].fill(y);
    }
    out
}

/// Number of adjacent entries that differ.
pub fn switch_count(x: &[i64]) -> usize {
    x.windows(2).filter(|p| p[0] != p[1]).count()
}

/// Both filters in sequence, clamped to `[0, n_max]`.
pub fn integer_schedule(relaxed: &[f64], w: usize, n_max: u32) -> Result<Vec<u32>> {
    let smooth = moving_average_round(relaxed, w)?;
    let fewer = reduce_switching(&smooth, w);
    Ok(fewer.into_iter().map(|v| v.clamp(0, n_max as i64) as u32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_signal_is_kept() {
        assert_eq!(moving_average_round(&[3.0; 20], 12).unwrap(), vec![3; 20]);
        assert_eq!(reduce_switching(&[3; 20], 12), vec![3; 20]);
    }

    #[test]
    fn short_or_odd_window_is_rejected() {
        assert!(moving_average_round(&[1.0; 5], 6).is_err());
        assert!(moving_average_round(&[1.0; 5], 3).is_err());
    }

    #[test]
    fn four_sample_trace() {
        // head: ceil(mean(1,1)) = 1; interior: ceil(4/3) = 2, ceil(5/3) = 2; tail: ceil(mean(2,2)) = 2
        assert_eq!(moving_average_round(&[1.0, 1.0, 2.0, 2.0], 2).unwrap(), vec![1, 2, 2, 2]);
    }

    #[test]
    fn oscillating_run_is_flattened() {
        // only 0..=2 have a constant trailing window; run 3..=7 = [3,2,3,2,2] -> ceil(2.4) = 3
        let x = [2, 2, 2, 3, 2, 3, 2, 2];
        assert_eq!(reduce_switching(&x, 3), vec![2, 2, 2, 3, 3, 3, 3, 3]);
        // a longer calm tail freezes again
        let x = [2, 2, 2, 3, 2, 2, 2, 2, 2];
        assert_eq!(reduce_switching(&x, 2), vec![2, 2, 2, 3, 3, 3, 2, 2, 2]);
    }

    #[test]
    fn solver_noise_does_not_round_up() {
        let x = [2.0 + 1e-12; 6];
        assert_eq!(moving_average_round(&x, 2).unwrap(), vec![2; 6]);
    }
}
