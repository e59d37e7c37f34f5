//! Disturbance and price streams driving a closed-loop run.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::Disturbance;

/// One sampling instant. `timestamp` is seconds since the start of the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRow {
    pub timestamp: f64,
    pub t_oawb: f64,
    pub q_l_ref: f64,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub t_s: f64,
    /// Window of the backward price average, in steps.
    pub tau: usize,
    pub rows: Vec<ScenarioRow>,
}

/// Backward moving average over the last `tau` samples, current one included.
/// Before `tau` samples exist, all available samples are averaged.
pub fn backward_average(values: &[f64], tau: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for k in 0..values.len() {
        sum += values[k];
        if k >= tau {
            sum -= values[k - tau];
        }
        out.push(sum / (k + 1).min(tau) as f64);
    }
    out
}

impl Scenario {
    pub fn new(t_s: f64, tau: usize, rows: Vec<ScenarioRow>) -> Result<Self> {
        let s = Self { t_s, tau, rows };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 {
            return Err(Error::InvalidArgument("price window must be at least one step".into()));
        }
        if self.rows.len() < self.tau {
            return Err(Error::InvalidArgument(format!(
                "scenario has {} rows, fewer than the price window of {} steps",
                self.rows.len(),
                self.tau
            )));
        }
        for (k, r) in self.rows.iter().enumerate() {
            let expected = self.rows[0].timestamp + k as f64 * self.t_s;
            if (r.timestamp - expected).abs() > 1e-6 * self.t_s {
                return Err(Error::InvalidArgument(format!("row {k}: timestamp {} breaks the {} s spacing", r.timestamp, self.t_s)));
            }
            if !(r.price > 0.0 && r.price.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {k}: price must be positive, got {}", r.price)));
            }
            self.disturbance(k).validate().map_err(|e| Error::InvalidArgument(format!("row {k}: {e}")))?;
        }
        Ok(())
    }

    pub fn disturbance(&self, k: usize) -> Disturbance {
        let r = &self.rows[k];
        Disturbance { t_oawb: r.t_oawb, q_l_ref: r.q_l_ref }
    }

    pub fn prices(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.price).collect()
    }

    pub fn price_average(&self) -> Vec<f64> {
        backward_average(&self.prices(), self.tau)
    }

    pub fn mean_load(&self) -> f64 {
        self.rows.iter().map(|r| r.q_l_ref).sum::<f64>() / self.rows.len() as f64
    }

    /// `len` rows starting at `k`. Past the end, the row one day earlier is
    /// repeated, so forecasts near the end of a run stay diurnally plausible.
    pub fn forecast(&self, k: usize, len: usize) -> Vec<ScenarioRow> {
        let day = ((86_400.0 / self.t_s).round() as usize).max(1);
        let n = self.rows.len();
        (k..k + len)
            .map(|mut j| {
                while j >= n {
                    j = if j >= day { j - day } else { n - 1 };
                }
                self.rows[j]
            })
            .collect()
    }

    /// Rows `start..start + len` as a new scenario with timestamps kept.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        let end = (start + len).min(self.rows.len());
        Self::new(self.t_s, self.tau, self.rows[start..end].to_vec())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV with header `timestamp,t_oawb,q_l_ref,price`. The sampling
    /// period is taken from the first two timestamps.
    pub fn load(path: impl AsRef<Path>, tau: usize) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows: Vec<ScenarioRow> = r.deserialize().collect::<std::result::Result<_, _>>()?;
        let t_s = match rows.as_slice() {
            [a, b, ..] => b.timestamp - a.timestamp,
            _ => return Err(Error::InvalidArgument(format!("scenario needs at least {} rows", tau.max(2)))),
        };
        if !(t_s > 0.0) {
            return Err(Error::InvalidArgument("timestamps must increase".into()));
        }
        Self::new(t_s, tau, rows)
    }
}

/// Shape of the synthetic disturbance generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthProfile {
    pub t_s: f64,
    pub tau: usize,
    /// Mean cooling load, kW.
    pub load_mean: f64,
    /// Diurnal load swing as a fraction of the mean.
    pub load_swing: f64,
    /// Hour of peak load.
    pub load_peak_hour: f64,
    /// Weekend load relative to weekdays.
    pub weekend_factor: f64,
    pub load_noise: f64,
    pub wet_bulb_mean: f64,
    pub wet_bulb_swing: f64,
    pub wet_bulb_noise: f64,
    /// Overnight price, $/kWh.
    pub price_base: f64,
    /// Height of the morning and evening price peaks above the base, $/kWh.
    pub price_peaks: (f64, f64),
    pub price_peak_hours: (f64, f64),
    /// Width of each peak, h.
    pub price_peak_width: f64,
    /// Weekend peak height relative to weekdays.
    pub weekend_price_factor: f64,
    pub price_noise: f64,
}

impl Default for SynthProfile {
    fn default() -> Self {
        Self {
            t_s: 600.0,
            tau: 24,
            load_mean: 1313.0,
            load_swing: 0.35,
            load_peak_hour: 14.0,
            weekend_factor: 0.85,
            load_noise: 0.03,
            wet_bulb_mean: 25.5,
            wet_bulb_swing: 1.5,
            wet_bulb_noise: 0.2,
            price_base: 0.045,
            price_peaks: (0.07, 0.10),
            price_peak_hours: (10.0, 18.5),
            price_peak_width: 2.5,
            weekend_price_factor: 0.5,
            price_noise: 0.05,
        }
    }
}

/// Deterministic synthetic scenario: diurnal load and wet-bulb sinusoids with
/// AR(1) noise, and a two-peak price curve that is flatter on weekends.
pub fn synth_scenario(seed: u64, days: usize, profile: &SynthProfile) -> Result<Scenario> {
    let p = profile;
    let per_day = (86_400.0 / p.t_s).round() as usize;
    let n = days * per_day;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let (mut e_load, mut e_wb, mut e_price) = (0.0, 0.0, 0.0);
    let rho = 0.9_f64;
    let innovation = (1.0 - rho * rho).sqrt();
    let tau = std::f64::consts::TAU;
    // weekday-to-weekend mix so the weekly mean of the load equals `load_mean`
    let weekend_days = (0..days).filter(|d| d % 7 >= 5).count() as f64;
    let load_scale = days as f64 / (days as f64 - weekend_days * (1.0 - p.weekend_factor)).max(1e-9);
    let mut rows = Vec::with_capacity(n);
    for k in 0..n {
        let hour = (k % per_day) as f64 * p.t_s / 3600.0;
        let weekend = (k / per_day) % 7 >= 5;
        e_load = rho * e_load + innovation * unit.sample(&mut rng);
        e_wb = rho * e_wb + innovation * unit.sample(&mut rng);
        e_price = rho * e_price + innovation * unit.sample(&mut rng);

        let day_factor = if weekend { p.weekend_factor } else { 1.0 };
        let shape = 1.0 + p.load_swing * (tau * (hour - p.load_peak_hour + 6.0) / 24.0).sin();
        let q_l_ref = (p.load_mean * load_scale * day_factor * shape * (1.0 + p.load_noise * e_load)).max(0.0);
        let t_oawb = p.wet_bulb_mean + p.wet_bulb_swing * (tau * (hour - 9.0) / 24.0).sin() + p.wet_bulb_noise * e_wb;

        let bump = |center: f64| (-0.5 * ((hour - center) / p.price_peak_width).powi(2)).exp();
        let peak_factor = if weekend { p.weekend_price_factor } else { 1.0 };
        let clean = p.price_base
            + peak_factor * (p.price_peaks.0 * bump(p.price_peak_hours.0) + p.price_peaks.1 * bump(p.price_peak_hours.1));
        let price = (clean * (1.0 + p.price_noise * e_price)).max(0.1 * p.price_base);
        rows.push(ScenarioRow { timestamp: k as f64 * p.t_s, t_oawb, q_l_ref, price });
    }
    Scenario::new(p.t_s, p.tau, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_matches_direct_sum() {
        let v: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        let avg = backward_average(&v, 7);
        for k in 0..v.len() {
            let lo = k.saturating_sub(6);
            let direct = v[lo..=k].iter().sum::<f64>() / (k - lo + 1) as f64;
            assert!((avg[k] - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn synthesis_is_deterministic_and_anchored() {
        let p = SynthProfile::default();
        let a = synth_scenario(7, 7, &p).unwrap();
        let b = synth_scenario(7, 7, &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 1008);
        assert!((a.mean_load() - 1313.0).abs() < 0.05 * 1313.0, "{}", a.mean_load());
    }

    #[test]
    fn forecast_wraps_to_previous_day() {
        let s = synth_scenario(1, 2, &SynthProfile::default()).unwrap();
        let f = s.forecast(280, 20);
        assert_eq!(f[0], s.rows[280]);
        assert_eq!(f[10], s.rows[290 - 144]);
    }

    #[test]
    fn short_scenario_is_rejected() {
        let row = ScenarioRow { timestamp: 0.0, t_oawb: 25.0, q_l_ref: 1000.0, price: 0.1 };
        assert!(Scenario::new(600.0, 24, vec![row]).is_err());
    }
}
