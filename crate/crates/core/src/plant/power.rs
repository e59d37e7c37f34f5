//! Electric power and tower capacity curves.

use crate::error::{ensure_finite, Error, Result};
use crate::params::{PlantParams, KELVIN_OFFSET};

/// Single-chiller electric power (kW) from condenser supply and evaporator
/// supply temperatures (°C) and the delivered cooling (kW).
///
/// The lift ratio is taken on absolute temperatures.
pub fn chiller_power(t_cws: f64, t_chws: f64, q_ch: f64, params: &PlantParams) -> Result<f64> {
    ensure_finite("chiller_power arguments", &[t_cws, t_chws, q_ch])?;
    if t_chws + KELVIN_OFFSET <= 0.0 {
        return Err(Error::InvalidArgument(format!("chilled water temperature {t_chws} °C below absolute zero")));
    }
    let (slope, offset) = chiller_curve(t_cws, t_chws, params);
    Ok((slope * q_ch + offset).max(0.0))
}

/// Returns `(lift ratio - 1, load-independent part)` of the chiller curve.
pub(crate) fn chiller_curve(t_cws: f64, t_chws: f64, params: &PlantParams) -> (f64, f64) {
    let ratio = (t_cws + KELVIN_OFFSET) / (t_chws + KELVIN_OFFSET);
    let offset = -params.beta1 + params.beta2 * (t_cws + KELVIN_OFFSET) - params.beta3 * ratio;
    (ratio - 1.0, offset)
}

/// Power drawn by `n_ch` identical chillers sharing `q_ch` equally.
///
/// Equal to `n_ch * chiller_power(t_cws, t_chws, q_ch / n_ch)`, written so it
/// stays defined (and zero) when no chiller runs. `n_ch` may be fractional.
pub fn plant_chiller_power(n_ch: f64, t_cws: f64, t_chws: f64, q_ch: f64, params: &PlantParams) -> f64 {
    if n_ch <= 0.0 {
        return 0.0;
    }
    let (slope, offset) = chiller_curve(t_cws, t_chws, params);
    (slope * q_ch + n_ch * offset).max(0.0)
}

/// Black-box pump curve `a1 ln(1 + a2 m) + a3 m + a4`, floored at zero.
pub fn pump_power(m: f64, coeffs: [f64; 4]) -> Result<f64> {
    ensure_finite("pump_power arguments", &[m, coeffs[0], coeffs[1], coeffs[2], coeffs[3]])?;
    let arg = 1.0 + coeffs[1] * m;
    if arg <= 0.0 {
        return Err(Error::InvalidArgument(format!("pump curve log argument {arg} is not positive")));
    }
    Ok((coeffs[0] * arg.ln() + coeffs[2] * m + coeffs[3]).max(0.0))
}

/// Tower fan power, cubic in air flow.
pub fn fan_power(m_oa: f64, lambda: f64) -> f64 {
    lambda * m_oa.powi(3)
}

/// Heat the tower can reject (kW) at the given water and air flows.
pub fn tower_capacity(m_cw: f64, m_oa: f64, t_cwr: f64, t_oawb: f64, params: &PlantParams) -> f64 {
    if m_oa <= 0.0 || m_cw <= 0.0 || t_cwr <= t_oawb {
        return 0.0;
    }
    let (c1, c2, c3) = (params.c1, params.c2, params.c3);
    c1 * m_cw.powf(c3) / (1.0 + c2 * (m_cw / m_oa).powf(c3)) * (t_cwr - t_oawb)
}
