use serde::{Deserialize, Serialize};

use crate::error::{Result, SpocError};

/// z-quantile for a two-sided 90% normal interval.
pub const Z90: f64 = 1.644_853_626_951_472_2;

/// Least-squares fit of `ln err = intercept + slope ln n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    pub r_squared: f64,
    pub ns: Vec<f64>,
    pub errs: Vec<f64>,
}

pub fn rate_fit(ns: &[f64], errs: &[f64]) -> Result<RateFit> {
    if ns.len() != errs.len() {
        return Err(SpocError::DimensionMismatch {
            expected: ns.len(),
            got: errs.len(),
        });
    }
    if ns.len() < 3 {
        return Err(SpocError::Domain("rate_fit needs at least 3 points".into()));
    }
    if ns.iter().chain(errs).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(SpocError::Domain("rate_fit needs positive finite inputs".into()));
    }
    let x: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = errs.iter().map(|v| v.ln()).collect();
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if !(sxx > 0.0) {
        return Err(SpocError::Domain("rate_fit needs at least two distinct n".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x
        .iter()
        .zip(&y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let sst: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let r_squared = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        stderr: (ssr / (k - 2.0) / sxx).sqrt(),
        r_squared,
        ns: ns.to_vec(),
        errs: errs.to_vec(),
    })
}

/// `(mean, 90% half-width)` across independent replications, normal
/// approximation; the half-width is 0 for a single value.
pub fn mean_ci90(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
    (mean, Z90 * (var / r).sqrt())
}

/// Standard error of the mean.
pub fn std_error(values: &[f64]) -> f64 {
    mean_ci90(values).1 / Z90
}
