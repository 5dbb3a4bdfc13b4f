use serde::{Deserialize, Serialize};

use crate::error::{Result, SpocError};
use crate::measures::WeightedEmpirical;
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityCurve {
    pub edges: Vec<f64>,
    pub centers: Vec<f64>,
    pub density: Vec<f64>,
    /// Mass of atoms outside the range (not included in the normalization).
    pub outside_mass: f64,
}

/// Weighted histogram normalized to integrate to one. Bins are `[a, b)`
/// except the last, which is closed; without a range the data extent is used.
pub fn density_histogram<T: Real>(
    mu: &WeightedEmpirical<T>,
    bins: usize,
    range: Option<(f64, f64)>,
) -> Result<DensityCurve> {
    if mu.dim() != 1 {
        return Err(SpocError::DimensionMismatch {
            expected: 1,
            got: mu.dim(),
        });
    }
    if bins == 0 {
        return Err(SpocError::Domain("bins must be positive".into()));
    }
    let (lo, hi) = match range {
        Some(r) => r,
        None => {
            let (a, b) = mu.atoms().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
                (a.min(v.as_f64()), b.max(v.as_f64()))
            });
            if a == b { (a - 0.5, b + 0.5) } else { (a, b) }
        }
    };
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(SpocError::Domain(format!("bad histogram range [{lo}, {hi}]")));
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut mass = vec![0.0; bins];
    let mut outside = 0.0;
    for (x, w) in mu.iter() {
        let (x, w) = (x[0].as_f64(), w.as_f64());
        if x < lo || x > hi {
            outside += w;
            continue;
        }
        let i = (((x - lo) / width).floor() as usize).min(bins - 1);
        mass[i] += w;
    }
    let inside: f64 = mass.iter().sum();
    let norm = if inside > 0.0 { inside * width } else { 1.0 };
    Ok(DensityCurve {
        centers: edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect(),
        density: mass.iter().map(|m| m / norm).collect(),
        edges,
        outside_mass: outside,
    })
}

impl DensityCurve {
    /// `sup_i |density_i - g(center_i)|`.
    pub fn sup_gap(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.centers
            .iter()
            .zip(&self.density)
            .map(|(&c, &d)| (d - g(c)).abs())
            .fold(0.0, f64::max)
    }
}
