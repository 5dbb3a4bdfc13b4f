//! Weighted empirical measures and Wasserstein distances between them.

mod empirical;
pub mod io;
pub mod transport;
mod wasserstein;

pub use empirical::{SummaryStats, WeightedEmpirical, DEFAULT_RENORMALIZE_EVERY, PRUNE_THRESHOLD};
pub use wasserstein::{
    gaussian_w2_1d, sliced_w2, wasserstein_1d, wasserstein_1d_cost, wasserstein_exact,
    wasserstein_exact_with_cap, GroundCost, DEFAULT_COST_CAP,
};

use crate::error::Result;
use crate::real::Real;
use crate::schedules::UpdateSchedule;

/// `K_n` applied to a sequence: `s_1 = x_1`, `s_n = s_{n-1} + alpha_n (x_n - s_{n-1})`.
///
/// Each element of `values` is a point (scalars are one-element slices).
pub fn combine_kn<T: Real>(values: &[Vec<T>], schedule: &UpdateSchedule) -> Result<Vec<T>> {
    let first = values
        .first()
        .ok_or_else(|| crate::SpocError::Domain("combine_kn needs at least one value".into()))?;
    let mut s = first.clone();
    for (i, x) in values.iter().enumerate().skip(1) {
        if x.len() != s.len() {
            return Err(crate::SpocError::DimensionMismatch {
                expected: s.len(),
                got: x.len(),
            });
        }
        let a = T::of(schedule.alpha(i + 1)?);
        for (si, &xi) in s.iter_mut().zip(x) {
            *si += a * (xi - *si);
        }
    }
    Ok(s)
}

/// Scalar convenience wrapper around [`combine_kn`].
pub fn combine_kn_scalar(values: &[f64], schedule: &UpdateSchedule) -> Result<f64> {
    let first = *values
        .first()
        .ok_or_else(|| crate::SpocError::Domain("combine_kn needs at least one value".into()))?;
    let mut s = first;
    for (i, &x) in values.iter().enumerate().skip(1) {
        s += schedule.alpha(i + 1)? * (x - s);
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::weight_sequence;

    #[test]
    fn kn_constant_is_fixed_point() {
        let g = UpdateSchedule::geometric(0.7, 100).unwrap();
        let v = vec![2.5; 50];
        assert_eq!(combine_kn_scalar(&v, &g).unwrap(), 2.5);
    }

    #[test]
    fn kn_harmonic_is_mean() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64).sqrt()).collect();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let h = UpdateSchedule::harmonic(1000);
        assert!((combine_kn_scalar(&v, &h).unwrap() - mean).abs() < 1e-12);
    }

    #[test]
    fn kn_geometric_matches_weight_formula() {
        let g = UpdateSchedule::geometric(0.8, 100).unwrap();
        for n in 1..=30 {
            let v: Vec<f64> = (0..n).map(|i| (i as f64 * 1.3).cos()).collect();
            let w = weight_sequence(&g, n).unwrap();
            let direct = w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>();
            assert!((combine_kn_scalar(&v, &g).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn kn_vectors() {
        let h = UpdateSchedule::harmonic(3);
        let v: Vec<Vec<f64>> = vec![vec![1.0, 0.0], vec![3.0, 2.0], vec![5.0, 4.0]];
        let s = combine_kn(&v, &h).unwrap();
        assert!((s[0] - 3.0).abs() < 1e-15 && (s[1] - 2.0).abs() < 1e-15);
        assert!(combine_kn::<f64>(&[], &h).is_err());
    }
}
