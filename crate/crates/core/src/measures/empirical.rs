use serde::{Deserialize, Serialize};

use crate::error::{Result, SpocError};
use crate::real::{norm_sq, Real};

/// Normalized weights below this are dropped at renormalization.
pub const PRUNE_THRESHOLD: f64 = 1e-15;

/// Default number of updates between exact renormalizations.
pub const DEFAULT_RENORMALIZE_EVERY: usize = 4096;

/// Finite weighted point measure on `R^dim`.
///
/// Weights are stored unnormalized together with their running total, so
/// absorbing a new atom with rate `alpha` is `O(1)`: the new raw weight is
/// `alpha * total / (1 - alpha)`, which scales every existing weight by
/// `1 - alpha` after normalization. The total is recomputed exactly and tiny
/// weights are pruned every `renormalize_every` updates, or earlier if the
/// total grows too large.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedEmpirical<T> {
    dim: usize,
    atoms: Vec<T>,
    raw: Vec<T>,
    total: T,
    updates: usize,
    renormalize_every: usize,
    pruned_mass: f64,
}

/// Mean, raw second moment and optionally higher raw moments of `|X|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats<T> {
    pub mean: Vec<T>,
    /// `E|X|^2`.
    pub second_moment: T,
    /// `E|X|^k` for `k = 3..=order`; empty when only the first two are tracked.
    pub higher: Vec<T>,
}

fn weight_tolerance<T: Real>() -> T {
    T::of(1e-12).max(T::epsilon() * T::of(64.0))
}

fn rescale_limit<T: Real>() -> T {
    T::max_value().sqrt()
}

impl<T: Real> WeightedEmpirical<T> {
    /// Builds a measure from flat `atoms` (`n * dim` values) and non-negative
    /// weights. Weights are normalized and zero-weight atoms are pruned.
    pub fn new(dim: usize, atoms: Vec<T>, weights: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(SpocError::Domain("dimension must be positive".into()));
        }
        if atoms.len() != weights.len() * dim {
            return Err(SpocError::DimensionMismatch {
                expected: weights.len() * dim,
                got: atoms.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(SpocError::Domain("weights must be finite and non-negative".into()));
        }
        if atoms.iter().any(|a| !a.is_finite()) {
            return Err(SpocError::Domain("atoms must be finite".into()));
        }
        let mut kept_atoms = Vec::with_capacity(atoms.len());
        let mut kept = Vec::with_capacity(weights.len());
        for (i, &w) in weights.iter().enumerate() {
            if w > T::zero() {
                kept_atoms.extend_from_slice(&atoms[i * dim..(i + 1) * dim]);
                kept.push(w);
            }
        }
        if kept.is_empty() {
            return Err(SpocError::Domain("a measure needs at least one atom with positive weight".into()));
        }
        let total: T = kept.iter().copied().sum();
        let raw = kept.into_iter().map(|w| w / total).collect();
        Ok(Self {
            dim,
            atoms: kept_atoms,
            raw,
            total: T::one(),
            updates: 0,
            renormalize_every: DEFAULT_RENORMALIZE_EVERY,
            pruned_mass: 0.0,
        })
    }

    pub fn dirac(x: &[T]) -> Result<Self> {
        Self::new(x.len(), x.to_vec(), vec![T::one()])
    }

    /// Equal weights on every atom.
    pub fn uniform(dim: usize, atoms: Vec<T>) -> Result<Self> {
        let n = if dim == 0 { 0 } else { atoms.len() / dim };
        Self::new(dim, atoms, vec![T::one(); n])
    }

    /// One-dimensional measure from points and weights.
    pub fn from_points(points: &[T], weights: &[T]) -> Result<Self> {
        Self::new(1, points.to_vec(), weights.to_vec())
    }

    pub fn with_renormalize_every(mut self, k: usize) -> Self {
        self.renormalize_every = k.max(1);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[T] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    /// Flat `len * dim` atom storage.
    pub fn atoms(&self) -> &[T] {
        &self.atoms
    }

    #[inline]
    pub fn weight(&self, i: usize) -> T {
        self.raw[i] / self.total
    }

    pub fn weights(&self) -> Vec<T> {
        self.raw.iter().map(|&w| w / self.total).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[T], T)> + '_ {
        self.atoms
            .chunks_exact(self.dim)
            .zip(self.raw.iter().map(move |&w| w / self.total))
    }

    /// Mass removed by pruning since construction.
    pub fn pruned_mass(&self) -> f64 {
        self.pruned_mass
    }

    /// Number of updates absorbed so far.
    pub fn updates(&self) -> usize {
        self.updates
    }

    /// `mu + alpha (delta_x - mu)` as a new value.
    pub fn update(&self, x: &[T], alpha: T) -> Result<Self> {
        let mut out = self.clone();
        out.absorb(x, alpha)?;
        Ok(out)
    }

    /// In-place `mu <- mu + alpha (delta_x - mu)`.
    pub fn absorb(&mut self, x: &[T], alpha: T) -> Result<()> {
        self.absorb_batch(x, alpha)
    }

    /// In-place `mu <- mu + alpha (1/k sum_i delta_{x_i} - mu)` where `xs`
    /// holds `k` points back to back.
    pub fn absorb_batch(&mut self, xs: &[T], alpha: T) -> Result<()> {
        if xs.is_empty() || xs.len() % self.dim != 0 {
            return Err(SpocError::DimensionMismatch {
                expected: self.dim,
                got: xs.len(),
            });
        }
        if !(alpha > T::zero() && alpha <= T::one()) {
            return Err(SpocError::Domain(format!("update rate {alpha} outside (0, 1]")));
        }
        let k = xs.len() / self.dim;
        let kf = T::from_usize(k).expect("batch size fits the scalar type");
        self.updates += 1;
        if alpha == T::one() {
            self.atoms.clear();
            self.atoms.extend_from_slice(xs);
            self.raw.clear();
            self.raw.resize(k, T::one() / kf);
            self.total = T::one();
            return Ok(());
        }
        let each = alpha * self.total / ((T::one() - alpha) * kf);
        self.atoms.extend_from_slice(xs);
        for _ in 0..k {
            self.raw.push(each);
        }
        self.total += each * kf;
        if self.updates % self.renormalize_every == 0 || self.total > rescale_limit::<T>() {
            self.renormalize();
        }
        Ok(())
    }

    /// Recomputes the total exactly, prunes atoms whose normalized weight fell
    /// below [`PRUNE_THRESHOLD`] and rescales raw weights to sum to one.
    pub fn renormalize(&mut self) {
        let total: T = self.raw.iter().copied().sum();
        let cut = T::of(PRUNE_THRESHOLD) * total;
        if self.raw.iter().any(|&w| w < cut) {
            let dim = self.dim;
            let mut w_out = 0;
            let mut pruned = T::zero();
            for r in 0..self.raw.len() {
                let w = self.raw[r];
                if w < cut {
                    pruned += w;
                    continue;
                }
                self.raw[w_out] = w;
                if w_out != r {
                    self.atoms.copy_within(r * dim..(r + 1) * dim, w_out * dim);
                }
                w_out += 1;
            }
            self.raw.truncate(w_out);
            self.atoms.truncate(w_out * dim);
            self.pruned_mass += (pruned / total).as_f64();
        }
        let kept: T = self.raw.iter().copied().sum();
        for w in self.raw.iter_mut() {
            *w /= kept;
        }
        self.total = T::one();
    }

    /// Sum of normalized weights; one up to rounding.
    pub fn total_mass(&self) -> T {
        self.raw.iter().copied().sum::<T>() / self.total
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.raw.is_empty() || self.atoms.len() != self.raw.len() * self.dim {
            return Err(SpocError::Numeric("atom/weight length mismatch".into()));
        }
        if self.raw.iter().any(|&w| !(w > T::zero())) {
            return Err(SpocError::Numeric("non-positive weight".into()));
        }
        let dev = (self.total_mass() - T::one()).abs();
        if dev > weight_tolerance::<T>() {
            return Err(SpocError::Numeric(format!("weights sum deviates from one by {dev}")));
        }
        Ok(())
    }

    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.dim];
        for (x, w) in self.iter() {
            for (mi, &xi) in m.iter_mut().zip(x) {
                *mi += w * xi;
            }
        }
        m
    }

    /// Weighted raw moment `sum_i w_i |x_i|^p`.
    pub fn moment(&self, p: u32) -> Result<T> {
        if p == 0 {
            return Err(SpocError::Domain("moment order must be at least 1".into()));
        }
        Ok(self
            .iter()
            .map(|(x, w)| {
                let r2 = norm_sq(x);
                let r = if p % 2 == 0 { r2.powi(p as i32 / 2) } else { r2.sqrt().powi(p as i32) };
                w * r
            })
            .sum())
    }

    /// Sufficient statistics up to raw moment `order` (at least 2).
    pub fn summary(&self, order: u32) -> SummaryStats<T> {
        let higher = (3..=order).map(|p| self.moment(p).expect("p >= 3")).collect();
        SummaryStats {
            mean: self.mean(),
            second_moment: self.moment(2).expect("p = 2"),
            higher,
        }
    }

    /// One-dimensional projection `x -> <x, u>`.
    pub fn project(&self, direction: &[T]) -> Result<WeightedEmpirical<T>> {
        if direction.len() != self.dim {
            return Err(SpocError::DimensionMismatch {
                expected: self.dim,
                got: direction.len(),
            });
        }
        let pts = self
            .atoms
            .chunks_exact(self.dim)
            .map(|x| x.iter().zip(direction).fold(T::zero(), |a, (&p, &q)| a + p * q))
            .collect();
        Ok(WeightedEmpirical {
            dim: 1,
            atoms: pts,
            raw: self.raw.clone(),
            total: self.total,
            updates: self.updates,
            renormalize_every: self.renormalize_every,
            pruned_mass: self.pruned_mass,
        })
    }

    /// Keeps every `stride`-th atom (starting at the first) and renormalizes.
    pub fn thin(&self, stride: usize) -> Result<Self> {
        let stride = stride.max(1);
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (i, (x, w)) in self.iter().enumerate() {
            if i % stride == 0 {
                atoms.extend_from_slice(x);
                weights.push(w);
            }
        }
        Self::new(self.dim, atoms, weights)
    }
}

impl<T: Real> SummaryStats<T> {
    pub fn dirac(x: &[T]) -> Self {
        Self {
            mean: x.to_vec(),
            second_moment: norm_sq(x),
            higher: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Running `K_n` update with a single point.
    pub fn absorb(&mut self, x: &[T], alpha: T) {
        self.absorb_batch(x, alpha)
    }

    /// Running `K_n` update with the average of a batch of points.
    ///
    /// With `alpha = 1` the statistics are replaced outright so that the first
    /// particle reproduces `delta_x` exactly.
    pub fn absorb_batch(&mut self, xs: &[T], alpha: T) {
        let dim = self.mean.len();
        let k = xs.len() / dim;
        let kf = T::from_usize(k).expect("batch size fits the scalar type");
        let mut bmean = vec![T::zero(); dim];
        let mut bsecond = T::zero();
        for x in xs.chunks_exact(dim) {
            for (b, &xi) in bmean.iter_mut().zip(x) {
                *b += xi;
            }
            bsecond += norm_sq(x);
        }
        for b in bmean.iter_mut() {
            *b /= kf;
        }
        bsecond /= kf;
        if alpha == T::one() {
            self.mean = bmean;
            self.second_moment = bsecond;
            return;
        }
        for (m, b) in self.mean.iter_mut().zip(&bmean) {
            *m += alpha * (*b - *m);
        }
        self.second_moment += alpha * (bsecond - self.second_moment);
    }

    /// Sample variance proxy `E|X|^2 - |E X|^2`, clamped at zero.
    pub fn variance(&self) -> T {
        (self.second_moment - norm_sq(&self.mean)).max(T::zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::UpdateSchedule;
    use proptest::prelude::*;

    #[test]
    fn update_replaces_with_unit_rate() {
        let mu = WeightedEmpirical::<f64>::dirac(&[0.0]).unwrap();
        let nu = mu.update(&[1.0], 1.0).unwrap();
        assert_eq!(nu.len(), 1);
        assert_eq!(nu.atom(0), &[1.0]);
        assert_eq!(nu.weight(0), 1.0);
    }

    #[test]
    fn update_half() {
        let mu = WeightedEmpirical::<f64>::dirac(&[0.0]).unwrap();
        let nu = mu.update(&[1.0], 0.5).unwrap();
        assert_eq!(nu.atoms(), &[0.0, 1.0]);
        assert_eq!(nu.weights(), vec![0.5, 0.5]);
        // The original is untouched.
        assert_eq!(mu.len(), 1);
    }

    #[test]
    fn harmonic_updates_give_uniform_weights() {
        let xs: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin()).collect();
        let h = UpdateSchedule::harmonic(500);
        let mut mu = WeightedEmpirical::dirac(&xs[..1]).unwrap();
        for (i, x) in xs.iter().enumerate().skip(1) {
            mu.absorb(&[*x], h.alpha(i + 1).unwrap()).unwrap();
        }
        let direct = WeightedEmpirical::uniform(1, xs.clone()).unwrap();
        for i in 0..xs.len() {
            assert!((mu.weight(i) - direct.weight(i)).abs() < 1e-12 / 500.0 + 1e-15);
        }
        assert!((mu.mean()[0] - direct.mean()[0]).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut mu = WeightedEmpirical::<f64>::dirac(&[0.0, 0.0]).unwrap();
        assert!(matches!(
            mu.absorb(&[1.0, 2.0, 3.0], 0.5),
            Err(SpocError::DimensionMismatch { .. })
        ));
        assert!(WeightedEmpirical::<f64>::new(2, vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn construction_prunes_zero_weights() {
        let mu = WeightedEmpirical::<f64>::from_points(&[1.0, 2.0, 3.0], &[0.0, 2.0, 2.0]).unwrap();
        assert_eq!(mu.len(), 2);
        assert_eq!(mu.weights(), vec![0.5, 0.5]);
        assert!(WeightedEmpirical::<f64>::from_points(&[1.0], &[0.0]).is_err());
        assert!(WeightedEmpirical::<f64>::from_points(&[1.0], &[-1.0]).is_err());
    }

    #[test]
    fn moments() {
        let d = WeightedEmpirical::<f64>::dirac(&[3.0]).unwrap();
        assert_eq!(d.moment(2).unwrap(), 9.0);
        let s = WeightedEmpirical::<f64>::uniform(1, vec![-1.0, 1.0]).unwrap();
        assert_eq!(s.mean(), vec![0.0]);
        assert!(d.moment(0).is_err());
    }

    #[test]
    fn moment_matches_direct_sum() {
        let mut s = crate::rng::StreamKey::new(3, 0, crate::rng::Purpose::Iid).stream(0);
        let atoms: Vec<f64> = (0..40).map(|_| s.normal()).collect();
        let weights: Vec<f64> = (0..20).map(|_| s.normal().abs() + 0.1).collect();
        let mu = WeightedEmpirical::new(2, atoms.clone(), weights.clone()).unwrap();
        let total: f64 = weights.iter().sum();
        for p in 1..=4u32 {
            let direct: f64 = (0..20)
                .map(|i| {
                    let r = (atoms[2 * i].powi(2) + atoms[2 * i + 1].powi(2)).sqrt();
                    weights[i] / total * r.powi(p as i32)
                })
                .sum();
            assert!((mu.moment(p).unwrap() - direct).abs() < 1e-12 * direct.max(1.0));
        }
    }

    #[test]
    fn geometric_schedule_prunes_old_atoms() {
        let g = UpdateSchedule::geometric(0.9, 10_000).unwrap();
        let mut mu = WeightedEmpirical::<f64>::dirac(&[0.0]).unwrap().with_renormalize_every(64);
        for n in 2..=5000 {
            mu.absorb(&[n as f64], g.alpha(n).unwrap()).unwrap();
        }
        mu.check_invariants().unwrap();
        // alpha_n underflows towards zero, so late atoms carry negligible
        // weight and are the ones being dropped; the early atoms survive.
        assert!(mu.len() < 5000);
        assert!(mu.pruned_mass() < 1e-10);
    }

    #[test]
    fn million_updates_keep_unit_mass() {
        let p = UpdateSchedule::power_law(0.6, 1_000_001).unwrap();
        let mut mu = WeightedEmpirical::<f64>::dirac(&[0.0]).unwrap();
        for n in 2..=1_000_000usize {
            mu.absorb(&[(n % 17) as f64], p.alpha(n).unwrap()).unwrap();
        }
        mu.check_invariants().unwrap();
        let s: f64 = mu.weights().iter().sum();
        assert!((s - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn summary_cauchy_schwarz() {
        let mu = WeightedEmpirical::<f64>::new(2, vec![1.0, 2.0, -3.0, 0.5, 0.0, 4.0], vec![0.2, 0.3, 0.5])
            .unwrap();
        let s = mu.summary(4);
        assert!(s.second_moment + 1e-12 >= norm_sq(&s.mean));
        assert_eq!(s.higher.len(), 2);
    }

    #[test]
    fn running_summary_matches_measure() {
        let h = UpdateSchedule::power_law(0.7, 100).unwrap();
        let mut mu = WeightedEmpirical::<f64>::dirac(&[0.5, -1.0]).unwrap();
        let mut s = SummaryStats::dirac(&[0.5, -1.0]);
        for n in 2..=100 {
            let x = [(n as f64).cos(), (n as f64 * 0.3).sin()];
            let a = h.alpha(n).unwrap();
            mu.absorb(&x, a).unwrap();
            s.absorb(&x, a);
        }
        let direct = mu.summary(2);
        for (a, b) in s.mean.iter().zip(&direct.mean) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((s.second_moment - direct.second_moment).abs() < 1e-12);
    }

    #[test]
    fn f32_measures_work() {
        let mut mu = WeightedEmpirical::<f32>::dirac(&[1.0]).unwrap();
        for n in 2..=1000 {
            mu.absorb(&[n as f32], 1.0 / n as f32).unwrap();
        }
        mu.check_invariants().unwrap();
        assert!((mu.mean()[0] - 500.5).abs() < 0.05);
    }

    proptest! {
        #[test]
        fn summary_second_moment_dominates(
            pts in proptest::collection::vec(-10.0f64..10.0, 2..40),
            seed in 0u64..1000,
        ) {
            let n = pts.len() / 2;
            let mut s = crate::rng::StreamKey::new(seed, 0, crate::rng::Purpose::Iid).stream(0);
            let w: Vec<f64> = (0..n).map(|_| s.normal().abs() + 1e-3).collect();
            let mu = WeightedEmpirical::new(2, pts[..2 * n].to_vec(), w).unwrap();
            let st = mu.summary(2);
            prop_assert!(st.second_moment - norm_sq(&st.mean) >= -1e-12);
            mu.check_invariants().unwrap();
        }
    }
}
