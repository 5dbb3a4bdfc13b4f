//! Update-rate schedules `alpha_n` and the quantities derived from them.
//!
//! A schedule is a non-increasing positive sequence with `alpha_1 = 1`. It
//! drives the recursive weighted average `s_n = s_{n-1} + alpha_n (x_n - s_{n-1})`
//! that every measure in this crate is built from.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpocError};

/// Closed-form family of the rate sequence.
///
/// Serialized as `{"kind": "harmonic" | "power_law" | "geometric" | "explicit", ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleKind {
    /// `alpha_n = 1/n`, the uniform empirical measure.
    Harmonic,
    /// `alpha_n = n^{-r}`, `r` in `(0, 1]`.
    PowerLaw { r: f64 },
    /// `alpha_n = q^{n-1}`, `q` in `(0, 1)`.
    Geometric { q: f64 },
    /// Tabulated values, `values[0]` is `alpha_1`.
    Explicit { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateSchedule {
    kind: ScheduleKind,
    max_n: usize,
}

/// Which rate regime of the finite-horizon estimate a schedule falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `abar < 1/gamma ∧ (2 - alpha_inf)`: error of order `alpha_n^gamma`.
    RateAlphaGamma,
    /// `1/gamma <= abar < 2 - alpha_inf`: error of order `prod (1 - delta alpha_i)`.
    RateProduct,
    /// `abar >= 2`: product rate with `delta < 1 ∧ aunder*gamma ∧ 2*gamma`.
    RateProductFast,
    /// `2 - alpha_inf <= abar < 2`. Impossible in the limit, but finite-window
    /// estimates can land here.
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDiagnostics {
    pub alpha_inf_est: f64,
    pub abar_est: f64,
    pub aunder_est: f64,
    pub gamma: f64,
    pub window: usize,
    pub regime: Regime,
}

/// Output of [`recursive_bound_probe`].
#[derive(Debug, Clone, PartialEq)]
pub struct RecursiveProbe {
    /// `s_1..s_N`.
    pub s: Vec<f64>,
    /// `A_1..A_N`.
    pub a: Vec<f64>,
    /// `B_1..B_N`.
    pub b: Vec<f64>,
    pub ratio_to_a: Vec<f64>,
    pub ratio_to_b: Vec<f64>,
}

impl UpdateSchedule {
    pub fn new(kind: ScheduleKind, max_n: usize) -> Result<Self> {
        if max_n == 0 {
            return Err(SpocError::InvalidSchedule("max_n must be positive".into()));
        }
        match &kind {
            ScheduleKind::Harmonic => {}
            ScheduleKind::PowerLaw { r } => {
                if !(*r > 0.0 && *r <= 1.0) {
                    return Err(SpocError::InvalidSchedule(format!(
                        "power-law exponent r = {r} outside (0, 1]"
                    )));
                }
            }
            ScheduleKind::Geometric { q } => {
                if !(*q > 0.0 && *q < 1.0) {
                    return Err(SpocError::InvalidSchedule(format!(
                        "geometric ratio q = {q} outside (0, 1)"
                    )));
                }
            }
            ScheduleKind::Explicit { values } => validate_explicit(values)?,
        }
        let max_n = match &kind {
            ScheduleKind::Explicit { values } => max_n.min(values.len()),
            _ => max_n,
        };
        Ok(Self { kind, max_n })
    }

    pub fn harmonic(max_n: usize) -> Self {
        Self::new(ScheduleKind::Harmonic, max_n).expect("harmonic schedule is always valid")
    }

    pub fn power_law(r: f64, max_n: usize) -> Result<Self> {
        Self::new(ScheduleKind::PowerLaw { r }, max_n)
    }

    pub fn geometric(q: f64, max_n: usize) -> Result<Self> {
        Self::new(ScheduleKind::Geometric { q }, max_n)
    }

    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::new(ScheduleKind::Explicit { values }, n.max(1))
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    /// Same schedule with a different precomputation cap.
    pub fn with_max_n(&self, max_n: usize) -> Result<Self> {
        Self::new(self.kind.clone(), max_n)
    }

    /// `alpha_n` for `n >= 1`.
    pub fn alpha(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(SpocError::Domain("schedule index starts at 1".into()));
        }
        Ok(match &self.kind {
            ScheduleKind::Harmonic => 1.0 / n as f64,
            ScheduleKind::PowerLaw { r } => (n as f64).powf(-r),
            // Clamped so the sequence stays strictly positive past f64 underflow.
            ScheduleKind::Geometric { q } => q.powf((n - 1) as f64).max(f64::MIN_POSITIVE),
            ScheduleKind::Explicit { values } => *values.get(n - 1).ok_or_else(|| {
                SpocError::Domain(format!(
                    "index {n} beyond explicit schedule of length {}",
                    values.len()
                ))
            })?,
        })
    }

    /// `alpha_1..alpha_n` as a vector.
    pub fn alphas(&self, n: usize) -> Result<Vec<f64>> {
        (1..=n).map(|i| self.alpha(i)).collect()
    }

    /// `(alpha_n - alpha_{n+1}) / alpha_n^2`, in closed form where it is
    /// available so that the geometric tail does not degenerate to `0/0`.
    fn increment_ratio(&self, n: usize) -> Result<f64> {
        Ok(match &self.kind {
            ScheduleKind::Harmonic => n as f64 / (n as f64 + 1.0),
            ScheduleKind::Geometric { q } => (1.0 - q) * q.powf(-((n - 1) as f64)),
            _ => {
                let a = self.alpha(n)?;
                let b = self.alpha(n + 1)?;
                (a - b) / (a * a)
            }
        })
    }
}

fn validate_explicit(values: &[f64]) -> Result<()> {
    let first = values
        .first()
        .ok_or_else(|| SpocError::InvalidSchedule("explicit schedule is empty".into()))?;
    if *first != 1.0 {
        return Err(SpocError::InvalidSchedule(format!(
            "alpha_1 must be exactly 1, got {first}"
        )));
    }
    for (i, w) in values.windows(2).enumerate() {
        if !(w[1] > 0.0) || !w[1].is_finite() {
            return Err(SpocError::InvalidSchedule(format!(
                "alpha_{} = {} is not strictly positive",
                i + 2,
                w[1]
            )));
        }
        if w[1] > w[0] {
            return Err(SpocError::InvalidSchedule(format!(
                "schedule increases at index {}: {} > {}",
                i + 2,
                w[1],
                w[0]
            )));
        }
    }
    Ok(())
}

/// `theta_1..theta_N` where `theta_n = sum w_i^2 / (sum w_i)^2`.
///
/// Computed through `theta_n = (1 - alpha_n)^2 theta_{n-1} + alpha_n^2`,
/// which never forms the (possibly overflowing) raw weights.
pub fn theta_sequence(schedule: &UpdateSchedule, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(SpocError::Domain("theta_sequence needs N >= 1".into()));
    }
    let mut out = Vec::with_capacity(n);
    let mut theta = 1.0;
    out.push(theta);
    for i in 2..=n {
        let a = schedule.alpha(i)?;
        let keep = 1.0 - a;
        theta = keep * keep * theta + a * a;
        out.push(theta);
    }
    Ok(out)
}

/// Raw weights `w_1 = 1`, `w_n = alpha_n prod_{i=2}^n (1 - alpha_i)^{-1}`.
///
/// Built from the running total, `w_n = alpha_n S_{n-1} / (1 - alpha_n)`.
/// Any `alpha_i = 1` with `i >= 2` is a [`SpocError::SingularSchedule`].
pub fn weight_sequence(schedule: &UpdateSchedule, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(SpocError::Domain("weight_sequence needs N >= 1".into()));
    }
    let mut out = Vec::with_capacity(n);
    out.push(1.0);
    let mut total = 1.0;
    for i in 2..=n {
        let a = schedule.alpha(i)?;
        if a >= 1.0 {
            return Err(SpocError::SingularSchedule { index: i });
        }
        let w = a * total / (1.0 - a);
        if !w.is_finite() {
            return Err(SpocError::Numeric(format!(
                "raw weight w_{i} overflows; use normalized_weights instead"
            )));
        }
        total += w;
        out.push(w);
    }
    Ok(out)
}

/// Weights of particles `1..=n` inside the measure after `n` updates:
/// `p_i = alpha_i prod_{j=i+1}^n (1 - alpha_j)`. Sums to one and is defined
/// for every valid schedule, including ones with `alpha_i = 1`.
pub fn normalized_weights(schedule: &UpdateSchedule, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(SpocError::Domain("normalized_weights needs N >= 1".into()));
    }
    let alphas = schedule.alphas(n)?;
    let mut out = vec![0.0; n];
    let mut tail = 1.0;
    for i in (0..n).rev() {
        out[i] = alphas[i] * tail;
        tail *= 1.0 - alphas[i];
    }
    Ok(out)
}

/// `prod_{i=1}^N (1 - delta alpha_i 1{delta alpha_i < 1})`.
///
/// Switches to log-space accumulation as soon as a factor drops below `1e-8`.
pub fn decay_product(schedule: &UpdateSchedule, delta: f64, n: usize) -> Result<f64> {
    Ok(log_decay_product(schedule, delta, n)?.exp_or_direct())
}

/// Either a directly accumulated product or its logarithm.
#[derive(Debug, Clone, Copy)]
pub enum Product {
    Direct(f64),
    Log(f64),
}

impl Product {
    fn exp_or_direct(self) -> f64 {
        match self {
            Product::Direct(v) => v,
            Product::Log(l) => l.exp(),
        }
    }

    pub fn ln(self) -> f64 {
        match self {
            Product::Direct(v) => v.ln(),
            Product::Log(l) => l,
        }
    }
}

pub fn log_decay_product(schedule: &UpdateSchedule, delta: f64, n: usize) -> Result<Product> {
    let mut direct = 1.0_f64;
    let mut log_sum: Option<f64> = None;
    for i in 1..=n {
        let x = delta * schedule.alpha(i)?;
        if x >= 1.0 {
            continue;
        }
        let factor = 1.0 - x;
        match log_sum.as_mut() {
            Some(l) => *l += (-x).ln_1p(),
            None if factor < 1e-8 => log_sum = Some(direct.ln() + (-x).ln_1p()),
            None => direct *= factor,
        }
    }
    Ok(match log_sum {
        Some(l) => Product::Log(l),
        None => Product::Direct(direct),
    })
}

/// Tail estimates of `alpha_inf`, `abar`, `aunder` and the resulting regime.
///
/// `window` of `0` means the default of 10% of `max_n`. The sup/inf over a
/// finite window is a heuristic proxy for the limsup/liminf.
pub fn schedule_diagnostics(
    schedule: &UpdateSchedule,
    gamma: f64,
    window: usize,
) -> Result<ScheduleDiagnostics> {
    let max_n = schedule.max_n();
    let window = if window == 0 { (max_n / 10).max(1) } else { window };
    if window >= max_n {
        return Err(SpocError::Domain(format!(
            "window {window} must be smaller than max_n {max_n}"
        )));
    }
    if !(gamma > 0.0) {
        return Err(SpocError::Domain(format!("gamma must be positive, got {gamma}")));
    }
    // Explicit schedules have no alpha_{max_n + 1}; stop one earlier.
    let last = match schedule.kind() {
        ScheduleKind::Explicit { .. } => max_n - 1,
        _ => max_n,
    };
    let first = last + 1 - window;
    let mut abar = f64::NEG_INFINITY;
    let mut aunder = f64::INFINITY;
    for n in first.max(1)..=last {
        let r = schedule.increment_ratio(n)?;
        abar = abar.max(r);
        aunder = aunder.min(r);
    }
    let alpha_inf_est = schedule.alpha(max_n)?;
    Ok(ScheduleDiagnostics {
        alpha_inf_est,
        abar_est: abar,
        aunder_est: aunder,
        gamma,
        window,
        regime: classify_regime(abar, alpha_inf_est, gamma),
    })
}

/// Pure regime classification from the tail estimates.
pub fn classify_regime(abar: f64, alpha_inf: f64, gamma: f64) -> Regime {
    let cap = 2.0 - alpha_inf;
    if abar < (1.0 / gamma).min(cap) {
        Regime::RateAlphaGamma
    } else if abar < cap {
        Regime::RateProduct
    } else if abar >= 2.0 {
        Regime::RateProductFast
    } else {
        Regime::Boundary
    }
}

/// Iterates `s_n = (1 - eps alpha_n) s_{n-1} + alpha_n B_n` with
/// `A_n = prod (1 - eps alpha_i)`, `B_n = prod (1 - eps beta_i)`, `A_0 = B_0 = 1`.
pub fn recursive_bound_probe(
    alpha: &[f64],
    beta: &[f64],
    eps: f64,
    s0: f64,
    n: usize,
) -> Result<RecursiveProbe> {
    recursive_bound_probe_scaled(alpha, beta, eps, s0, 1.0, n)
}

/// As [`recursive_bound_probe`] with an arbitrary `B_0 >= 0`.
pub fn recursive_bound_probe_scaled(
    alpha: &[f64],
    beta: &[f64],
    eps: f64,
    s0: f64,
    b0: f64,
    n: usize,
) -> Result<RecursiveProbe> {
    if alpha.len() < n || beta.len() < n {
        return Err(SpocError::Domain(format!(
            "sequences shorter than N = {n}"
        )));
    }
    if !(s0 >= 0.0) || !(b0 >= 0.0) {
        return Err(SpocError::Domain("s0 and B_0 must be non-negative".into()));
    }
    for (i, (&a, &b)) in alpha[..n].iter().zip(&beta[..n]).enumerate() {
        let (ea, eb) = (eps * a, eps * b);
        if !(ea > 0.0 && ea < 1.0 && eb > 0.0 && eb < 1.0) {
            return Err(SpocError::Domain(format!(
                "eps * alpha_{0} = {ea} or eps * beta_{0} = {eb} outside (0, 1)",
                i + 1
            )));
        }
    }
    let mut out = RecursiveProbe {
        s: Vec::with_capacity(n),
        a: Vec::with_capacity(n),
        b: Vec::with_capacity(n),
        ratio_to_a: Vec::with_capacity(n),
        ratio_to_b: Vec::with_capacity(n),
    };
    let (mut s, mut a_n, mut b_n) = (s0, 1.0, b0);
    for i in 0..n {
        a_n *= 1.0 - eps * alpha[i];
        b_n *= 1.0 - eps * beta[i];
        s = (1.0 - eps * alpha[i]) * s + alpha[i] * b_n;
        out.s.push(s);
        out.a.push(a_n);
        out.b.push(b_n);
        out.ratio_to_a.push(s / a_n);
        out.ratio_to_b.push(if b_n > 0.0 { s / b_n } else { 0.0 });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn alpha_closed_forms() {
        assert_eq!(UpdateSchedule::harmonic(10).alpha(4).unwrap(), 0.25);
        let p = UpdateSchedule::power_law(0.5, 100).unwrap();
        assert_relative_eq!(p.alpha(9).unwrap(), 1.0 / 3.0, max_relative = 1e-15);
        let g = UpdateSchedule::geometric(0.5, 100).unwrap();
        assert_eq!(g.alpha(3).unwrap(), 0.25);
        for s in [&p, &g] {
            assert_eq!(s.alpha(1).unwrap(), 1.0);
        }
    }

    #[test]
    fn alpha_domain_errors() {
        let h = UpdateSchedule::harmonic(10);
        assert!(matches!(h.alpha(0), Err(SpocError::Domain(_))));
        let e = UpdateSchedule::explicit(vec![1.0, 0.5]).unwrap();
        assert!(matches!(e.alpha(3), Err(SpocError::Domain(_))));
    }

    #[test]
    fn explicit_validation() {
        assert!(UpdateSchedule::explicit(vec![0.9, 0.5]).is_err());
        assert!(UpdateSchedule::explicit(vec![1.0, 0.5, 0.6]).is_err());
        assert!(UpdateSchedule::explicit(vec![1.0, 0.0]).is_err());
        assert!(UpdateSchedule::explicit(vec![]).is_err());
        // alpha_i = 1 past the first index is legal for simulation ...
        let ones = UpdateSchedule::explicit(vec![1.0, 1.0, 0.5]).unwrap();
        // ... but singular for the product-form weights.
        assert!(matches!(
            weight_sequence(&ones, 3),
            Err(SpocError::SingularSchedule { index: 2 })
        ));
        assert!(normalized_weights(&ones, 3).is_ok());
        assert!(UpdateSchedule::power_law(0.0, 10).is_err());
        assert!(UpdateSchedule::power_law(1.5, 10).is_err());
        assert!(UpdateSchedule::geometric(1.0, 10).is_err());
    }

    /// Direct oracle: theta from raw weights.
    fn theta_direct(w: &[f64]) -> f64 {
        let s: f64 = w.iter().sum();
        let s2: f64 = w.iter().map(|x| x * x).sum();
        s2 / (s * s)
    }

    #[test]
    fn theta_harmonic_is_one_over_n() {
        let th = theta_sequence(&UpdateSchedule::harmonic(5), 5).unwrap();
        let w = weight_sequence(&UpdateSchedule::harmonic(5), 5).unwrap();
        for x in &w {
            assert_relative_eq!(*x, 1.0, max_relative = 1e-15);
        }
        for (i, t) in th.iter().enumerate() {
            assert_relative_eq!(*t, 1.0 / (i + 1) as f64, max_relative = 1e-15);
            assert_relative_eq!(*t, theta_direct(&w[..=i]), max_relative = 1e-15);
        }
    }

    #[test]
    fn theta_single_particle() {
        let s = UpdateSchedule::explicit(vec![1.0]).unwrap();
        assert_eq!(theta_sequence(&s, 1).unwrap(), vec![1.0]);
    }

    #[test]
    fn theta_geometric_plateaus() {
        let s = UpdateSchedule::geometric(0.5, 1000).unwrap();
        let th = theta_sequence(&s, 500).unwrap();
        for t in &th[49..] {
            assert!(*t >= 0.1, "theta = {t}");
        }
        // Converged: tail is flat.
        assert_relative_eq!(th[499], th[99], max_relative = 1e-12);
    }

    #[test]
    fn weight_examples() {
        let p = UpdateSchedule::power_law(0.5, 10).unwrap();
        let w = weight_sequence(&p, 2).unwrap();
        let a = 2f64.powf(-0.5);
        assert_eq!(w[0], 1.0);
        assert_relative_eq!(w[1], a / (1.0 - a), max_relative = 1e-14);
        assert_eq!(weight_sequence(&UpdateSchedule::harmonic(3), 1).unwrap(), vec![1.0]);
    }

    #[test]
    fn decay_product_examples() {
        let h = UpdateSchedule::harmonic(100);
        assert_relative_eq!(decay_product(&h, 0.5, 2).unwrap(), 0.375, max_relative = 1e-15);
        assert_relative_eq!(decay_product(&h, 2.0, 3).unwrap(), 1.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn decay_product_harmonic_slope() {
        // prod (1 - delta/i) ~ C n^{-delta}; fit on a log grid.
        let h = UpdateSchedule::harmonic(1 << 20);
        let ns: Vec<usize> = (10..=20).map(|k| 1usize << k).collect();
        let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = ns
            .iter()
            .map(|&n| log_decay_product(&h, 0.5, n).unwrap().ln())
            .collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((slope + 0.5).abs() < 0.02, "slope = {slope}");
    }

    #[test]
    fn log_space_switch_matches_direct() {
        let e = UpdateSchedule::explicit(vec![1.0, 0.999_999_999_5, 0.5, 0.25]).unwrap();
        let p = decay_product(&e, 1.0, 4).unwrap();
        let direct = (1.0 - 0.999_999_999_5) * 0.5 * 0.75;
        assert_relative_eq!(p, direct, max_relative = 1e-6);
        assert!(matches!(log_decay_product(&e, 1.0, 4).unwrap(), Product::Log(_)));
    }

    #[test]
    fn diagnostics_examples() {
        let p = UpdateSchedule::power_law(0.5, 100_000).unwrap();
        let d = schedule_diagnostics(&p, 0.5, 100).unwrap();
        assert!(d.abar_est < 0.01);
        assert_eq!(d.regime, Regime::RateAlphaGamma);

        let h = UpdateSchedule::harmonic(100_000);
        let d = schedule_diagnostics(&h, 0.5, 100).unwrap();
        assert!((d.abar_est - 1.0).abs() < 1e-3 && (d.aunder_est - 1.0).abs() < 1e-3);
        assert!(d.aunder_est <= d.abar_est);
        assert_eq!(d.regime, Regime::RateAlphaGamma);

        let g = UpdateSchedule::geometric(0.5, 2000).unwrap();
        let d = schedule_diagnostics(&g, 0.5, 100).unwrap();
        assert!(d.abar_est > 1e6);
        assert_eq!(d.regime, Regime::RateProductFast);

        assert!(schedule_diagnostics(&h, 0.5, 100_000).is_err());
    }

    #[test]
    fn regime_classification_table() {
        assert_eq!(classify_regime(0.5, 0.0, 0.5), Regime::RateAlphaGamma);
        assert_eq!(classify_regime(1.5, 0.0, 1.0), Regime::RateProduct);
        assert_eq!(classify_regime(2.0, 0.0, 1.0), Regime::RateProductFast);
        assert_eq!(classify_regime(1.95, 0.1, 0.2), Regime::Boundary);
    }

    #[test]
    fn diagnostics_invariant_under_truncation() {
        for kind in [
            ScheduleKind::Harmonic,
            ScheduleKind::PowerLaw { r: 0.7 },
            ScheduleKind::Geometric { q: 0.8 },
        ] {
            let a = UpdateSchedule::new(kind.clone(), 50_000).unwrap();
            let b = UpdateSchedule::new(kind, 20_000).unwrap();
            let da = schedule_diagnostics(&a, 0.5, 500).unwrap();
            let db = schedule_diagnostics(&b, 0.5, 500).unwrap();
            assert_eq!(da.regime, db.regime);
        }
    }

    #[test]
    fn probe_zero_forcing() {
        let a = vec![0.5; 20];
        let p = recursive_bound_probe_scaled(&a, &a, 1.0, 0.0, 0.0, 20).unwrap();
        assert!(p.s.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn probe_feasibility() {
        let a = vec![1.0; 3];
        assert!(recursive_bound_probe(&a, &a, 1.0, 0.0, 3).is_err());
        assert!(recursive_bound_probe(&a, &a, 0.5, 0.0, 4).is_err());
    }

    #[test]
    fn probe_sharpness_at_ratio_one() {
        // alpha = beta = 1/(n+1), eps = 1: A_n = B_n = 1/(n+1) and
        // (n+1) s_n = s_0 + sum_{i=2}^{n+1} 1/i, so s_n ~ ln n / n.
        let n = 100_000;
        let a: Vec<f64> = (1..=n).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        let p = recursive_bound_probe(&a, &a, 1.0, 0.0, n).unwrap();
        for k in [1_000usize, 10_000, 100_000] {
            let band = p.s[k - 1] * k as f64 / (k as f64).ln();
            assert!(band > 0.8 && band < 1.2, "band at {k}: {band}");
        }
        // Neither A_n nor B_n dominates: both ratios keep growing like ln n.
        assert!(p.ratio_to_a[n - 1] > 1.5 * p.ratio_to_a[999]);
        assert!(p.ratio_to_b[n - 1] > 1.5 * p.ratio_to_b[999]);
    }

    #[test]
    fn probe_harmonic_half_eps() {
        // alpha = beta = 1/n, eps = 1/2: s_n / (A_n ln n) stays in a band.
        let n = 100_000;
        let a: Vec<f64> = (1..=n).map(|i| 1.0 / i as f64).collect();
        let p = recursive_bound_probe(&a, &a, 0.5, 0.0, n).unwrap();
        let bands: Vec<f64> = [1_000usize, 10_000, 100_000]
            .iter()
            .map(|&k| p.ratio_to_a[k - 1] / (k as f64).ln())
            .collect();
        let (lo, hi) = bands
            .iter()
            .fold((f64::MAX, f64::MIN), |(l, h), &b| (l.min(b), h.max(b)));
        assert!(hi / lo < 1.5, "bands {bands:?}");
    }

    #[test]
    fn probe_first_case_bounded_by_b() {
        let n = 100_000;
        let a: Vec<f64> = (1..=n).map(|i| 1.0 / i as f64).collect();
        let b: Vec<f64> = a.iter().map(|x| x / 2.0).collect();
        let p = recursive_bound_probe(&a, &b, 0.5, 0.0, n).unwrap();
        let sup = p.ratio_to_b.iter().cloned().fold(0.0, f64::max);
        let late = p.ratio_to_b[n / 2..].iter().cloned().fold(0.0, f64::max);
        assert!(sup.is_finite() && sup < 10.0, "sup = {sup}");
        // Settled: no growth over the second half.
        assert!(late <= 1.01 * p.ratio_to_b[n / 2]);
    }

    fn schedule_strategy() -> impl Strategy<Value = UpdateSchedule> {
        prop_oneof![
            Just(UpdateSchedule::harmonic(2000)),
            (0.05f64..=1.0).prop_map(|r| UpdateSchedule::power_law(r, 2000).unwrap()),
            (0.05f64..0.95).prop_map(|q| UpdateSchedule::geometric(q, 2000).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn weights_reconstruct_alpha(s in schedule_strategy(), n in 2usize..200) {
            let w = match weight_sequence(&s, n) { Ok(w) => w, Err(_) => return Ok(()) };
            let mut total = 0.0;
            for (i, wi) in w.iter().enumerate() {
                total += wi;
                let a = s.alpha(i + 1).unwrap();
                prop_assert!(((wi / total) - a).abs() <= 1e-12 * a);
            }
            let th = theta_sequence(&s, n).unwrap();
            for k in 1..=n {
                let d = theta_direct(&w[..k]);
                prop_assert!((th[k - 1] - d).abs() <= 1e-10 * d);
                prop_assert!(th[k - 1] > 0.0 && th[k - 1] <= 1.0);
            }
        }

        #[test]
        fn normalized_weights_sum_to_one(s in schedule_strategy(), n in 1usize..500) {
            let p = normalized_weights(&s, n).unwrap();
            let total: f64 = p.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn decay_product_monotone(s in schedule_strategy(), n in 1usize..300, d in 0.05f64..0.99) {
            // delta < 1 keeps every guard inactive, so the pattern is fixed.
            let p1 = decay_product(&s, d, n).unwrap();
            let p2 = decay_product(&s, d, n + 1).unwrap();
            let p3 = decay_product(&s, d * 1.01_f64.min(0.999 / d), n).unwrap();
            prop_assert!(p2 <= p1);
            prop_assert!(p3 <= p1);
            prop_assert!(p1 > 0.0 && p1 <= 1.0);
        }
    }
}
