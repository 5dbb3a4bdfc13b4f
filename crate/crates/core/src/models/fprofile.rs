//! Dissipativity profiles `kappa` and the concave distance transform `f` with
//! `f'(r) = 1/2 int_r^inf s exp(-1/2 int_r^s tau kappa(tau) dtau) ds`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use statrs::function::erf::erfc;

use crate::error::{Result, SpocError};
use crate::models::quadrature::{integrate, QuadOptions};

/// `ln(1e14)`: the outer integral stops once the inner exponential has fallen
/// below `1e-14` of its peak.
const TAIL_LOG: f64 = 32.236_191_301_916_64;
const PSI_CELL: f64 = 0.05;
const MAX_REACH: f64 = 1e4;

#[derive(Clone)]
pub struct KappaProfile {
    label: String,
    kappa: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    kappa_inf: f64,
    truncation: Option<f64>,
}

impl fmt::Debug for KappaProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KappaProfile")
            .field("label", &self.label)
            .field("kappa_inf", &self.kappa_inf)
            .field("truncation", &self.truncation)
            .finish()
    }
}

impl KappaProfile {
    /// `kappa_inf` is the limit at infinity; pass `f64::INFINITY` for
    /// unbounded profiles.
    pub fn new(
        label: impl Into<String>,
        kappa: impl Fn(f64) -> f64 + Send + Sync + 'static,
        kappa_inf: f64,
    ) -> Self {
        Self {
            label: label.into(),
            kappa: Arc::new(kappa),
            kappa_inf,
            truncation: None,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("constant({c})"), move |_| c, c)
    }

    /// `kappa(r) = beta (r^2 / 4 - 1)`.
    pub fn curie_weiss(beta: f64) -> Self {
        Self::new(
            format!("curie_weiss({beta})"),
            move |r| beta * (0.25 * r * r - 1.0),
            if beta > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY },
        )
    }

    /// `kappa ∧ lambda`.
    pub fn truncated(mut self, lambda: f64) -> Self {
        self.truncation = Some(lambda);
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    pub fn eval(&self, r: f64) -> f64 {
        let k = (self.kappa)(r);
        match self.truncation {
            Some(l) => k.min(l),
            None => k,
        }
    }

    /// Limit at infinity after truncation.
    pub fn kappa_inf(&self) -> f64 {
        match self.truncation {
            Some(l) => self.kappa_inf.min(l),
            None => self.kappa_inf,
        }
    }

    /// Monotonicity on `grid` and `r kappa(r) -> 0` at the origin.
    pub fn check_shape(&self, grid: &[f64]) -> Result<()> {
        for w in grid.windows(2) {
            let (a, b) = (self.eval(w[0]), self.eval(w[1]));
            if b < a - 1e-12 * a.abs().max(1.0) {
                return Err(SpocError::AssumptionViolation(format!(
                    "kappa decreases between r = {} and r = {}",
                    w[0], w[1]
                )));
            }
        }
        let r = 1e-8;
        if !((r * self.eval(r)).abs() < 1e-6) {
            return Err(SpocError::AssumptionViolation(
                "r kappa(r) does not vanish at the origin".into(),
            ));
        }
        Ok(())
    }
}

/// `Psi(s) = 1/2 int_0^s tau kappa(tau) dtau`, tabulated on cells and
/// completed by quadrature inside a cell.
struct Psi<'a> {
    kappa: &'a KappaProfile,
    nodes: Vec<f64>,
}

impl<'a> Psi<'a> {
    fn new(kappa: &'a KappaProfile) -> Self {
        Self {
            kappa,
            nodes: vec![0.0],
        }
    }

    fn piece(&self, a: f64, b: f64) -> Result<f64> {
        let k = self.kappa;
        let v = integrate(
            |t| 0.5 * t * k.eval(t),
            a,
            b,
            QuadOptions {
                abs_tol: 1e-15,
                rel_tol: 1e-14,
                max_intervals: 200,
            },
        )?;
        Ok(v)
    }

    fn at(&mut self, s: f64) -> Result<f64> {
        let cell = (s / PSI_CELL).floor() as usize;
        while self.nodes.len() <= cell {
            let i = self.nodes.len() - 1;
            let next = self.nodes[i] + self.piece(i as f64 * PSI_CELL, (i + 1) as f64 * PSI_CELL)?;
            self.nodes.push(next);
        }
        let left = cell as f64 * PSI_CELL;
        Ok(self.nodes[cell] + self.piece(left, s)?)
    }
}

fn f_prime_with(psi: &mut Psi<'_>, r: f64) -> Result<f64> {
    let psi_r = psi.at(r)?;
    // Find where the inner exponential is negligible relative to its peak.
    let mut s = r;
    let mut lowest = psi_r;
    loop {
        s += PSI_CELL;
        let p = psi.at(s)?;
        lowest = lowest.min(p);
        if p - lowest > TAIL_LOG + (1.0 + s).ln() {
            break;
        }
        if s - r > MAX_REACH {
            return Err(SpocError::Numeric(format!(
                "f' integral at r = {r} does not decay within {MAX_REACH}"
            )));
        }
    }
    let mut err = None;
    let v = integrate(
        |t| match psi.at(t) {
            Ok(p) => t * (psi_r - p).exp(),
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        r,
        s,
        QuadOptions {
            abs_tol: 1e-300,
            rel_tol: 1e-13,
            max_intervals: 4000,
        },
    )?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(0.5 * v)
}

fn check_positive_limit(kappa: &KappaProfile) -> Result<()> {
    if !(kappa.kappa_inf() > 0.0) {
        return Err(SpocError::AssumptionViolation(format!(
            "kappa_inf = {} must be positive (truncate unbounded profiles only from above)",
            kappa.kappa_inf()
        )));
    }
    Ok(())
}

/// `f'(r)` by nested adaptive quadrature.
pub fn f_prime_at(kappa: &KappaProfile, r: f64) -> Result<f64> {
    check_positive_limit(kappa)?;
    if !(r >= 0.0) {
        return Err(SpocError::Domain(format!("r = {r} must be non-negative")));
    }
    f_prime_with(&mut Psi::new(kappa), r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub r_max: f64,
    /// Number of grid nodes including `r = 0`.
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            r_max: 10.0,
            points: 1001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FProfile {
    pub grid: Vec<f64>,
    pub f: Vec<f64>,
    pub f_prime: Vec<f64>,
    /// From the ODE `2 f'' = r kappa f' - r`.
    pub f_second: Vec<f64>,
    /// `kappa` sampled on the grid.
    pub kappa: Vec<f64>,
    pub f_prime_0: f64,
    pub kappa_inf: f64,
}

/// Tabulates `f`, `f'` and `f''` on a uniform grid.
pub fn build_f_from_kappa(kappa: &KappaProfile, grid: GridSpec) -> Result<FProfile> {
    check_positive_limit(kappa)?;
    if grid.points < 2 || !(grid.r_max > 0.0) {
        return Err(SpocError::Domain("grid needs r_max > 0 and at least 2 points".into()));
    }
    let h = grid.r_max / (grid.points - 1) as f64;
    let rs: Vec<f64> = (0..grid.points).map(|i| i as f64 * h).collect();
    kappa.check_shape(&rs)?;
    let mut psi = Psi::new(kappa);
    let ks: Vec<f64> = rs.iter().map(|&r| kappa.eval(r)).collect();
    let mut fp = Vec::with_capacity(rs.len());
    for &r in &rs {
        fp.push(f_prime_with(&mut psi, r)?);
    }
    let fpp: Vec<f64> = rs
        .iter()
        .zip(&ks)
        .zip(&fp)
        .map(|((&r, &k), &d)| 0.5 * (r * k * d - r))
        .collect();
    // Cubic Hermite cumulative integration of f'.
    let mut f = vec![0.0; rs.len()];
    for i in 1..rs.len() {
        f[i] = f[i - 1] + 0.5 * h * (fp[i - 1] + fp[i]) + h * h / 12.0 * (fpp[i - 1] - fpp[i]);
    }
    Ok(FProfile {
        f_prime_0: fp[0],
        grid: rs,
        f,
        f_prime: fp,
        f_second: fpp,
        kappa: ks,
        kappa_inf: kappa.kappa_inf(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FProfileReport {
    pub max_ode_residual: f64,
    /// Same residual with `f''` from central differences of `f'`.
    pub max_fd_residual: f64,
    pub max_f_second: f64,
    pub min_f_prime: f64,
    /// Worst violation of `1/kappa_inf <= f(r)/r <= f'(0)`; `<= 0` when both hold.
    pub lemma_violation: f64,
}

impl FProfile {
    pub fn report(&self) -> FProfileReport {
        let n = self.grid.len();
        let mut ode: f64 = 0.0;
        let mut fd: f64 = 0.0;
        let mut lemma = f64::NEG_INFINITY;
        let lower = 1.0 / self.kappa_inf;
        for i in 0..n {
            let r = self.grid[i];
            let res = 2.0 * self.f_second[i] - r * self.kappa[i] * self.f_prime[i] + r;
            ode = ode.max(res.abs() / (1.0 + r));
            if i > 0 && i + 1 < n {
                let d2 = (self.f_prime[i + 1] - self.f_prime[i - 1])
                    / (self.grid[i + 1] - self.grid[i - 1]);
                let res = 2.0 * d2 - r * self.kappa[i] * self.f_prime[i] + r;
                fd = fd.max(res.abs() / (1.0 + r));
            }
            if r > 0.0 {
                let q = self.f[i] / r;
                let slack = 1e-9 * self.f_prime_0;
                lemma = lemma.max(lower - q - slack).max(q - self.f_prime_0 - slack);
            }
        }
        FProfileReport {
            max_ode_residual: ode,
            max_fd_residual: fd,
            max_f_second: self.f_second.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min_f_prime: self.f_prime.iter().copied().fold(f64::INFINITY, f64::min),
            lemma_violation: lemma,
        }
    }

    /// All profile invariants: `f(0) = 0`, `f' > 0`, `f'' <= 1e-10`, ODE
    /// residual `<= 1e-6 (1 + r)` and the two-sided ratio bound.
    pub fn check(&self) -> Result<FProfileReport> {
        let rep = self.report();
        let fail = |m: String| Err(SpocError::AssumptionViolation(m));
        if self.f[0] != 0.0 {
            return fail(format!("f(0) = {}", self.f[0]));
        }
        if !(rep.min_f_prime > 0.0) {
            return fail(format!("f' reaches {}", rep.min_f_prime));
        }
        if rep.max_f_second > 1e-10 {
            return fail(format!("f'' reaches {} (not concave)", rep.max_f_second));
        }
        if !(rep.max_ode_residual <= 1e-6) {
            return fail(format!("ODE residual {}", rep.max_ode_residual));
        }
        if rep.lemma_violation > 0.0 {
            return fail(format!("ratio bound violated by {}", rep.lemma_violation));
        }
        Ok(rep)
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Closed form `f'(0) = sqrt(2 pi beta e^beta) Phi(sqrt beta) / beta` for
/// `kappa(r) = beta (r^2/4 - 1)`.
pub fn curie_weiss_f_prime_0(beta: f64) -> f64 {
    (2.0 * std::f64::consts::PI * beta * beta.exp()).sqrt() * std_normal_cdf(beta.sqrt()) / beta
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakInteractionCheck {
    pub satisfied: bool,
    /// `1/K` (`+inf` for `K = 0`).
    pub lhs: f64,
    /// `sqrt(2 pi beta e^beta) Phi(sqrt beta)`.
    pub rhs: f64,
    /// `beta f'(0)` with `f'(0)` from quadrature.
    pub rhs_quadrature: f64,
    /// Whether the two routes agree to `1e-6` relative.
    pub routes_agree: bool,
    /// Lipschitz constant of the drift in the measure, `beta |K|`.
    pub eta: f64,
    /// `1 - eta f'(0)`.
    pub margin: f64,
}

/// Weak-interaction test for the Curie–Weiss drift
/// `-beta (x^3 - x) + beta K E X`: holds iff `K <= 0` or `1/K > rhs`.
pub fn curie_weiss_weak_interaction_check(beta: f64, k: f64) -> Result<WeakInteractionCheck> {
    if !(beta > 0.0) {
        return Err(SpocError::Domain(format!("beta = {beta} must be positive")));
    }
    let rhs = beta * curie_weiss_f_prime_0(beta);
    let fp0 = f_prime_at(&KappaProfile::curie_weiss(beta), 0.0)?;
    let rhs_quadrature = beta * fp0;
    let lhs = if k == 0.0 { f64::INFINITY } else { 1.0 / k };
    let eta = beta * k.abs();
    Ok(WeakInteractionCheck {
        satisfied: k <= 0.0 || lhs > rhs,
        lhs,
        rhs,
        rhs_quadrature,
        routes_agree: ((rhs - rhs_quadrature) / rhs).abs() <= 1e-6,
        eta,
        margin: 1.0 - eta * fp0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_kappa_gives_flat_derivative() {
        for c in [0.5, 1.0, 3.0] {
            let p = build_f_from_kappa(&KappaProfile::constant(c), GridSpec::default()).unwrap();
            assert!((p.f_prime_0 - 1.0 / c).abs() < 1e-12 / c);
            let rep = p.check().unwrap();
            assert!(rep.max_fd_residual < 1e-6);
            for (&r, &f) in p.grid.iter().zip(&p.f).skip(1) {
                assert!((f / r - 1.0 / c).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn curie_weiss_family() {
        for beta in [0.5, 1.0, 2.0] {
            let k = KappaProfile::curie_weiss(beta);
            let p = build_f_from_kappa(&k, GridSpec::default()).unwrap();
            let closed = curie_weiss_f_prime_0(beta);
            assert!(((p.f_prime_0 - closed) / closed).abs() < 1e-6, "beta {beta}");
            let rep = p.check().unwrap();
            // Central differences only see O(h^2) truncation error.
            assert!(rep.max_fd_residual < 1e-3, "{rep:?}");
        }
    }

    #[test]
    fn truncated_profiles() {
        for (beta, lambda) in [(1.0, 2.0), (2.0, 0.5)] {
            let k = KappaProfile::curie_weiss(beta).truncated(lambda);
            assert_eq!(k.kappa_inf(), lambda);
            let p = build_f_from_kappa(&k, GridSpec { r_max: 20.0, points: 801 }).unwrap();
            p.check().unwrap();
            // Far out f' approaches 1/lambda from above.
            let last = *p.f_prime.last().unwrap();
            assert!(last >= 1.0 / lambda - 1e-12 && last < 1.0 / lambda * 1.05);
        }
    }

    #[test]
    fn rejects_nonpositive_limit() {
        assert!(matches!(
            build_f_from_kappa(&KappaProfile::constant(-1.0), GridSpec::default()),
            Err(SpocError::AssumptionViolation(_))
        ));
        let decreasing = KappaProfile::new("dec", |r| 2.0 - r.min(1.0), 1.0);
        assert!(build_f_from_kappa(&decreasing, GridSpec::default()).is_err());
    }

    #[test]
    fn closed_form_independent_oracle() {
        // f'(0) = e^{beta/2} int_{-1}^inf e^{-beta x^2/2} dx, integrated directly.
        for beta in [0.5, 1.0, 2.0] {
            let direct = (beta / 2.0f64).exp()
                * integrate(|x| (-beta * x * x / 2.0).exp(), -1.0, 40.0, QuadOptions::default())
                    .unwrap();
            let rel = ((curie_weiss_f_prime_0(beta) - direct) / direct).abs();
            // statrs' erfc is good to ~1e-11 relative here.
            assert!(rel < 1e-9, "beta {beta}: {rel:e}");
        }
    }

    #[test]
    fn weak_interaction_examples() {
        let c = curie_weiss_weak_interaction_check(1.0, 0.5).unwrap();
        let expected = (2.0 * std::f64::consts::PI * std::f64::consts::E).sqrt() * std_normal_cdf(1.0);
        assert!((c.rhs - expected).abs() < 1e-12);
        assert!(c.routes_agree);
        assert_eq!(c.satisfied, 2.0 > expected);
        assert_eq!(c.satisfied, c.margin > 0.0);
        let z = curie_weiss_weak_interaction_check(1.0, 0.0).unwrap();
        assert!(z.satisfied && z.eta == 0.0);
        let n = curie_weiss_weak_interaction_check(1.0, -3.0).unwrap();
        assert!(n.satisfied);
        assert_eq!(n.eta, 3.0);
        assert!(n.margin < 0.0);
        let weak = curie_weiss_weak_interaction_check(1.0, 0.1).unwrap();
        assert!(weak.satisfied && weak.margin > 0.0);
    }
}
