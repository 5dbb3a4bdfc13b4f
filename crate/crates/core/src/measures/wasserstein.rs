//! Wasserstein distances between weighted empirical measures.

use std::cmp::Ordering;

use crate::error::{Result, SpocError};
use crate::measures::transport::solve_transport;
use crate::measures::WeightedEmpirical;
use crate::real::{dist_sq, Real};
use crate::rng::{Purpose, StreamKey};

/// Cost-matrix size above which [`wasserstein_exact`] refuses to run.
pub const DEFAULT_COST_CAP: usize = 4_000_000;

/// Ground cost `c(x, y)` for the exact solver.
#[derive(Clone, Copy)]
pub enum GroundCost<'a> {
    /// `|x - y|^p`.
    Power(f64),
    /// `f(|x - y|)` for a caller-supplied (typically concave) `f`.
    Radial(&'a (dyn Fn(f64) -> f64 + Sync)),
}

impl GroundCost<'_> {
    #[inline]
    pub fn eval(&self, dist: f64) -> f64 {
        match self {
            GroundCost::Power(p) if *p == 2.0 => dist * dist,
            GroundCost::Power(p) if *p == 1.0 => dist,
            GroundCost::Power(p) => dist.powf(*p),
            GroundCost::Radial(f) => f(dist),
        }
    }
}

impl std::fmt::Debug for GroundCost<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GroundCost::Power(p) => write!(f, "Power({p})"),
            GroundCost::Radial(_) => write!(f, "Radial(..)"),
        }
    }
}

/// Atom order for 1D sweeps: by value, ties by index.
fn sorted_order<T: Real>(mu: &WeightedEmpirical<T>) -> Vec<usize> {
    let atoms = mu.atoms();
    let mut idx: Vec<usize> = (0..mu.len()).collect();
    idx.sort_by(|&a, &b| {
        atoms[a]
            .partial_cmp(&atoms[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

#[inline]
fn abs_pow<T: Real>(d: T, p: T) -> T {
    let d = d.abs();
    if p == T::one() {
        d
    } else if p == T::of(2.0) {
        d * d
    } else {
        d.powf(p)
    }
}

/// `W_p(mu, nu)^p` for one-dimensional measures via the monotone coupling.
///
/// The two weighted CDFs are merged and `|F^{-1}_mu - F^{-1}_nu|^p` is
/// integrated exactly over their common refinement.
pub fn wasserstein_1d_cost<T: Real>(
    mu: &WeightedEmpirical<T>,
    nu: &WeightedEmpirical<T>,
    p: T,
) -> Result<T> {
    if mu.dim() != 1 || nu.dim() != 1 {
        return Err(SpocError::DimensionMismatch {
            expected: 1,
            got: if mu.dim() != 1 { mu.dim() } else { nu.dim() },
        });
    }
    if !(p >= T::one()) {
        return Err(SpocError::Domain(format!("p = {p} must be at least 1")));
    }
    let ia = sorted_order(mu);
    let ib = sorted_order(nu);
    let (xa, xb) = (mu.atoms(), nu.atoms());
    let (mut i, mut j) = (0, 0);
    let mut ra = mu.weight(ia[0]);
    let mut rb = nu.weight(ib[0]);
    let mut cost = T::zero();
    loop {
        let d = xa[ia[i]] - xb[ib[j]];
        if ra <= rb {
            cost += ra * abs_pow(d, p);
            rb -= ra;
            i += 1;
            if i == ia.len() {
                break;
            }
            ra = mu.weight(ia[i]);
        } else {
            cost += rb * abs_pow(d, p);
            ra -= rb;
            j += 1;
            if j == ib.len() {
                break;
            }
            rb = nu.weight(ib[j]);
        }
    }
    // Any mass left when one side runs out is rounding residue (~1e-16).
    Ok(cost.max(T::zero()))
}

/// Exact `W_p` between one-dimensional weighted measures.
pub fn wasserstein_1d<T: Real>(
    mu: &WeightedEmpirical<T>,
    nu: &WeightedEmpirical<T>,
    p: T,
) -> Result<T> {
    let c = wasserstein_1d_cost(mu, nu, p)?;
    Ok(if p == T::one() { c } else { c.powf(T::one() / p) })
}

/// `W_2` between `N(m1, s1^2)` and `N(m2, s2^2)` on the line.
pub fn gaussian_w2_1d(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    ((m1 - m2).powi(2) + (s1 - s2).powi(2)).sqrt()
}

/// Optimal transport cost `inf E c(X, Y)` between two finite measures.
///
/// For `GroundCost::Power(p)` this is `W_p^p`; take the root yourself.
pub fn wasserstein_exact<T: Real>(
    mu: &WeightedEmpirical<T>,
    nu: &WeightedEmpirical<T>,
    cost: GroundCost<'_>,
) -> Result<f64> {
    wasserstein_exact_with_cap(mu, nu, cost, DEFAULT_COST_CAP)
}

pub fn wasserstein_exact_with_cap<T: Real>(
    mu: &WeightedEmpirical<T>,
    nu: &WeightedEmpirical<T>,
    cost: GroundCost<'_>,
    cap: usize,
) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(SpocError::DimensionMismatch {
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    let (n, m) = (mu.len(), nu.len());
    let entries = n.saturating_mul(m);
    if entries > cap {
        return Err(SpocError::SizeCap { entries, cap });
    }
    let mut c = Vec::with_capacity(entries);
    for i in 0..n {
        let x = mu.atom(i);
        for j in 0..m {
            let d = dist_sq(x, nu.atom(j)).as_f64().sqrt();
            c.push(cost.eval(d));
        }
    }
    let supply: Vec<f64> = mu.weights().into_iter().map(Real::as_f64).collect();
    let demand: Vec<f64> = nu.weights().into_iter().map(Real::as_f64).collect();
    Ok(solve_transport(&supply, &demand, &c)?.cost)
}

/// Sliced `W_2`: root-mean of squared 1D `W_2` over `n_projections` random
/// unit directions drawn from the stream keyed by `seed`.
pub fn sliced_w2<T: Real>(
    mu: &WeightedEmpirical<T>,
    nu: &WeightedEmpirical<T>,
    n_projections: usize,
    seed: u64,
) -> Result<T> {
    if mu.dim() != nu.dim() {
        return Err(SpocError::DimensionMismatch {
            expected: mu.dim(),
            got: nu.dim(),
        });
    }
    if n_projections == 0 {
        return Err(SpocError::Domain("need at least one projection".into()));
    }
    let dim = mu.dim();
    let mut stream = StreamKey::new(seed, 0, Purpose::Projection).stream(0);
    let mut dir = vec![0.0f64; dim];
    let mut acc = T::zero();
    for _ in 0..n_projections {
        let norm = loop {
            stream.fill_normal(&mut dir);
            let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1e-12 {
                break n;
            }
        };
        let u: Vec<T> = dir.iter().map(|v| T::of(v / norm)).collect();
        let pa = mu.project(&u)?;
        let pb = nu.project(&u)?;
        acc += wasserstein_1d_cost(&pa, &pb, T::of(2.0))?;
    }
    Ok((acc / T::from_usize(n_projections).expect("count fits")).sqrt())
}
