//! Drift/diffusion models evaluated against a (frozen) measure, plus the
//! dissipativity profile machinery used to check weak-interaction conditions.

mod builtin;
mod fprofile;
pub mod quadrature;

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpocError};
use crate::measures::{SummaryStats, WeightedEmpirical};
use crate::real::Real;

pub use builtin::{builtin_model, BUILTIN_MODELS};
pub use fprofile::{
    build_f_from_kappa, curie_weiss_f_prime_0, curie_weiss_weak_interaction_check, FProfile,
    GridSpec, KappaProfile, WeakInteractionCheck,
};

/// How the coefficients read the measure argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionForm {
    FullMeasure,
    /// Depends on the measure only through its mean and `E|X|^2`.
    MomentOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseForm {
    MeasureDependent,
    MeasureFree,
    /// `sigma(t, x) dW + dB`.
    AdditivePlusMeasureFree,
}

/// Diffusion coefficient: a multiple of the identity or a full row-major
/// `dim x dim` matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Diffusion<T> {
    Scalar(T),
    Matrix(Vec<T>),
}

impl<T: Real> Diffusion<T> {
    /// Adds `sigma dW` to `x`.
    pub fn apply(&self, dw: &[T], x: &mut [T]) {
        match self {
            Diffusion::Scalar(s) => {
                for (xi, &w) in x.iter_mut().zip(dw) {
                    *xi += *s * w;
                }
            }
            Diffusion::Matrix(m) => {
                let d = dw.len();
                for (i, xi) in x.iter_mut().enumerate() {
                    let row = &m[i * d..(i + 1) * d];
                    *xi += row.iter().zip(dw).map(|(&a, &w)| a * w).sum::<T>();
                }
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Diffusion::Scalar(s) => s.is_finite(),
            Diffusion::Matrix(m) => m.iter().all(|v| v.is_finite()),
        }
    }

    /// Dense row-major form.
    pub fn to_matrix(&self, dim: usize) -> Vec<T> {
        match self {
            Diffusion::Scalar(s) => {
                let mut m = vec![T::zero(); dim * dim];
                for i in 0..dim {
                    m[i * dim + i] = *s;
                }
                m
            }
            Diffusion::Matrix(m) => m.clone(),
        }
    }
}

/// The measure argument handed to coefficient evaluators.
#[derive(Debug, Clone, Copy)]
pub enum MeasureView<'a, T> {
    Full(&'a WeightedEmpirical<T>),
    Summary(&'a SummaryStats<T>),
}

impl<'a, T: Real> MeasureView<'a, T> {
    pub fn dim(&self) -> usize {
        match self {
            MeasureView::Full(m) => m.dim(),
            MeasureView::Summary(s) => s.dim(),
        }
    }

    pub fn mean(&self) -> Cow<'a, [T]> {
        match *self {
            MeasureView::Full(m) => Cow::Owned(m.mean()),
            MeasureView::Summary(s) => Cow::Borrowed(&s.mean),
        }
    }

    /// `E|X|^2`.
    pub fn second_moment(&self) -> T {
        match self {
            MeasureView::Full(m) => m.moment(2).expect("order 2 is valid"),
            MeasureView::Summary(s) => s.second_moment,
        }
    }

    pub fn atoms(&self) -> Option<&'a WeightedEmpirical<T>> {
        match *self {
            MeasureView::Full(m) => Some(m),
            MeasureView::Summary(_) => None,
        }
    }
}

/// Coefficient evaluators. Implementations must be pure.
pub trait Coefficients<T: Real>: Send + Sync {
    fn drift(&self, t: T, x: &[T], mu: &MeasureView<'_, T>, out: &mut [T]);
    fn diffusion(&self, t: T, x: &[T], mu: &MeasureView<'_, T>) -> Diffusion<T>;
}

struct ClosureCoefficients<F, G> {
    drift: F,
    diffusion: G,
}

impl<T, F, G> Coefficients<T> for ClosureCoefficients<F, G>
where
    T: Real,
    F: Fn(T, &[T], &MeasureView<'_, T>, &mut [T]) + Send + Sync,
    G: Fn(T, &[T], &MeasureView<'_, T>) -> Diffusion<T> + Send + Sync,
{
    fn drift(&self, t: T, x: &[T], mu: &MeasureView<'_, T>, out: &mut [T]) {
        (self.drift)(t, x, mu, out)
    }

    fn diffusion(&self, t: T, x: &[T], mu: &MeasureView<'_, T>) -> Diffusion<T> {
        (self.diffusion)(t, x, mu)
    }
}

/// Closed ODE for `(E X, E|X|^2)`; the state is laid out as
/// `[m_0, .., m_{d-1}, S]`.
#[derive(Clone)]
pub struct MomentClosure {
    rhs: Arc<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync>,
}

impl MomentClosure {
    pub fn new(rhs: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> Self {
        Self { rhs: Arc::new(rhs) }
    }

    pub fn rhs(&self, t: f64, state: &[f64], out: &mut [f64]) {
        (self.rhs)(t, state, out)
    }
}

#[derive(Clone)]
pub struct ModelSpec<T> {
    name: String,
    dim: usize,
    interaction: InteractionForm,
    noise: NoiseForm,
    coefficients: Arc<dyn Coefficients<T>>,
    closure: Option<MomentClosure>,
}

impl<T> fmt::Debug for ModelSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("interaction", &self.interaction)
            .field("noise", &self.noise)
            .field("moment_closure", &self.closure.is_some())
            .finish()
    }
}

impl<T: Real> ModelSpec<T> {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        interaction: InteractionForm,
        noise: NoiseForm,
        coefficients: Arc<dyn Coefficients<T>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(SpocError::Config("model dimension must be positive".into()));
        }
        Ok(Self {
            name: name.into(),
            dim,
            interaction,
            noise,
            coefficients,
            closure: None,
        })
    }

    /// A model from plain closures.
    pub fn custom<F, G>(
        name: impl Into<String>,
        dim: usize,
        interaction: InteractionForm,
        noise: NoiseForm,
        drift: F,
        diffusion: G,
    ) -> Result<Self>
    where
        F: Fn(T, &[T], &MeasureView<'_, T>, &mut [T]) + Send + Sync + 'static,
        G: Fn(T, &[T], &MeasureView<'_, T>) -> Diffusion<T> + Send + Sync + 'static,
    {
        Self::new(
            name,
            dim,
            interaction,
            noise,
            Arc::new(ClosureCoefficients { drift, diffusion }),
        )
    }

    pub fn with_moment_closure(mut self, closure: MomentClosure) -> Self {
        self.closure = Some(closure);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn interaction(&self) -> InteractionForm {
        self.interaction
    }

    pub fn noise(&self) -> NoiseForm {
        self.noise
    }

    pub fn moment_closure(&self) -> Option<&MomentClosure> {
        self.closure.as_ref()
    }

    /// Writes the drift into `drift` and returns the diffusion; errors on
    /// non-finite output. No compatibility checks: this is the inner-loop
    /// entry point.
    #[inline]
    pub fn coefficients_into(
        &self,
        t: T,
        x: &[T],
        mu: &MeasureView<'_, T>,
        drift: &mut [T],
    ) -> Result<Diffusion<T>> {
        self.coefficients.drift(t, x, mu, drift);
        let sigma = self.coefficients.diffusion(t, x, mu);
        if drift.iter().any(|v| !v.is_finite()) || !sigma.is_finite() {
            return Err(SpocError::ModelEvaluation {
                t: t.as_f64(),
                x: x.iter().map(|v| v.as_f64()).collect(),
            });
        }
        Ok(sigma)
    }
}

/// `(b(t, x, mu), sigma(t, x, mu))` with shape and compatibility checks.
pub fn evaluate_model<T: Real>(
    model: &ModelSpec<T>,
    t: T,
    x: &[T],
    mu: &MeasureView<'_, T>,
) -> Result<(Vec<T>, Diffusion<T>)> {
    if x.len() != model.dim {
        return Err(SpocError::DimensionMismatch {
            expected: model.dim,
            got: x.len(),
        });
    }
    if mu.dim() != model.dim {
        return Err(SpocError::DimensionMismatch {
            expected: model.dim,
            got: mu.dim(),
        });
    }
    if model.interaction == InteractionForm::FullMeasure && mu.atoms().is_none() {
        return Err(SpocError::Config(format!(
            "model `{}` needs the full measure, got summary statistics",
            model.name
        )));
    }
    let mut drift = vec![T::zero(); model.dim];
    let sigma = model.coefficients_into(t, x, mu, &mut drift)?;
    if let Diffusion::Matrix(m) = &sigma {
        if m.len() != model.dim * model.dim {
            return Err(SpocError::DimensionMismatch {
                expected: model.dim * model.dim,
                got: m.len(),
            });
        }
    }
    Ok((drift, sigma))
}
