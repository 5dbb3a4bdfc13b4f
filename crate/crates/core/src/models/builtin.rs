use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{Result, SpocError};
use crate::models::{
    Coefficients, Diffusion, InteractionForm, MeasureView, ModelSpec, MomentClosure, NoiseForm,
};
use crate::real::{norm_sq, Real};

pub const BUILTIN_MODELS: [&str; 3] = ["mean_field_ou", "curie_weiss", "repulsive3d"];

/// `dX = (-2X - E X) dt + (2 - sqrt(E|X|^2)) dW`.
struct MeanFieldOu;

impl<T: Real> Coefficients<T> for MeanFieldOu {
    fn drift(&self, _t: T, x: &[T], mu: &MeasureView<'_, T>, out: &mut [T]) {
        let m = mu.mean();
        out[0] = -T::of(2.0) * x[0] - m[0];
    }

    fn diffusion(&self, _t: T, _x: &[T], mu: &MeasureView<'_, T>) -> Diffusion<T> {
        Diffusion::Scalar(T::of(2.0) - mu.second_moment().sqrt())
    }
}

/// `dX = [-beta (X^3 - X) + beta K E X] dt + sigma dW`.
struct CurieWeiss {
    beta: f64,
    k: f64,
    sigma: f64,
}

impl<T: Real> Coefficients<T> for CurieWeiss {
    fn drift(&self, _t: T, x: &[T], mu: &MeasureView<'_, T>, out: &mut [T]) {
        let b = T::of(self.beta);
        let m = mu.mean();
        out[0] = -b * (x[0] * x[0] * x[0] - x[0]) + b * T::of(self.k) * m[0];
    }

    fn diffusion(&self, _t: T, _x: &[T], _mu: &MeasureView<'_, T>) -> Diffusion<T> {
        Diffusion::Scalar(T::of(self.sigma))
    }
}

/// `dX = (-alpha X + e / (beta + |X - E X|^2)) dt + sigma dB` in three
/// dimensions, `e` the unit vector from the mean to `X`. The repulsion is
/// taken to be zero at `X = E X`.
struct Repulsive3d {
    alpha: f64,
    beta: f64,
    sigma: f64,
}

impl<T: Real> Coefficients<T> for Repulsive3d {
    fn drift(&self, _t: T, x: &[T], mu: &MeasureView<'_, T>, out: &mut [T]) {
        let m = mu.mean();
        let mut diff = [T::zero(); 3];
        for k in 0..3 {
            diff[k] = x[k] - m[k];
        }
        let r2 = norm_sq(&diff);
        let scale = if r2 > T::zero() {
            T::one() / (r2.sqrt() * (T::of(self.beta) + r2))
        } else {
            T::zero()
        };
        let a = T::of(self.alpha);
        for k in 0..3 {
            out[k] = -a * x[k] + scale * diff[k];
        }
    }

    fn diffusion(&self, _t: T, _x: &[T], _mu: &MeasureView<'_, T>) -> Diffusion<T> {
        Diffusion::Scalar(T::of(self.sigma))
    }
}

fn take_params<'a>(
    model: &str,
    params: &BTreeMap<String, f64>,
    keys: &[&'a str],
) -> Result<Vec<f64>> {
    if let Some(extra) = params.keys().find(|k| !keys.contains(&k.as_str())) {
        return Err(SpocError::Config(format!(
            "unknown parameter `{extra}` for model `{model}` (expected {keys:?})"
        )));
    }
    keys.iter()
        .map(|k| {
            let v = *params.get(*k).ok_or_else(|| {
                SpocError::Config(format!("model `{model}` is missing parameter `{k}`"))
            })?;
            if !v.is_finite() {
                return Err(SpocError::Config(format!(
                    "parameter `{k}` of model `{model}` is not finite"
                )));
            }
            Ok(v)
        })
        .collect()
}

/// One of the named built-in models.
pub fn builtin_model<T: Real>(name: &str, params: &BTreeMap<String, f64>) -> Result<ModelSpec<T>> {
    match name {
        "mean_field_ou" => {
            take_params(name, params, &[])?;
            let closure = MomentClosure::new(|_t, s, out| {
                let (m, s2) = (s[0], s[1].max(0.0));
                let sig = 2.0 - s2.sqrt();
                out[0] = -3.0 * m;
                out[1] = -4.0 * s2 - 2.0 * m * m + sig * sig;
            });
            Ok(ModelSpec::new(
                name,
                1,
                InteractionForm::MomentOnly,
                NoiseForm::MeasureDependent,
                Arc::new(MeanFieldOu),
            )?
            .with_moment_closure(closure))
        }
        "curie_weiss" => {
            let p = take_params(name, params, &["beta", "K", "sigma"])?;
            if !(p[0] > 0.0) {
                return Err(SpocError::Config("curie_weiss needs beta > 0".into()));
            }
            ModelSpec::new(
                name,
                1,
                InteractionForm::MomentOnly,
                NoiseForm::MeasureFree,
                Arc::new(CurieWeiss {
                    beta: p[0],
                    k: p[1],
                    sigma: p[2],
                }),
            )
        }
        "repulsive3d" => {
            let p = take_params(name, params, &["alpha", "beta", "sigma"])?;
            if !(p[1] > 0.0) {
                return Err(SpocError::Config("repulsive3d needs beta > 0".into()));
            }
            ModelSpec::new(
                name,
                3,
                InteractionForm::MomentOnly,
                NoiseForm::MeasureFree,
                Arc::new(Repulsive3d {
                    alpha: p[0],
                    beta: p[1],
                    sigma: p[2],
                }),
            )
        }
        other => Err(SpocError::Config(format!(
            "unknown model `{other}` (builtins: {BUILTIN_MODELS:?})"
        ))),
    }
}
