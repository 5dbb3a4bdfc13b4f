use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpocError};
use crate::models::{builtin_model, InteractionForm, ModelSpec};
use crate::real::Real;
use crate::rng::NoiseStream;
use crate::schedules::{ScheduleKind, UpdateSchedule};

/// `{"name": "curie_weiss", "params": {"beta": 1.0, "K": 0.5, "sigma": 1.0}}`;
/// `model` is accepted as an alias of `name`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(alias = "model")]
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

impl ModelConfig {
    pub fn new(name: &str, params: &[(&str, f64)]) -> Self {
        Self {
            name: name.to_string(),
            params: params.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    pub fn build<T: Real>(&self) -> Result<ModelSpec<T>> {
        builtin_model(&self.name, &self.params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialLaw {
    Dirac { point: Vec<f64> },
    /// Independent coordinates `N(mean_k, std^2)`.
    Gaussian { mean: Vec<f64>, std: f64 },
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Dirac { point } => point.len(),
            InitialLaw::Gaussian { mean, .. } => mean.len(),
        }
    }

    /// Draws `X_0`; Gaussian laws consume `dim` normals, Dirac laws none.
    pub fn sample<T: Real>(&self, stream: &mut NoiseStream, out: &mut [T]) {
        match self {
            InitialLaw::Dirac { point } => {
                for (o, &p) in out.iter_mut().zip(point) {
                    *o = T::of(p);
                }
            }
            InitialLaw::Gaussian { mean, std } => {
                for (o, &m) in out.iter_mut().zip(mean) {
                    *o = T::of(m + std * stream.normal());
                }
            }
        }
    }

    /// `(E X_0, E|X_0|^2)`.
    pub fn moments(&self) -> (Vec<f64>, f64) {
        match self {
            InitialLaw::Dirac { point } => (point.clone(), point.iter().map(|p| p * p).sum()),
            InitialLaw::Gaussian { mean, std } => (
                mean.clone(),
                mean.iter().map(|m| m * m).sum::<f64>() + mean.len() as f64 * std * std,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureBackend {
    /// Atoms and weights at every grid time.
    FullAtoms,
    /// Mean and second moment only.
    #[default]
    SummaryOnly,
}

fn one() -> usize {
    1
}

fn default_cap() -> usize {
    200_000_000
}

/// Full description of a run. Times are given in model units; `checkpoints`
/// must lie on the grid `t_m = m T / M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: ModelConfig,
    pub schedule: ScheduleKind,
    pub initial: InitialLaw,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub steps: usize,
    #[serde(rename = "N")]
    pub particles: usize,
    #[serde(default)]
    pub batch_sizes: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub replications: usize,
    /// Snapshot times; empty means `[T]`.
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    /// Particle counts at which snapshots are taken; empty means `[N]`.
    #[serde(default)]
    pub milestones: Vec<usize>,
    #[serde(default)]
    pub measure_backend: MeasureBackend,
    #[serde(default)]
    pub store_paths: bool,
    /// Particle `n` interacts with `mu^n` (itself included) instead of `mu^{n-1}`.
    #[serde(default)]
    pub self_inclusive: bool,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[serde(default)]
    pub workers: usize,
    /// Cap on stored scalars (atoms or paths) per replication.
    #[serde(default = "default_cap")]
    pub max_stored_values: usize,
    /// Particle count of reference/surrogate runs; defaults to `10 N`.
    #[serde(default)]
    pub reference_particles: Option<usize>,
}

impl SimConfig {
    /// A minimal configuration with defaults for everything optional.
    pub fn new(
        model: ModelConfig,
        schedule: ScheduleKind,
        initial: InitialLaw,
        horizon: f64,
        steps: usize,
        particles: usize,
    ) -> Self {
        Self {
            model,
            schedule,
            initial,
            horizon,
            steps,
            particles,
            batch_sizes: None,
            seed: 0,
            replications: 1,
            checkpoints: Vec::new(),
            milestones: Vec::new(),
            measure_backend: MeasureBackend::default(),
            store_paths: false,
            self_inclusive: false,
            workers: 0,
            max_stored_values: default_cap(),
            reference_particles: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SpocError::Config(m));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("T = {} must be positive", self.horizon));
        }
        if self.steps == 0 {
            return bad("M must be positive".into());
        }
        if self.particles == 0 {
            return bad("N must be positive".into());
        }
        if self.replications == 0 {
            return bad("replications must be positive".into());
        }
        if self.initial.dim() == 0 {
            return bad("initial law has dimension 0".into());
        }
        if let InitialLaw::Gaussian { std, .. } = &self.initial {
            if !(*std >= 0.0) {
                return bad(format!("initial std = {std} must be non-negative"));
            }
        }
        if let Some(b) = &self.batch_sizes {
            if b.is_empty() || b.contains(&0) {
                return bad("batch sizes must be positive".into());
            }
            let total: usize = b.iter().sum();
            if total != self.particles {
                return bad(format!("batch sizes sum to {total}, N = {}", self.particles));
            }
        }
        self.checkpoint_steps()?;
        let ms = self.milestone_list();
        if ms.iter().any(|&n| n == 0 || n > self.particles) {
            return bad(format!("milestones must lie in 1..={}", self.particles));
        }
        if let Some(b) = &self.batch_sizes {
            let mut ends = std::collections::BTreeSet::new();
            let mut acc = 0;
            for &k in b {
                acc += k;
                ends.insert(acc);
            }
            if let Some(n) = ms.iter().find(|n| !ends.contains(n)) {
                return bad(format!("milestone {n} is not a batch boundary"));
            }
        }
        UpdateSchedule::new(self.schedule.clone(), self.schedule_len())?;
        Ok(())
    }

    /// Length of the update sequence: number of batches, or `N`.
    pub fn schedule_len(&self) -> usize {
        self.batch_sizes.as_ref().map_or(self.particles, |b| b.len())
    }

    pub fn update_schedule(&self) -> Result<UpdateSchedule> {
        UpdateSchedule::new(self.schedule.clone(), self.schedule_len())
    }

    /// Grid indices of the snapshot times, sorted and deduplicated.
    pub fn checkpoint_steps(&self) -> Result<Vec<usize>> {
        if self.checkpoints.is_empty() {
            return Ok(vec![self.steps]);
        }
        let dt = self.dt();
        let mut out = Vec::with_capacity(self.checkpoints.len());
        for &t in &self.checkpoints {
            let m = (t / dt).round();
            if !(m >= 0.0 && m <= self.steps as f64) || (m * dt - t).abs() > 1e-9 * self.horizon.max(1.0) {
                return Err(SpocError::Config(format!(
                    "checkpoint t = {t} is not a grid time of T = {}, M = {}",
                    self.horizon, self.steps
                )));
            }
            out.push(m as usize);
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Snapshot particle counts, sorted and deduplicated.
    pub fn milestone_list(&self) -> Vec<usize> {
        let mut m = if self.milestones.is_empty() {
            vec![self.particles]
        } else {
            self.milestones.clone()
        };
        m.sort_unstable();
        m.dedup();
        m
    }

    pub fn reference_size(&self) -> usize {
        self.reference_particles.unwrap_or(10 * self.particles)
    }

    /// Checks that `model` fits this configuration and the memory cap.
    pub fn check_model<T: Real>(&self, model: &ModelSpec<T>) -> Result<()> {
        if model.dim() != self.initial.dim() {
            return Err(SpocError::DimensionMismatch {
                expected: model.dim(),
                got: self.initial.dim(),
            });
        }
        let per_particle = (self.steps + 1) * model.dim();
        if model.interaction() == InteractionForm::FullMeasure
            && self.measure_backend == MeasureBackend::SummaryOnly
        {
            return Err(SpocError::Config(format!(
                "model `{}` reads the full measure; measure_backend must be full_atoms",
                model.name()
            )));
        }
        let stored = |what: &str| -> Result<()> {
            let entries = self.particles.saturating_mul(per_particle);
            if entries > self.max_stored_values {
                return Err(SpocError::Config(format!(
                    "{what} would hold {entries} values per replication, above max_stored_values = {}",
                    self.max_stored_values
                )));
            }
            Ok(())
        };
        if self.measure_backend == MeasureBackend::FullAtoms {
            stored("full_atoms backend")?;
        }
        if self.store_paths {
            stored("stored paths")?;
        }
        Ok(())
    }
}
