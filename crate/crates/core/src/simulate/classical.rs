use std::time::Instant;

use rayon::prelude::*;

use crate::error::Result;
use crate::measures::{SummaryStats, WeightedEmpirical};
use crate::models::{InteractionForm, MeasureView};
use crate::real::Real;
use crate::rng::{NoiseStream, Purpose, StreamKey};
use crate::simulate::config::{MeasureBackend, SimConfig};
use crate::simulate::engine::{uniform_summary, Simulation};
use crate::simulate::result::{
    CheckpointSnapshot, Method, MilestoneSnapshot, PathStore, ReplicationResult, RunResult,
};

/// One `n`-particle mean-field system over the whole horizon.
pub(crate) struct ClassicalSystem<T> {
    pub snapshots: Vec<CheckpointSnapshot<T>>,
    /// Uniform summaries at every grid time.
    pub grid_summaries: Vec<SummaryStats<T>>,
    pub paths: Option<PathStore<T>>,
    pub euler_steps: u64,
}

impl<T: Real> Simulation<T> {
    /// `n` particles advanced together, each step reading the empirical
    /// measure of all of them at the previous grid time.
    pub(crate) fn classical_system(
        &self,
        rep: u64,
        n: usize,
        purpose: Purpose,
        full_atoms: bool,
        store_paths: bool,
    ) -> Result<ClassicalSystem<T>> {
        let cfg = self.config();
        let d = self.dim();
        let p = cfg.steps + 1;
        let key = StreamKey::new(cfg.seed, rep, purpose);
        let mut streams: Vec<NoiseStream> = (1..=n as u64).map(|i| key.stream(i)).collect();
        let mut xs = vec![T::zero(); n * d];
        for (x, s) in xs.chunks_mut(d).zip(streams.iter_mut()) {
            cfg.initial.sample(s, x);
        }
        let mut paths = store_paths.then(|| vec![T::zero(); n * p * d]);
        let record = |paths: &mut Option<Vec<T>>, xs: &[T], m: usize| {
            if let Some(ps) = paths {
                for (i, x) in xs.chunks(d).enumerate() {
                    ps[(i * p + m) * d..(i * p + m + 1) * d].copy_from_slice(x);
                }
            }
        };
        record(&mut paths, &xs, 0);
        let full = self.model().interaction() == InteractionForm::FullMeasure;
        let dt = cfg.dt();
        let sqrt_dt = dt.sqrt();
        let mut grid_summaries = Vec::with_capacity(p);
        let mut snapshots = Vec::new();
        let checkpoints = self.checkpoints().to_vec();
        for m in 0..p {
            let summary = uniform_summary(&xs, d);
            let measure = if full || (full_atoms && checkpoints.contains(&m)) {
                Some(WeightedEmpirical::uniform(d, xs.clone())?)
            } else {
                None
            };
            if checkpoints.contains(&m) {
                snapshots.push(CheckpointSnapshot {
                    step: m,
                    time: self.time(m),
                    summary: summary.clone(),
                    measure: if full_atoms { measure.clone() } else { None },
                });
            }
            grid_summaries.push(summary);
            if m == cfg.steps {
                break;
            }
            let view = match &measure {
                Some(mu) if full => MeasureView::Full(mu),
                _ => MeasureView::Summary(grid_summaries.last().expect("pushed")),
            };
            let t = T::of(self.time(m));
            xs.par_chunks_mut(d)
                .zip(streams.par_iter_mut())
                .enumerate()
                .try_for_each(|(i, (x, s))| -> Result<()> {
                    let mut dw = vec![T::zero(); d];
                    for w in dw.iter_mut() {
                        *w = T::of(sqrt_dt * s.normal());
                    }
                    let mut drift = vec![T::zero(); d];
                    let sigma = self
                        .model()
                        .coefficients_into(t, x, &view, &mut drift)
                        .map_err(|e| crate::SpocError::InRun {
                            replication: rep,
                            particle: i + 1,
                            step: m + 1,
                            source: Box::new(e),
                        })?;
                    for (xi, &b) in x.iter_mut().zip(&drift) {
                        *xi += b * T::of(dt);
                    }
                    sigma.apply(&dw, x);
                    let mag = x.iter().fold(0.0f64, |a, v| a.max(v.as_f64().abs()));
                    if !(mag <= crate::simulate::engine::BLOW_UP) {
                        return Err(crate::SpocError::BlowUp {
                            replication: rep,
                            particle: i + 1,
                            step: m + 1,
                            magnitude: mag,
                        });
                    }
                    Ok(())
                })?;
            record(&mut paths, &xs, m + 1);
        }
        Ok(ClassicalSystem {
            snapshots,
            grid_summaries,
            paths: paths.map(|data| PathStore {
                count: n,
                points: p,
                dim: d,
                data,
            }),
            euler_steps: (n * cfg.steps) as u64,
        })
    }

    /// Eq. (1.2): an independent `n`-particle system per milestone `n`
    /// (particle `i` uses the same stream in every system).
    pub fn classical_poc(&self) -> Result<RunResult<T>> {
        let start = Instant::now();
        let cfg = self.config();
        let full = cfg.measure_backend == MeasureBackend::FullAtoms;
        let milestones = self.milestones().to_vec();
        let reps = self.pool()?.install(|| {
            (0..cfg.replications as u64)
                .into_par_iter()
                .map(|r| {
                    let mut snapshots = Vec::new();
                    let mut steps = 0;
                    let mut paths = None;
                    for &n in &milestones {
                        let keep_paths = cfg.store_paths && n == *milestones.last().expect("non-empty");
                        let sys = self.classical_system(r, n, Purpose::Particle, full, keep_paths)?;
                        steps += sys.euler_steps;
                        snapshots.push(MilestoneSnapshot {
                            n,
                            checkpoints: sys.snapshots,
                        });
                        if sys.paths.is_some() {
                            paths = sys.paths;
                        }
                    }
                    Ok(ReplicationResult {
                        replication: r,
                        snapshots,
                        paths,
                        euler_steps: steps,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(RunResult {
            version: crate::simulate::result::CRATE_VERSION.to_string(),
            method: Method::ClassicalPoc,
            config: cfg.clone(),
            euler_steps: reps.iter().map(|r| r.euler_steps).sum(),
            replications: reps,
            notes: vec!["classical milestones are independent systems of n particles".to_string()],
            wall_time_secs: start.elapsed().as_secs_f64(),
        })
    }
}

/// Runs the classical mean-field particle system with the built-in model
/// named in `config`.
pub fn classical_poc_run<T: Real>(config: &SimConfig) -> Result<RunResult<T>> {
    Simulation::new(config.clone())?.classical_poc()
}
