use std::time::Instant;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpocError};
use crate::measures::{SummaryStats, WeightedEmpirical};
use crate::models::{InteractionForm, MeasureView, ModelSpec, MomentClosure};
use crate::real::Real;
use crate::rng::{Purpose, StreamKey};
use crate::simulate::config::SimConfig;
use crate::simulate::engine::{SpocEngine, BLOW_UP};
use crate::simulate::result::{CheckpointSnapshot, Method, PathStore, RunResult};
use crate::simulate::Simulation;

/// RK4 sub-steps per grid step.
pub const RK4_SUBSTEPS: usize = 10;

/// Stand-in for the exact McKean–Vlasov law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution<T> {
    /// True when moments and samples come from a large classical run rather
    /// than the moment ODE.
    pub surrogate: bool,
    pub particles: usize,
    pub times: Vec<f64>,
    /// `E X` at every grid time.
    pub mean: Vec<Vec<f64>>,
    /// `E|X|^2` at every grid time.
    pub second_moment: Vec<f64>,
    /// RK4 stages in which `E|X|^2` went negative and was clamped at zero.
    pub clamp_events: usize,
    /// Empirical measures of the decoupled samples at each checkpoint.
    pub samples: Vec<CheckpointSnapshot<T>>,
    pub paths: Option<PathStore<T>>,
}

impl<T: Real> ReferenceSolution<T> {
    /// Moments at every grid time as summary statistics.
    pub fn summaries(&self) -> Vec<SummaryStats<T>> {
        self.mean
            .iter()
            .zip(&self.second_moment)
            .map(|(m, &s)| SummaryStats {
                mean: m.iter().map(|&v| T::of(v)).collect(),
                second_moment: T::of(s),
                higher: Vec::new(),
            })
            .collect()
    }

    pub fn sample_at(&self, step: usize) -> Option<&WeightedEmpirical<T>> {
        self.samples.iter().find(|s| s.step == step)?.measure.as_ref()
    }
}

/// Classical RK4 for the moment ODE, `substeps` steps per grid step, state
/// `[m_0.., S]`; `S` is clamped at zero whenever a stage would take it
/// negative. Returns the grid-time states and the clamp count.
pub fn solve_moment_ode(
    closure: &MomentClosure,
    init: Vec<f64>,
    horizon: f64,
    steps: usize,
    substeps: usize,
) -> (Vec<Vec<f64>>, usize) {
    let n = init.len();
    let h = horizon / (steps * substeps) as f64;
    let mut clamps = 0;
    let mut clamp = |v: &mut [f64]| {
        if v[n - 1] < 0.0 {
            v[n - 1] = 0.0;
            clamps += 1;
        }
    };
    let mut y = init;
    let mut out = Vec::with_capacity(steps + 1);
    out.push(y.clone());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for i in 0..steps * substeps {
        let t = i as f64 * h;
        closure.rhs(t, &y, &mut k1);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * h * k1[j];
        }
        clamp(&mut tmp);
        closure.rhs(t + 0.5 * h, &tmp, &mut k2);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * h * k2[j];
        }
        clamp(&mut tmp);
        closure.rhs(t + 0.5 * h, &tmp, &mut k3);
        for j in 0..n {
            tmp[j] = y[j] + h * k3[j];
        }
        clamp(&mut tmp);
        closure.rhs(t + h, &tmp, &mut k4);
        for j in 0..n {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        clamp(&mut y);
        if (i + 1) % substeps == 0 {
            out.push(y.clone());
        }
    }
    (out, clamps)
}

impl<T: Real> Simulation<T> {
    /// Reference law with `n_ref` samples for replication `rep`.
    ///
    /// With a moment closure: RK4 moments at `dt / 10`, then `n_ref`
    /// decoupled Euler paths fed the ODE moments. Without one: a classical
    /// run of `n_ref` particles on seed-disjoint streams, flagged as a
    /// surrogate.
    pub fn reference(&self, n_ref: usize, rep: u64) -> Result<ReferenceSolution<T>> {
        if n_ref == 0 {
            return Err(SpocError::Config("reference needs at least one particle".into()));
        }
        let cfg = self.config();
        let d = self.dim();
        let p = cfg.steps + 1;
        let times: Vec<f64> = (0..p).map(|m| self.time(m)).collect();
        let Some(closure) = self.model().moment_closure() else {
            if n_ref < 10 * cfg.particles {
                warn!(
                    "surrogate reference with {n_ref} particles is below 10 N = {}",
                    10 * cfg.particles
                );
            }
            let sys = self.classical_system(rep, n_ref, Purpose::Reference, true, cfg.store_paths)?;
            return Ok(ReferenceSolution {
                surrogate: true,
                particles: n_ref,
                times,
                mean: sys
                    .grid_summaries
                    .iter()
                    .map(|s| s.mean.iter().map(|v| v.as_f64()).collect())
                    .collect(),
                second_moment: sys.grid_summaries.iter().map(|s| s.second_moment.as_f64()).collect(),
                clamp_events: 0,
                samples: sys.snapshots,
                paths: sys.paths,
            });
        };
        let (m0, s0) = cfg.initial.moments();
        let mut init = m0;
        init.push(s0);
        let (states, clamp_events) = solve_moment_ode(closure, init, cfg.horizon, cfg.steps, RK4_SUBSTEPS);
        if clamp_events > 0 {
            warn!("moment ODE: E|X|^2 clamped at zero {clamp_events} times");
        }
        let summaries: Vec<SummaryStats<T>> = states
            .iter()
            .map(|s| SummaryStats {
                mean: s[..d].iter().map(|&v| T::of(v)).collect(),
                second_moment: T::of(s[d]),
                higher: Vec::new(),
            })
            .collect();
        let width = p * d;
        let mut data = vec![T::zero(); n_ref * width];
        let key = StreamKey::new(cfg.seed, rep, Purpose::Reference);
        let dt = cfg.dt();
        let sqrt_dt = dt.sqrt();
        data.par_chunks_mut(width)
            .enumerate()
            .try_for_each(|(i, path)| -> Result<()> {
                let mut s = key.stream(i as u64 + 1);
                cfg.initial.sample(&mut s, &mut path[..d]);
                let mut dw = vec![T::zero(); d];
                let mut drift = vec![T::zero(); d];
                for m in 1..p {
                    for w in dw.iter_mut() {
                        *w = T::of(sqrt_dt * s.normal());
                    }
                    let (prev, next) = path.split_at_mut(m * d);
                    let x = &mut next[..d];
                    x.copy_from_slice(&prev[(m - 1) * d..]);
                    let sigma = self.model().coefficients_into(
                        T::of(self.time(m - 1)),
                        x,
                        &MeasureView::Summary(&summaries[m - 1]),
                        &mut drift,
                    )?;
                    for (xi, &b) in x.iter_mut().zip(&drift) {
                        *xi += b * T::of(dt);
                    }
                    sigma.apply(&dw, x);
                    let mag = x.iter().fold(0.0f64, |a, v| a.max(v.as_f64().abs()));
                    if !(mag <= BLOW_UP) {
                        return Err(SpocError::BlowUp {
                            replication: rep,
                            particle: i + 1,
                            step: m,
                            magnitude: mag,
                        });
                    }
                }
                Ok(())
            })?;
        let mut samples = Vec::new();
        for &m in self.checkpoints() {
            let pts: Vec<T> = data
                .chunks(width)
                .flat_map(|path| path[m * d..(m + 1) * d].iter().copied())
                .collect();
            let mu = WeightedEmpirical::uniform(d, pts)?;
            samples.push(CheckpointSnapshot {
                step: m,
                time: self.time(m),
                summary: mu.summary(2),
                measure: Some(mu),
            });
        }
        Ok(ReferenceSolution {
            surrogate: false,
            particles: n_ref,
            times,
            mean: states.iter().map(|s| s[..d].to_vec()).collect(),
            second_moment: states.iter().map(|s| s[d]).collect(),
            clamp_events,
            samples,
            paths: cfg.store_paths.then(|| PathStore {
                count: n_ref,
                points: p,
                dim: d,
                data,
            }),
        })
    }

    /// SPoC with a synchronously coupled shadow `Y^n` per particle: same
    /// `X_0`, same increments, coefficients read the reference moments.
    pub fn coupled_spoc(&self) -> Result<CoupledRun<T>> {
        let start = Instant::now();
        let cfg = self.config();
        if self.model().interaction() != InteractionForm::MomentOnly {
            return Err(SpocError::Config("coupled runs need a moment-only model".into()));
        }
        if cfg.batch_sizes.is_some() {
            return Err(SpocError::Config("coupled runs are particle by particle".into()));
        }
        let moments = match self.model().moment_closure() {
            Some(_) => self.reference(1, 0)?.summaries(),
            None => self.reference(cfg.reference_size(), 0)?.summaries(),
        };
        let results = self.pool()?.install(|| {
            (0..cfg.replications as u64)
                .into_par_iter()
                .map(|r| {
                    let mut e = SpocEngine::new(self, r).with_reference(moments.clone());
                    e.run_to(cfg.particles)?;
                    let gaps = e
                        .state()
                        .coupling
                        .as_ref()
                        .expect("coupling enabled")
                        .at_milestones
                        .iter()
                        .map(|&(_, g)| g)
                        .collect::<Vec<f64>>();
                    Ok((e.finish(), gaps))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let milestones = self.milestones().to_vec();
        let (reps, gaps): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        let mean_gap = (0..milestones.len())
            .map(|j| gaps.iter().map(|g: &Vec<f64>| g[j]).sum::<f64>() / gaps.len() as f64)
            .collect();
        let run = RunResult {
            version: crate::simulate::result::CRATE_VERSION.to_string(),
            method: Method::CoupledSpoc,
            config: cfg.clone(),
            euler_steps: reps.iter().map(|r| r.euler_steps).sum(),
            replications: reps,
            notes: vec!["coupling gap = K_n of |X_T - Y_T|^2 over particles 1..n".to_string()],
            wall_time_secs: start.elapsed().as_secs_f64(),
        };
        Ok(CoupledRun {
            run,
            milestones,
            gaps,
            mean_gap,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledRun<T> {
    pub run: RunResult<T>,
    pub milestones: Vec<usize>,
    /// `[replication][milestone]`.
    pub gaps: Vec<Vec<f64>>,
    /// Replication average per milestone.
    pub mean_gap: Vec<f64>,
}

/// Reference solution for a built-in or custom model; `n_ref` decoupled
/// samples (or surrogate particles).
pub fn reference_run<T: Real>(model: &ModelSpec<T>, config: &SimConfig, n_ref: usize) -> Result<ReferenceSolution<T>> {
    Simulation::with_model(config.clone(), model.clone())?.reference(n_ref, 0)
}

/// Coupled SPoC with the built-in model named in `config`.
pub fn coupled_spoc_run<T: Real>(config: &SimConfig) -> Result<CoupledRun<T>> {
    Simulation::new(config.clone())?.coupled_spoc()
}
