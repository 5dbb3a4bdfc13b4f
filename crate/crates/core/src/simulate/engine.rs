use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpocError};
use crate::measures::{SummaryStats, WeightedEmpirical};
use crate::models::{InteractionForm, MeasureView, ModelSpec};
use crate::real::Real;
use crate::rng::{NoiseStream, Purpose, StreamKey};
use crate::schedules::UpdateSchedule;
use crate::simulate::config::{MeasureBackend, SimConfig};
use crate::simulate::result::{
    CheckpointSnapshot, Method, MilestoneSnapshot, PathStore, ReplicationResult, RunResult,
    CRATE_VERSION,
};

/// Any coordinate beyond this aborts the run.
pub const BLOW_UP: f64 = 1e8;

/// Measures at every grid time `t_0..t_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeasures<T> {
    pub summaries: Vec<SummaryStats<T>>,
    pub measures: Option<Vec<WeightedEmpirical<T>>>,
}

impl<T: Real> GridMeasures<T> {
    fn view(&self, m: usize, form: InteractionForm) -> MeasureView<'_, T> {
        match (form, &self.measures) {
            (InteractionForm::FullMeasure, Some(ms)) => MeasureView::Full(&ms[m]),
            _ => MeasureView::Summary(&self.summaries[m]),
        }
    }
}

/// Uniform summary of `n` points stored back to back, summed in index order.
pub(crate) fn uniform_summary<T: Real>(xs: &[T], dim: usize) -> SummaryStats<T> {
    let mut s = SummaryStats {
        mean: vec![T::zero(); dim],
        second_moment: T::zero(),
        higher: Vec::new(),
    };
    s.absorb_batch(xs, T::one());
    s
}

/// A validated configuration bound to a model.
#[derive(Debug, Clone)]
pub struct Simulation<T> {
    config: SimConfig,
    model: ModelSpec<T>,
    schedule: UpdateSchedule,
    checkpoints: Vec<usize>,
    milestones: Vec<usize>,
}

enum Coupling<'a, T> {
    None,
    /// Shadow path driven by reference moments at each grid time.
    Shadow(&'a [SummaryStats<T>], &'a mut [T]),
}

impl<T: Real> Simulation<T> {
    /// Uses the built-in model named in the configuration.
    pub fn new(config: SimConfig) -> Result<Self> {
        let model = config.model.build()?;
        Self::with_model(config, model)
    }

    pub fn with_model(config: SimConfig, model: ModelSpec<T>) -> Result<Self> {
        config.validate()?;
        config.check_model(&model)?;
        Ok(Self {
            schedule: config.update_schedule()?,
            checkpoints: config.checkpoint_steps()?,
            milestones: config.milestone_list(),
            config,
            model,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn model(&self) -> &ModelSpec<T> {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn milestones(&self) -> &[usize] {
        &self.milestones
    }

    pub fn checkpoints(&self) -> &[usize] {
        &self.checkpoints
    }

    fn points(&self) -> usize {
        self.config.steps + 1
    }

    fn batch_count(&self) -> usize {
        self.config.schedule_len()
    }

    fn batch_size(&self, k: usize) -> usize {
        match &self.config.batch_sizes {
            Some(b) => b[k - 1],
            None => 1,
        }
    }

    fn alpha(&self, k: usize) -> Result<T> {
        Ok(T::of(self.schedule.alpha(k)?).max(T::min_positive_value()))
    }

    pub(crate) fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| SpocError::Config(format!("thread pool: {e}")))
    }

    pub(crate) fn time(&self, m: usize) -> f64 {
        m as f64 * self.config.dt()
    }

    fn in_run(&self, rep: u64, particle: usize, step: usize) -> impl FnOnce(SpocError) -> SpocError {
        move |e| match e {
            e @ SpocError::BlowUp { .. } => e,
            e => SpocError::InRun {
                replication: rep,
                particle,
                step,
                source: Box::new(e),
            },
        }
    }

    fn guard(&self, rep: u64, particle: usize, step: usize, x: &[T]) -> Result<()> {
        let mag = x.iter().fold(0.0f64, |a, v| a.max(v.as_f64().abs()));
        if !(mag <= BLOW_UP) {
            return Err(SpocError::BlowUp {
                replication: rep,
                particle,
                step,
                magnitude: mag,
            });
        }
        Ok(())
    }

    /// One Euler–Maruyama step `x <- x + b dt + sigma sqrt(dt) z`, with `z`
    /// already drawn into `dw` (scaled here).
    #[inline]
    fn euler(&self, t: T, x: &mut [T], view: &MeasureView<'_, T>, dw: &[T], drift: &mut [T]) -> Result<()> {
        let sigma = self.model.coefficients_into(t, x, view, drift)?;
        let dt = T::of(self.config.dt());
        for (xi, &b) in x.iter_mut().zip(drift.iter()) {
            *xi += b * dt;
        }
        sigma.apply(dw, x);
        Ok(())
    }

    fn draw(&self, stream: &mut NoiseStream, dw: &mut [T]) {
        let s = self.config.dt().sqrt();
        for w in dw.iter_mut() {
            *w = T::of(s * stream.normal());
        }
    }

    /// Simulates particle `particle` (1-based) of replication `rep` against
    /// the frozen grid measures and writes its path (`(M+1) * dim` values).
    fn particle_path(
        &self,
        rep: u64,
        particle: usize,
        grid: &GridMeasures<T>,
        self_alpha: Option<T>,
        out: &mut [T],
        mut coupling: Coupling<'_, T>,
    ) -> Result<u64> {
        let d = self.dim();
        let mut stream = StreamKey::new(self.config.seed, rep, Purpose::Particle).stream(particle as u64);
        self.config.initial.sample(&mut stream, &mut out[..d]);
        if let Coupling::Shadow(_, y) = &mut coupling {
            y[..d].copy_from_slice(&out[..d]);
        }
        let form = self.model.interaction();
        let mut dw = vec![T::zero(); d];
        let mut drift = vec![T::zero(); d];
        for m in 1..=self.config.steps {
            let t = T::of(self.time(m - 1));
            self.draw(&mut stream, &mut dw);
            let (prev, next) = out.split_at_mut(m * d);
            let next = &mut next[..d];
            next.copy_from_slice(&prev[(m - 1) * d..]);
            let step = |x: &mut [T], drift: &mut [T]| -> Result<()> {
                match self_alpha {
                    None => self.euler(t, x, &grid.view(m - 1, form), &dw, drift),
                    Some(a) => {
                        let x0 = x.to_vec();
                        match (form, &grid.measures) {
                            (InteractionForm::FullMeasure, Some(ms)) => {
                                let mu = ms[m - 1].update(&x0, a)?;
                                self.euler(t, x, &MeasureView::Full(&mu), &dw, drift)
                            }
                            _ => {
                                let mut s = grid.summaries[m - 1].clone();
                                s.absorb(&x0, a);
                                self.euler(t, x, &MeasureView::Summary(&s), &dw, drift)
                            }
                        }
                    }
                }
            };
            step(next, &mut drift).map_err(self.in_run(rep, particle, m))?;
            self.guard(rep, particle, m, next)?;
            if let Coupling::Shadow(reference, y) = &mut coupling {
                let (yp, yn) = y.split_at_mut(m * d);
                let yn = &mut yn[..d];
                yn.copy_from_slice(&yp[(m - 1) * d..]);
                self.euler(t, yn, &MeasureView::Summary(&reference[m - 1]), &dw, &mut drift)
                    .map_err(self.in_run(rep, particle, m))?;
                self.guard(rep, particle, m, yn)?;
            }
        }
        Ok(self.config.steps as u64)
    }

    fn frozen_path(&self, rep: u64, particle: usize, out: &mut [T]) {
        let d = self.dim();
        let mut stream = StreamKey::new(self.config.seed, rep, Purpose::Particle).stream(particle as u64);
        self.config.initial.sample(&mut stream, &mut out[..d]);
        for m in 1..self.points() {
            out.copy_within(0..d, m * d);
        }
    }

    fn notes(&self, method: Method) -> Vec<String> {
        let mut n = Vec::new();
        if method == Method::BatchSpoc {
            n.push("batch_normalization = 1/N_k".to_string());
            n.push("batch_measure_index = previous (drift and diffusion both read mu^{k-1})".to_string());
        }
        if self.config.self_inclusive && method != Method::ClassicalPoc {
            n.push("self_inclusive = true (particle n reads mu^n)".to_string());
        }
        n
    }

    /// Wraps finished replications (for example resumed ones) into a run.
    pub fn assemble(&self, method: Method, reps: Vec<ReplicationResult<T>>, wall_time_secs: f64) -> RunResult<T> {
        RunResult {
            version: CRATE_VERSION.to_string(),
            method,
            config: self.config.clone(),
            euler_steps: reps.iter().map(|r| r.euler_steps).sum(),
            replications: reps,
            notes: self.notes(method),
            wall_time_secs,
        }
    }

    /// Algorithm 1: particles one at a time against the frozen `mu^{n-1}`.
    pub fn spoc(&self) -> Result<RunResult<T>> {
        if self.config.batch_sizes.is_some() {
            return Err(SpocError::Config("spoc_run takes no batch_sizes; use batch_spoc_run".into()));
        }
        self.run_engine(Method::Spoc)
    }

    /// Algorithm 2: batch `k` of size `N_k` against the frozen `mu^{k-1}`.
    pub fn batch_spoc(&self) -> Result<RunResult<T>> {
        if self.config.batch_sizes.is_none() {
            return Err(SpocError::Config("batch_spoc_run needs batch_sizes".into()));
        }
        self.run_engine(Method::BatchSpoc)
    }

    /// Runs every replication milestone by milestone. `states[r]`, when
    /// present, resumes replication `r`; `on_milestone` sees each state after
    /// every milestone (and may persist it).
    pub fn run_with_checkpoints<F>(&self, mut states: Vec<Option<SpocState<T>>>, on_milestone: F) -> Result<RunResult<T>>
    where
        F: Fn(&SpocState<T>) -> Result<()> + Sync,
    {
        let start = Instant::now();
        let method = if self.config.batch_sizes.is_some() {
            Method::BatchSpoc
        } else {
            Method::Spoc
        };
        states.resize(self.config.replications, None);
        let reps = self.pool()?.install(|| {
            states
                .into_par_iter()
                .enumerate()
                .map(|(r, st)| {
                    let mut e = match st {
                        Some(st) if st.replication == r as u64 => SpocEngine::resume(self, st)?,
                        Some(_) => {
                            return Err(SpocError::Config(format!("saved state {r} belongs to another replication")))
                        }
                        None => SpocEngine::new(self, r as u64),
                    };
                    while e.run_to_next_milestone()?.is_some() {
                        on_milestone(e.state())?;
                    }
                    e.run_to(self.config.particles)?;
                    Ok(e.finish())
                })
                .collect::<Result<Vec<_>>>()
        })?;
        Ok(self.assemble(method, reps, start.elapsed().as_secs_f64()))
    }

    fn run_engine(&self, method: Method) -> Result<RunResult<T>> {
        let start = Instant::now();
        let reps = self.pool()?.install(|| {
            (0..self.config.replications as u64)
                .into_par_iter()
                .map(|r| {
                    let mut e = SpocEngine::new(self, r);
                    e.run_to(self.config.particles)?;
                    Ok(e.finish())
                })
                .collect::<Result<Vec<_>>>()
        })?;
        info!(
            "{method:?}: {} replications of N = {} in {:.2?}",
            reps.len(),
            self.config.particles,
            start.elapsed()
        );
        Ok(self.assemble(method, reps, start.elapsed().as_secs_f64()))
    }
}

/// Running statistics of a coupled run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingState {
    /// `K_n` of `|X_T^i - Y_T^i|^2` over particles so far.
    pub running: f64,
    /// `(n, K_n)` at each milestone reached.
    pub at_milestones: Vec<(usize, f64)>,
}

/// Serializable state of one SPoC replication, enough to resume it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpocState<T> {
    pub replication: u64,
    pub batches_done: usize,
    pub particles_done: usize,
    pub grid: GridMeasures<T>,
    pub snapshots: Vec<MilestoneSnapshot<T>>,
    pub paths: Option<PathStore<T>>,
    pub euler_steps: u64,
    pub coupling: Option<CouplingState>,
}

/// Drives one replication of Algorithm 1 or 2 batch by batch.
pub struct SpocEngine<'s, T> {
    sim: &'s Simulation<T>,
    state: SpocState<T>,
    reference: Option<Vec<SummaryStats<T>>>,
}

impl<'s, T: Real> SpocEngine<'s, T> {
    pub fn new(sim: &'s Simulation<T>, replication: u64) -> Self {
        let d = sim.dim();
        let p = sim.points();
        let empty = SummaryStats {
            mean: vec![T::zero(); d],
            second_moment: T::zero(),
            higher: Vec::new(),
        };
        Self {
            sim,
            state: SpocState {
                replication,
                batches_done: 0,
                particles_done: 0,
                grid: GridMeasures {
                    summaries: vec![empty; p],
                    measures: None,
                },
                snapshots: Vec::new(),
                paths: sim.config.store_paths.then(|| PathStore::new(p, d)),
                euler_steps: 0,
                coupling: None,
            },
            reference: None,
        }
    }

    /// Continues from a saved state.
    pub fn resume(sim: &'s Simulation<T>, state: SpocState<T>) -> Result<Self> {
        if state.grid.summaries.len() != sim.points() {
            return Err(SpocError::Config("saved state does not match the time grid".into()));
        }
        Ok(Self {
            sim,
            state,
            reference: None,
        })
    }

    /// Also integrates a synchronously coupled shadow path per particle
    /// driven by the given reference moments (one per grid time).
    pub fn with_reference(mut self, reference: Vec<SummaryStats<T>>) -> Self {
        self.reference = Some(reference);
        if self.state.coupling.is_none() {
            self.state.coupling = Some(CouplingState {
                running: 0.0,
                at_milestones: Vec::new(),
            });
        }
        self
    }

    pub fn state(&self) -> &SpocState<T> {
        &self.state
    }

    pub fn particles_done(&self) -> usize {
        self.state.particles_done
    }

    pub fn finished(&self) -> bool {
        self.state.batches_done >= self.sim.batch_count()
    }

    /// Simulates and absorbs the next batch.
    pub fn step_batch(&mut self) -> Result<()> {
        let sim = self.sim;
        let k = self.state.batches_done + 1;
        if k > sim.batch_count() {
            return Err(SpocError::Domain("all batches are done".into()));
        }
        let size = sim.batch_size(k);
        let first = self.state.particles_done + 1;
        let d = sim.dim();
        let p = sim.points();
        let width = p * d;
        let rep = self.state.replication;
        let alpha = sim.alpha(k)?;
        let self_alpha = sim.config.self_inclusive.then_some(alpha);
        let coupled = self.reference.is_some();

        let mut xs = vec![T::zero(); size * width];
        let mut ys = if coupled { vec![T::zero(); size * width] } else { Vec::new() };
        if k == 1 {
            for (i, x) in xs.chunks_mut(width).enumerate() {
                sim.frozen_path(rep, first + i, x);
            }
            if coupled {
                ys.copy_from_slice(&xs);
            }
        } else {
            let grid = &self.state.grid;
            let reference = self.reference.as_deref();
            let run_one = |i: usize, x: &mut [T], y: Option<&mut [T]>| -> Result<u64> {
                let c = match (reference, y) {
                    (Some(r), Some(y)) => Coupling::Shadow(r, y),
                    _ => Coupling::None,
                };
                sim.particle_path(rep, first + i, grid, self_alpha, x, c)
            };
            let steps: u64 = if size == 1 {
                run_one(0, &mut xs, coupled.then_some(&mut ys[..]))?
            } else if coupled {
                xs.par_chunks_mut(width)
                    .zip(ys.par_chunks_mut(width))
                    .enumerate()
                    .map(|(i, (x, y))| run_one(i, x, Some(y)))
                    .collect::<Result<Vec<u64>>>()?
                    .into_iter()
                    .sum()
            } else {
                xs.par_chunks_mut(width)
                    .enumerate()
                    .map(|(i, x)| run_one(i, x, None))
                    .collect::<Result<Vec<u64>>>()?
                    .into_iter()
                    .sum()
            };
            self.state.euler_steps += steps;
        }

        // Absorb the batch at every grid time.
        let full = sim.config.measure_backend == MeasureBackend::FullAtoms;
        let mut at_m = vec![T::zero(); size * d];
        for m in 0..p {
            for i in 0..size {
                at_m[i * d..(i + 1) * d].copy_from_slice(&xs[i * width + m * d..i * width + (m + 1) * d]);
            }
            if k == 1 {
                self.state.grid.summaries[m] = uniform_summary(&at_m, d);
            } else {
                self.state.grid.summaries[m].absorb_batch(&at_m, alpha);
            }
            if full {
                if k == 1 {
                    self.state
                        .grid
                        .measures
                        .get_or_insert_with(Vec::new)
                        .push(WeightedEmpirical::uniform(d, at_m.clone())?);
                } else {
                    self.state.grid.measures.as_mut().expect("created by batch 1")[m]
                        .absorb_batch(&at_m, alpha)?;
                }
            }
        }

        if let Some(c) = &mut self.state.coupling {
            let last = (p - 1) * d;
            let mut gap = 0.0;
            for i in 0..size {
                let x = &xs[i * width + last..i * width + last + d];
                let y = &ys[i * width + last..i * width + last + d];
                gap += x.iter().zip(y).map(|(a, b)| (*a - *b).as_f64().powi(2)).sum::<f64>();
            }
            gap /= size as f64;
            let a = alpha.as_f64();
            c.running = if k == 1 { gap } else { c.running + a * (gap - c.running) };
        }
        if let Some(ps) = &mut self.state.paths {
            for x in xs.chunks(width) {
                ps.push(x);
            }
        }
        self.state.batches_done = k;
        self.state.particles_done += size;
        let n = self.state.particles_done;
        if sim.milestones.binary_search(&n).is_ok() {
            self.snapshot(n);
            debug!("replication {rep}: milestone {n}");
        }
        Ok(())
    }

    fn snapshot(&mut self, n: usize) {
        let sim = self.sim;
        let grid = &self.state.grid;
        let checkpoints = sim
            .checkpoints
            .iter()
            .map(|&m| CheckpointSnapshot {
                step: m,
                time: sim.time(m),
                summary: grid.summaries[m].clone(),
                measure: grid.measures.as_ref().map(|ms| ms[m].clone()),
            })
            .collect();
        self.state.snapshots.push(MilestoneSnapshot { n, checkpoints });
        if let Some(c) = &mut self.state.coupling {
            c.at_milestones.push((n, c.running));
        }
    }

    /// Steps batches until at least `n` particles are in (or all are done).
    pub fn run_to(&mut self, n: usize) -> Result<()> {
        while self.state.particles_done < n && !self.finished() {
            self.step_batch()?;
        }
        Ok(())
    }

    /// Runs to the next milestone; returns it, or `None` when finished.
    pub fn run_to_next_milestone(&mut self) -> Result<Option<usize>> {
        let next = self
            .sim
            .milestones
            .iter()
            .copied()
            .find(|&m| m > self.state.particles_done);
        match next {
            Some(m) => {
                self.run_to(m)?;
                Ok(Some(m))
            }
            None => Ok(None),
        }
    }

    pub fn into_state(self) -> SpocState<T> {
        self.state
    }

    pub fn finish(self) -> ReplicationResult<T> {
        ReplicationResult {
            replication: self.state.replication,
            snapshots: self.state.snapshots,
            paths: self.state.paths,
            euler_steps: self.state.euler_steps,
        }
    }
}

/// Runs Algorithm 1 with the built-in model named in `config`.
pub fn spoc_run<T: Real>(config: &SimConfig) -> Result<RunResult<T>> {
    Simulation::new(config.clone())?.spoc()
}

/// Runs Algorithm 2 with the built-in model named in `config`.
pub fn batch_spoc_run<T: Real>(config: &SimConfig) -> Result<RunResult<T>> {
    Simulation::new(config.clone())?.batch_spoc()
}
