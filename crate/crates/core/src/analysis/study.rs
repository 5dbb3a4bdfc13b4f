//! Convergence studies: per-milestone error estimates across replications,
//! with 90% normal intervals and a log-log rate fit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::analysis::rates::{mean_ci90, rate_fit, std_error, RateFit};
use crate::error::{Result, SpocError};
use crate::measures::{sliced_w2, wasserstein_1d, WeightedEmpirical};
use crate::real::Real;
use crate::rng::{Purpose, StreamKey};
use crate::schedules::{theta_sequence, ScheduleKind, UpdateSchedule};
use crate::simulate::{MeasureBackend, Method, ReferenceSolution, RunResult, SimConfig, Simulation};

/// Quantile nodes used for `W_2` against a Gaussian.
pub const GAUSSIAN_QUANTILE_NODES: usize = 4096;
/// Projections for the multi-dimensional `W_2` estimator.
pub const SLICED_PROJECTIONS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `W_2^2(mu^n_t, reference_t)`.
    W2ToReference,
    /// `|E^n X_t - E X_t|`.
    MeanAbsErr,
    /// `|E^n |X_t|^2 - E|X_t|^2|`.
    SecondMomentErr,
    /// First coordinate of `E^n X_t` itself (no reference needed).
    Mean,
    /// `E^n |X_t|^2` itself.
    SecondMoment,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::W2ToReference => "w2_to_reference",
            Metric::MeanAbsErr => "mean_abs_err",
            Metric::SecondMomentErr => "second_moment_err",
            Metric::Mean => "mean",
            Metric::SecondMoment => "second_moment",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| SpocError::Config(format!("unknown metric `{s}`")))
    }

    pub fn needs_reference(self) -> bool {
        matches!(self, Metric::W2ToReference | Metric::MeanAbsErr | Metric::SecondMomentErr)
    }

    pub fn needs_atoms(self) -> bool {
        self == Metric::W2ToReference
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub estimate: f64,
    pub ci_half_width: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub metric: String,
    pub method: String,
    /// Grid time at which the metric was evaluated.
    pub time: f64,
    pub rows: Vec<ConvergenceRow>,
    pub notes: Vec<String>,
}

impl ConvergenceTable {
    pub fn ns(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.n as f64).collect()
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.estimate).collect()
    }

    /// `n,err,ci_lo,ci_hi` with one line per milestone.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,err,ci_lo,ci_hi\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.n,
                r.estimate,
                r.estimate - r.ci_half_width,
                r.estimate + r.ci_half_width
            ));
        }
        s
    }

    /// Log-log fit when there are at least three positive estimates.
    pub fn fit(&self) -> Option<RateFit> {
        rate_fit(&self.ns(), &self.estimates()).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub table: ConvergenceTable,
    pub fit: Option<RateFit>,
    pub reference_surrogate: bool,
}

impl ConvergenceStudy {
    fn new(table: ConvergenceTable, reference_surrogate: bool, fit_rates: bool) -> Self {
        let fit = if fit_rates { table.fit() } else { None };
        Self {
            table,
            fit,
            reference_surrogate,
        }
    }
}

/// `int_0^1 |F_mu^{-1}(u) - (m + s Phi^{-1}(u))|^2 du` by the midpoint rule
/// on `nodes` quantile levels.
pub fn w2_sq_to_gaussian_1d<T: Real>(mu: &WeightedEmpirical<T>, mean: f64, std: f64, nodes: usize) -> Result<f64> {
    if mu.dim() != 1 {
        return Err(SpocError::DimensionMismatch {
            expected: 1,
            got: mu.dim(),
        });
    }
    let z = gaussian_quantiles(nodes)?;
    Ok(w2_sq_sorted(&sorted_atoms(mu), &z, mean, std))
}

fn gaussian_quantiles(nodes: usize) -> Result<Vec<f64>> {
    if nodes == 0 {
        return Err(SpocError::Domain("need at least one quantile node".into()));
    }
    let g = Normal::new(0.0, 1.0).expect("standard normal");
    Ok((0..nodes)
        .map(|j| g.inverse_cdf((j as f64 + 0.5) / nodes as f64))
        .collect())
}

fn sorted_atoms<T: Real>(mu: &WeightedEmpirical<T>) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = mu.iter().map(|(x, w)| (x[0].as_f64(), w.as_f64())).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

fn w2_sq_sorted(atoms: &[(f64, f64)], z: &[f64], mean: f64, std: f64) -> f64 {
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    let nodes = z.len();
    let mut acc = 0.0;
    let mut i = 0;
    let mut cum = atoms[0].1 / total;
    for (j, &zj) in z.iter().enumerate() {
        let u = (j as f64 + 0.5) / nodes as f64;
        while cum < u && i + 1 < atoms.len() {
            i += 1;
            cum += atoms[i].1 / total;
        }
        let d = atoms[i].0 - (mean + std * zj);
        acc += d * d;
    }
    acc / nodes as f64
}

/// Schedule-weighted empirical measures of iid `N(0, 1)` samples: `E W_2^2`
/// to `N(0, 1)` per milestone, averaged over replications.
pub fn iid_w2_study(
    schedule: &ScheduleKind,
    milestones: &[usize],
    replications: usize,
    seed: u64,
) -> Result<ConvergenceStudy> {
    let ms = sorted_milestones(milestones)?;
    if replications == 0 {
        return Err(SpocError::Config("replications must be positive".into()));
    }
    let max_n = *ms.last().expect("non-empty");
    let sched = UpdateSchedule::new(schedule.clone(), max_n)?;
    let alphas = sched.alphas(max_n)?;
    let z = gaussian_quantiles(GAUSSIAN_QUANTILE_NODES)?;
    let per_rep: Vec<Vec<f64>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut s = StreamKey::new(seed, r, Purpose::Iid).stream(0);
            let mut mu = WeightedEmpirical::<f64>::dirac(&[s.normal()])?;
            let mut out = Vec::with_capacity(ms.len());
            let mut next = 0;
            for n in 1..=max_n {
                if n > 1 {
                    mu.absorb(&[s.normal()], alphas[n - 1])?;
                }
                if ms[next] == n {
                    out.push(w2_sq_sorted(&sorted_atoms(&mu), &z, 0.0, 1.0));
                    next += 1;
                    if next == ms.len() {
                        break;
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let table = ConvergenceTable {
        metric: "w2_sq_to_gaussian".into(),
        method: "iid".into(),
        time: 0.0,
        rows: rows_from(&ms, &per_rep),
        notes: vec![format!(
            "W_2 to N(0,1) by midpoint quantile integration on {GAUSSIAN_QUANTILE_NODES} nodes"
        )],
    };
    Ok(ConvergenceStudy::new(table, false, true))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnMeanRow {
    pub n: usize,
    /// Monte Carlo estimate of `E xi_n^2`.
    pub mean_sq: f64,
    pub std_error: f64,
    /// `theta_n`, the exact value for unit-variance centred samples.
    pub theta: f64,
}

/// The running `K_n` mean `xi_n = xi_{n-1} + alpha_n (Z_n - xi_{n-1})` of
/// iid `N(0, 1)` samples; `E xi_n^2 = theta_n`.
pub fn iid_kn_mean_study(
    schedule: &ScheduleKind,
    milestones: &[usize],
    replications: usize,
    seed: u64,
) -> Result<Vec<KnMeanRow>> {
    let ms = sorted_milestones(milestones)?;
    let max_n = *ms.last().expect("non-empty");
    let sched = UpdateSchedule::new(schedule.clone(), max_n)?;
    let alphas = sched.alphas(max_n)?;
    let theta = theta_sequence(&sched, max_n)?;
    let per_rep: Vec<Vec<f64>> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let mut s = StreamKey::new(seed, r, Purpose::Iid).stream(1);
            let mut xi = 0.0;
            let mut out = Vec::with_capacity(ms.len());
            let mut next = 0;
            for n in 1..=max_n {
                xi += alphas[n - 1] * (s.normal() - xi);
                if next < ms.len() && ms[next] == n {
                    out.push(xi * xi);
                    next += 1;
                }
            }
            out
        })
        .collect();
    Ok(ms
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let v: Vec<f64> = per_rep.iter().map(|r| r[j]).collect();
            KnMeanRow {
                n,
                mean_sq: v.iter().sum::<f64>() / v.len() as f64,
                std_error: std_error(&v),
                theta: theta[n - 1],
            }
        })
        .collect())
}

fn sorted_milestones(ms: &[usize]) -> Result<Vec<usize>> {
    let mut v = ms.to_vec();
    v.sort_unstable();
    v.dedup();
    if v.is_empty() || v[0] == 0 {
        return Err(SpocError::Config("milestones must be positive and non-empty".into()));
    }
    Ok(v)
}

fn rows_from(ms: &[usize], per_rep: &[Vec<f64>]) -> Vec<ConvergenceRow> {
    ms.iter()
        .enumerate()
        .map(|(j, &n)| {
            let v: Vec<f64> = per_rep.iter().map(|r| r[j]).collect();
            let (estimate, ci_half_width) = mean_ci90(&v);
            ConvergenceRow {
                n,
                estimate,
                ci_half_width,
                replications: v.len(),
            }
        })
        .collect()
}

/// The metric at grid step `step` for every replication and milestone,
/// `[replication][milestone]`.
pub fn metric_samples<T: Real>(
    run: &RunResult<T>,
    reference: Option<&ReferenceSolution<T>>,
    metric: Metric,
    milestones: &[usize],
    step: usize,
) -> Result<Vec<Vec<f64>>> {
    if metric.needs_reference() && reference.is_none() {
        return Err(SpocError::Config(format!(
            "metric `{}` needs a reference solution",
            metric.name()
        )));
    }
    let ref_sample = match (metric, reference) {
        (Metric::W2ToReference, Some(r)) => Some(r.sample_at(step).ok_or_else(|| {
            SpocError::Config(format!("reference has no sample at step {step}"))
        })?),
        _ => None,
    };
    run.replications
        .iter()
        .map(|rep| {
            milestones
                .iter()
                .map(|&n| {
                    let snap = rep
                        .milestone(n)
                        .and_then(|s| s.at_step(step))
                        .ok_or_else(|| SpocError::Config(format!("no snapshot for n = {n} at step {step}")))?;
                    let mean: Vec<f64> = snap.summary.mean.iter().map(|v| v.as_f64()).collect();
                    let second = snap.summary.second_moment.as_f64();
                    Ok(match metric {
                        Metric::Mean => mean[0],
                        Metric::SecondMoment => second,
                        Metric::MeanAbsErr => {
                            let r = reference.expect("checked");
                            mean.iter()
                                .zip(&r.mean[step])
                                .map(|(a, b)| (a - b) * (a - b))
                                .sum::<f64>()
                                .sqrt()
                        }
                        Metric::SecondMomentErr => {
                            (second - reference.expect("checked").second_moment[step]).abs()
                        }
                        Metric::W2ToReference => {
                            let mu = snap.measure.as_ref().ok_or_else(|| {
                                SpocError::Config("w2_to_reference needs measure_backend = full_atoms".into())
                            })?;
                            let nu = ref_sample.expect("checked");
                            let w = if mu.dim() == 1 {
                                wasserstein_1d(mu, nu, T::of(2.0))?
                            } else {
                                sliced_w2(mu, nu, SLICED_PROJECTIONS, run.config.seed)?
                            };
                            w.as_f64().powi(2)
                        }
                    })
                })
                .collect()
        })
        .collect()
}

/// Table for an existing run; the metric is read at grid step `step`.
pub fn study_from_run<T: Real>(
    run: &RunResult<T>,
    reference: Option<&ReferenceSolution<T>>,
    metric: Metric,
    milestones: &[usize],
    step: usize,
) -> Result<ConvergenceStudy> {
    let ms = sorted_milestones(milestones)?;
    let per_rep = metric_samples(run, reference, metric, &ms, step)?;
    let mut notes = run.notes.clone();
    if metric == Metric::W2ToReference && run.config.initial.dim() > 1 {
        notes.push(format!("W_2 estimated by sliced W_2 with {SLICED_PROJECTIONS} projections"));
    }
    let surrogate = reference.is_some_and(|r| r.surrogate);
    if surrogate {
        notes.push("reference is a surrogate classical run".into());
    }
    let table = ConvergenceTable {
        metric: metric.name().into(),
        method: serde_json::to_value(run.method)?.as_str().unwrap_or("").to_string(),
        time: step as f64 * run.config.dt(),
        rows: rows_from(&ms, &per_rep),
        notes,
    };
    Ok(ConvergenceStudy::new(table, surrogate, metric.needs_reference()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyOptions {
    pub milestones: Vec<usize>,
    pub metric: Metric,
    pub replications: usize,
    pub method: Method,
    /// Evaluation time; `None` means the horizon.
    pub time: Option<f64>,
}

impl StudyOptions {
    pub fn new(milestones: &[usize], metric: Metric, replications: usize) -> Self {
        Self {
            milestones: milestones.to_vec(),
            metric,
            replications,
            method: Method::Spoc,
            time: None,
        }
    }
}

/// Runs `opts.method` up to the largest milestone and tabulates the metric.
/// The reference (if needed) uses `config.reference_size()` particles
/// computed from the configuration as given.
pub fn convergence_study_with<T: Real>(config: &SimConfig, opts: &StudyOptions) -> Result<ConvergenceStudy> {
    let ms = sorted_milestones(&opts.milestones)?;
    if opts.replications == 0 {
        return Err(SpocError::Config("replications must be positive".into()));
    }
    let mut cfg = config.clone();
    cfg.reference_particles = Some(config.reference_size());
    cfg.particles = *ms.last().expect("non-empty");
    cfg.milestones = ms.clone();
    cfg.replications = opts.replications;
    if let Some(t) = opts.time {
        if cfg.checkpoints.is_empty() {
            cfg.checkpoints.push(cfg.horizon);
        }
        cfg.checkpoints.push(t);
    }
    if opts.metric.needs_atoms() {
        cfg.measure_backend = MeasureBackend::FullAtoms;
    }
    let sim = Simulation::<T>::new(cfg)?;
    let step = match opts.time {
        Some(t) => (t / sim.config().dt()).round() as usize,
        None => sim.config().steps,
    };
    let run = match opts.method {
        Method::Spoc => sim.spoc()?,
        Method::BatchSpoc => sim.batch_spoc()?,
        Method::ClassicalPoc => sim.classical_poc()?,
        other => {
            return Err(SpocError::Config(format!(
                "convergence studies run spoc, batch_spoc or classical_poc, not {other:?}"
            )))
        }
    };
    let reference = if opts.metric.needs_reference() {
        Some(sim.reference(sim.config().reference_size(), 0)?)
    } else {
        None
    };
    study_from_run(&run, reference.as_ref(), opts.metric, &ms, step)
}

/// SPoC convergence study at the horizon.
pub fn convergence_study<T: Real>(
    config: &SimConfig,
    milestones: &[usize],
    metric: Metric,
    replications: usize,
) -> Result<ConvergenceStudy> {
    convergence_study_with::<T>(config, &StudyOptions::new(milestones, metric, replications))
}

/// One point of a two-method comparison of replication-averaged curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub time: f64,
    pub a: f64,
    pub a_half_width: f64,
    pub b: f64,
    pub b_half_width: f64,
}

impl CurvePoint {
    pub fn gap(&self) -> f64 {
        (self.a - self.b).abs()
    }

    /// 90% half-width of the difference of the two independent estimates.
    pub fn combined_half_width(&self) -> f64 {
        self.a_half_width.hypot(self.b_half_width)
    }
}

/// Replication-averaged `metric` of two runs at every common milestone and
/// checkpoint (no reference metrics).
pub fn compare_curves<T: Real>(
    a: &RunResult<T>,
    b: &RunResult<T>,
    metric: Metric,
    milestones: &[usize],
) -> Result<Vec<CurvePoint>> {
    if metric.needs_reference() {
        return Err(SpocError::Config("curve comparison takes mean or second_moment".into()));
    }
    let ms = sorted_milestones(milestones)?;
    let steps = a.config.checkpoint_steps()?;
    let mut out = Vec::new();
    for &step in &steps {
        let sa = metric_samples(a, None, metric, &ms, step)?;
        let sb = metric_samples(b, None, metric, &ms, step)?;
        for (j, &n) in ms.iter().enumerate() {
            let (ma, ha) = mean_ci90(&sa.iter().map(|r| r[j]).collect::<Vec<_>>());
            let (mb, hb) = mean_ci90(&sb.iter().map(|r| r[j]).collect::<Vec<_>>());
            out.push(CurvePoint {
                n,
                time: step as f64 * a.config.dt(),
                a: ma,
                a_half_width: ha,
                b: mb,
                b_half_width: hb,
            });
        }
    }
    Ok(out)
}
