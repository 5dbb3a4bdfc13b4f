use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;
use spoc_core::analysis::{
    compare_curves, convergence_study_with, density_histogram, loglog_svg, mean_ci90, study_from_run,
    ConvergenceStudy, ConvergenceTable, Metric, StudyOptions,
};
use spoc_core::schedules::{schedule_diagnostics, theta_sequence};
use spoc_core::simulate::{
    read_manifest, write_run_dir, CheckpointSnapshot, MeasureBackend, Method, MilestoneSnapshot,
    ReplicationResult, SimConfig, Simulation, SpocState,
};
use spoc_core::{Real, Result, ScheduleKind, SpocError, UpdateSchedule};

use crate::config::{load_config, load_value, parse_counts, parse_range};
use crate::{Common, Format, MethodArg};

fn config_from(common: &Common) -> Result<SimConfig> {
    let mut cfg = load_config(common.config.as_deref(), &common.overrides)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<&Path> {
    let dir = common
        .out
        .as_deref()
        .ok_or_else(|| SpocError::Config("--out DIR is required".into()))?;
    fs::create_dir_all(dir)?;
    Ok(dir)
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let to_io = |e: csv::Error| SpocError::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    w.write_record(header).map_err(to_io)?;
    for r in rows {
        w.write_record(r).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn table_rows(t: &ConvergenceTable, prefix: Option<&str>) -> Vec<Vec<String>> {
    t.rows
        .iter()
        .map(|r| {
            let mut row: Vec<String> = prefix.map(|p| vec![p.to_string()]).unwrap_or_default();
            row.extend([
                r.n.to_string(),
                r.estimate.to_string(),
                (r.estimate - r.ci_half_width).to_string(),
                (r.estimate + r.ci_half_width).to_string(),
            ]);
            row
        })
        .collect()
}

fn print_table(label: &str, t: &ConvergenceTable) {
    println!("{label} ({}, t = {}):", t.metric, t.time);
    for r in &t.rows {
        println!(
            "  n = {:>9}  {:<12.6e} +/- {:.3e}  ({} reps)",
            r.n, r.estimate, r.ci_half_width, r.replications
        );
    }
}

fn study_method(m: MethodArg) -> Method {
    match m {
        MethodArg::Spoc => Method::Spoc,
        MethodArg::BatchSpoc => Method::BatchSpoc,
        MethodArg::ClassicalPoc => Method::ClassicalPoc,
        MethodArg::CoupledSpoc => Method::CoupledSpoc,
        MethodArg::Reference => Method::Reference,
    }
}

const STATE_DIR: &str = "state";

fn state_path(dir: &Path, r: usize) -> PathBuf {
    dir.join(STATE_DIR).join(format!("rep{r}.json"))
}

fn save_state<T: Real + Serialize>(dir: &Path, st: &SpocState<T>) -> Result<()> {
    let path = state_path(dir, st.replication as usize);
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec(st)?)?;
    fs::rename(&tmp, &path)?;
    Ok(())
}

fn same_run(a: &SimConfig, b: &SimConfig) -> bool {
    let mut a = a.clone();
    a.workers = b.workers;
    a == *b
}

/// Algorithms 1 and 2 with per-milestone state files, so that an
/// interrupted run can be continued with `--resume`.
fn checkpointed<T: Real + Serialize + DeserializeOwned>(
    sim: &Simulation<T>,
    dir: &Path,
    resume: bool,
) -> Result<()> {
    let cfg = sim.config();
    let mut states = vec![None; cfg.replications];
    if resume {
        let m = read_manifest(dir)
            .map_err(|e| SpocError::Config(format!("nothing to resume in {}: {e}", dir.display())))?;
        if m.complete {
            println!("run in {} is already complete", dir.display());
            return Ok(());
        }
        if !same_run(&m.config, cfg) {
            return Err(SpocError::Config("configuration differs from the run being resumed".into()));
        }
        for (r, slot) in states.iter_mut().enumerate() {
            let p = state_path(dir, r);
            if p.exists() {
                let st: SpocState<T> = serde_json::from_slice(&fs::read(&p)?)?;
                info!("replication {r}: resuming after {} particles", st.particles_done);
                *slot = Some(st);
            }
        }
    } else {
        let _ = fs::remove_dir_all(dir.join(STATE_DIR));
    }
    fs::create_dir_all(dir.join(STATE_DIR))?;
    let method = if cfg.batch_sizes.is_some() {
        Method::BatchSpoc
    } else {
        Method::Spoc
    };
    write_run_dir(dir, &sim.assemble(method, Vec::new(), 0.0), false)?;
    let run = sim.run_with_checkpoints(states, |st| save_state(dir, st))?;
    write_run_dir(dir, &run, true)?;
    fs::remove_dir_all(dir.join(STATE_DIR))?;
    report_run(&run.replications, cfg.particles, run.wall_time_secs, dir);
    Ok(())
}

fn report_run<T: Real>(reps: &[ReplicationResult<T>], n: usize, secs: f64, dir: &Path) {
    let means: Vec<f64> = reps
        .iter()
        .filter_map(|r| r.milestone(n))
        .map(|s| s.last().summary.mean[0].as_f64())
        .collect();
    if !means.is_empty() {
        let (m, h) = mean_ci90(&means);
        println!("mean at T (n = {n}): {m:.6} +/- {h:.2e} over {} replications", means.len());
    }
    println!("wrote {} in {secs:.2}s", dir.display());
}

pub fn simulate<T: Real + Serialize + DeserializeOwned>(common: &Common, method: MethodArg, resume: bool) -> Result<()> {
    let cfg = config_from(common)?;
    let dir = out_dir(common)?;
    let sim = Simulation::<T>::new(cfg)?;
    let cfg = sim.config().clone();
    if resume && !matches!(method, MethodArg::Spoc | MethodArg::BatchSpoc) {
        return Err(SpocError::Config("only spoc and batch_spoc runs are resumable".into()));
    }
    match method {
        MethodArg::Spoc | MethodArg::BatchSpoc => {
            if (method == MethodArg::BatchSpoc) != cfg.batch_sizes.is_some() {
                return Err(SpocError::Config(
                    "batch_spoc needs batch_sizes in the config and spoc must not have them".into(),
                ));
            }
            checkpointed(&sim, dir, resume)
        }
        MethodArg::ClassicalPoc => {
            let run = sim.classical_poc()?;
            write_run_dir(dir, &run, true)?;
            report_run(&run.replications, cfg.particles, run.wall_time_secs, dir);
            Ok(())
        }
        MethodArg::CoupledSpoc => {
            let cr = sim.coupled_spoc()?;
            write_run_dir(dir, &cr.run, true)?;
            let rows: Vec<Vec<String>> = cr
                .milestones
                .iter()
                .enumerate()
                .map(|(j, n)| {
                    let (m, h) = mean_ci90(&cr.gaps.iter().map(|g| g[j]).collect::<Vec<_>>());
                    vec![n.to_string(), m.to_string(), (m - h).to_string(), (m + h).to_string()]
                })
                .collect();
            match common.format {
                Format::Csv => write_csv(&dir.join("coupling.csv"), &["n", "err", "ci_lo", "ci_hi"], &rows)?,
                Format::Json => write_json(
                    &dir.join("coupling.json"),
                    &json!({"milestones": cr.milestones, "gaps": cr.gaps, "mean_gap": cr.mean_gap}),
                )?,
            }
            for (n, g) in cr.milestones.iter().zip(&cr.mean_gap) {
                println!("n = {n:>9}  K_n E|X_T - Y_T|^2 = {g:.6e}");
            }
            report_run(&cr.run.replications, cfg.particles, cr.run.wall_time_secs, dir);
            Ok(())
        }
        MethodArg::Reference => {
            let start = std::time::Instant::now();
            let n_ref = cfg.reference_size();
            let r = sim.reference(n_ref, 0)?;
            let rows: Vec<Vec<String>> = r
                .times
                .iter()
                .enumerate()
                .map(|(m, t)| {
                    let mut row = vec![m.to_string(), t.to_string()];
                    row.extend(r.mean[m].iter().map(|v| v.to_string()));
                    row.push(r.second_moment[m].to_string());
                    row
                })
                .collect();
            let mut header = vec!["step".to_string(), "time".to_string()];
            header.extend((0..sim.dim()).map(|k| format!("mean{k}")));
            header.push("second_moment".into());
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            write_csv(&dir.join("reference.csv"), &header, &rows)?;
            let mut run = sim.assemble(
                Method::Reference,
                vec![ReplicationResult {
                    replication: 0,
                    snapshots: vec![MilestoneSnapshot {
                        n: n_ref,
                        checkpoints: r.samples.clone(),
                    }],
                    paths: r.paths.clone(),
                    euler_steps: (n_ref * cfg.steps) as u64,
                }],
                start.elapsed().as_secs_f64(),
            );
            if r.surrogate {
                run.notes.push(format!("surrogate reference: classical run with {n_ref} particles"));
            } else {
                run.notes.push(format!("moment ODE by RK4; {} clamp events", r.clamp_events));
            }
            write_run_dir(dir, &run, true)?;
            println!(
                "reference at T: mean {:?}, E|X|^2 = {:.6} ({})",
                r.mean.last().expect("grid is non-empty"),
                r.second_moment.last().expect("grid is non-empty"),
                if r.surrogate { "surrogate" } else { "moment ODE" }
            );
            Ok(())
        }
    }
}

fn milestones_for(cfg: &SimConfig, arg: Option<&str>) -> Result<Vec<usize>> {
    match arg {
        Some(s) => parse_counts(s),
        None => Ok(cfg.milestone_list()),
    }
}

fn write_study(dir: &Path, stem: &str, study: &ConvergenceStudy, format: Format) -> Result<()> {
    match format {
        Format::Csv => write_csv(
            &dir.join(format!("{stem}.csv")),
            &["n", "err", "ci_lo", "ci_hi"],
            &table_rows(&study.table, None),
        ),
        Format::Json => write_json(&dir.join(format!("{stem}.json")), study),
    }
}

pub fn rates(common: &Common, milestones: Option<&str>, metric: &str, method: MethodArg) -> Result<()> {
    let cfg = config_from(common)?;
    let dir = out_dir(common)?;
    let metric = Metric::parse(metric)?;
    let mut opts = StudyOptions::new(&milestones_for(&cfg, milestones)?, metric, cfg.replications);
    opts.method = study_method(method);
    let study = convergence_study_with::<f64>(&cfg, &opts)?;
    write_study(dir, "rates", &study, common.format)?;
    if let Some(fit) = &study.fit {
        write_json(&dir.join("fit.json"), fit)?;
    }
    let title = format!("{} ({})", study.table.metric, cfg.model.name);
    fs::write(dir.join("rates.svg"), loglog_svg(&[(&study.table.method, &study.table)], -0.5, &title))?;
    print_table(&study.table.method, &study.table);
    match &study.fit {
        Some(f) => println!(
            "slope {:.4} +/- {:.4} (R^2 = {:.4})",
            f.slope, f.stderr, f.r_squared
        ),
        None => println!("no rate fit (need three positive estimates)"),
    }
    Ok(())
}

pub fn compare(common: &Common, milestones: Option<&str>, metric: &str) -> Result<()> {
    let mut cfg = config_from(common)?;
    let dir = out_dir(common)?;
    let metric = Metric::parse(metric)?;
    let ms = milestones_for(&cfg, milestones)?;
    cfg.reference_particles = Some(cfg.reference_size());
    cfg.particles = *ms.iter().max().expect("parse_counts is non-empty");
    cfg.milestones = ms.clone();
    if metric.needs_atoms() {
        cfg.measure_backend = MeasureBackend::FullAtoms;
    }
    let sim = Simulation::<f64>::new(cfg)?;
    let spoc = if sim.config().batch_sizes.is_some() {
        sim.batch_spoc()?
    } else {
        sim.spoc()?
    };
    let classical = sim.classical_poc()?;
    let reference = if metric.needs_reference() {
        Some(sim.reference(sim.config().reference_size(), 0)?)
    } else {
        None
    };
    let step = sim.config().steps;
    let a = study_from_run(&spoc, reference.as_ref(), metric, &ms, step)?;
    let b = study_from_run(&classical, reference.as_ref(), metric, &ms, step)?;
    let curves = if metric.needs_reference() {
        Vec::new()
    } else {
        compare_curves(&spoc, &classical, metric, &ms)?
    };
    match common.format {
        Format::Csv => {
            let mut rows = table_rows(&a.table, Some("spoc"));
            rows.extend(table_rows(&b.table, Some("classical_poc")));
            write_csv(&dir.join("compare.csv"), &["method", "n", "err", "ci_lo", "ci_hi"], &rows)?;
            if !curves.is_empty() {
                let rows: Vec<Vec<String>> = curves
                    .iter()
                    .map(|p| {
                        vec![
                            p.n.to_string(),
                            p.time.to_string(),
                            p.a.to_string(),
                            p.a_half_width.to_string(),
                            p.b.to_string(),
                            p.b_half_width.to_string(),
                            p.gap().to_string(),
                            p.combined_half_width().to_string(),
                        ]
                    })
                    .collect();
                write_csv(
                    &dir.join("curves.csv"),
                    &["n", "time", "spoc", "spoc_hw", "classical_poc", "classical_poc_hw", "gap", "combined_hw"],
                    &rows,
                )?;
            }
        }
        Format::Json => write_json(
            &dir.join("compare.json"),
            &json!({"spoc": a, "classical_poc": b, "curves": curves}),
        )?,
    }
    if metric.needs_reference() {
        let both = [("spoc", &a.table), ("classical_poc", &b.table)];
        fs::write(dir.join("compare.svg"), loglog_svg(&both, -0.5, metric.name()))?;
    }
    print_table("spoc", &a.table);
    print_table("classical_poc", &b.table);
    Ok(())
}

pub fn density(common: &Common, bins: usize, range: Option<&str>, milestone: Option<usize>) -> Result<()> {
    let mut cfg = config_from(common)?;
    let dir = out_dir(common)?;
    let n = milestone.unwrap_or(cfg.particles);
    cfg.reference_particles = Some(cfg.reference_size());
    cfg.particles = n;
    cfg.milestones = vec![n];
    cfg.replications = 1;
    cfg.measure_backend = MeasureBackend::FullAtoms;
    let sim = Simulation::<f64>::new(cfg)?;
    let run = if sim.config().batch_sizes.is_some() {
        sim.batch_spoc()?
    } else {
        sim.spoc()?
    };
    let snap: &CheckpointSnapshot<f64> = run.replications[0]
        .milestone(n)
        .ok_or_else(|| SpocError::Config(format!("no snapshot at n = {n}")))?
        .last();
    let mu = snap.measure.as_ref().expect("full_atoms backend keeps measures");
    let range = range.map(parse_range).transpose()?;
    let h = density_histogram(mu, bins, range)?;
    let reference = sim.reference(sim.config().reference_size(), 0)?;
    let href = match reference.sample_at(snap.step) {
        Some(nu) => Some(density_histogram(nu, bins, Some((h.edges[0], h.edges[bins])))?),
        None => None,
    };
    let rows: Vec<Vec<String>> = (0..bins)
        .map(|i| {
            vec![
                h.edges[i].to_string(),
                h.edges[i + 1].to_string(),
                h.centers[i].to_string(),
                h.density[i].to_string(),
                href.as_ref().map(|r| r.density[i].to_string()).unwrap_or_default(),
            ]
        })
        .collect();
    match common.format {
        Format::Csv => write_csv(
            &dir.join("density.csv"),
            &["lo", "hi", "center", "density", "reference"],
            &rows,
        )?,
        Format::Json => write_json(&dir.join("density.json"), &json!({"spoc": h, "reference": href}))?,
    }
    if let Some(r) = &href {
        let gap = h
            .density
            .iter()
            .zip(&r.density)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("n = {n}, t = {}: sup |density - reference| = {gap:.4}", snap.time);
    }
    Ok(())
}

pub fn schedule_diag(common: &Common, schedule: Option<&str>, n: usize, gamma: f64, window: usize) -> Result<()> {
    let kind: ScheduleKind = match schedule {
        Some(s) => serde_json::from_str(s).map_err(|e| SpocError::Config(format!("--schedule: {e}")))?,
        None => {
            let v = load_value(common.config.as_deref(), &common.overrides)?;
            let s = v
                .get("schedule")
                .ok_or_else(|| SpocError::Config("no schedule given (use --schedule or --config)".into()))?;
            serde_json::from_value(s.clone()).map_err(|e| SpocError::Config(format!("schedule: {e}")))?
        }
    };
    let sched = UpdateSchedule::new(kind, n)?;
    let d = schedule_diagnostics(&sched, gamma, window)?;
    let theta = *theta_sequence(&sched, n)?.last().expect("n >= 1");
    let regime = serde_json::to_value(d.regime)?;
    let regime = regime.as_str().unwrap_or_default().to_string();
    let pairs = [
        ("n", n.to_string()),
        ("gamma", d.gamma.to_string()),
        ("window", d.window.to_string()),
        ("alpha_inf_est", d.alpha_inf_est.to_string()),
        ("abar_est", d.abar_est.to_string()),
        ("aunder_est", d.aunder_est.to_string()),
        ("regime", regime),
        ("theta_n", theta.to_string()),
    ];
    for (k, v) in &pairs {
        println!("{k:>14}: {v}");
    }
    if let Some(dir) = common.out.as_deref() {
        fs::create_dir_all(dir)?;
        match common.format {
            Format::Csv => write_csv(
                &dir.join("schedule_diag.csv"),
                &["key", "value"],
                &pairs.iter().map(|(k, v)| vec![k.to_string(), v.clone()]).collect::<Vec<_>>(),
            )?,
            Format::Json => write_json(
                &dir.join("schedule_diag.json"),
                &json!({"diagnostics": d, "theta_n": theta, "schedule": sched.kind()}),
            )?,
        }
    }
    Ok(())
}
