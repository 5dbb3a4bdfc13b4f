use super::*;
use crate::models::{Diffusion, InteractionForm, ModelSpec, MomentClosure, NoiseForm};
use crate::schedules::ScheduleKind;
use crate::SpocError;

fn ou(n: usize) -> SimConfig {
    let mut c = SimConfig::new(
        ModelConfig::new("mean_field_ou", &[]),
        ScheduleKind::Harmonic,
        InitialLaw::Dirac { point: vec![1.0] },
        1.0,
        30,
        n,
    );
    c.seed = 11;
    c
}

fn decay_model() -> ModelSpec<f64> {
    ModelSpec::<f64>::custom(
        "decay",
        1,
        InteractionForm::MomentOnly,
        NoiseForm::MeasureFree,
        |_t, x, _mu, out| out[0] = -x[0],
        |_t, _x, _mu| Diffusion::Scalar(0.0),
    )
    .unwrap()
}

#[test]
fn single_particle_is_frozen_dirac() {
    let mut c = ou(1);
    c.initial = InitialLaw::Gaussian { mean: vec![0.0], std: 1.0 };
    c.checkpoints = vec![0.0, 0.5, 1.0];
    c.measure_backend = MeasureBackend::FullAtoms;
    let r = spoc_run::<f64>(&c).unwrap();
    let snap = &r.replications[0].snapshots[0];
    let x0 = snap.checkpoints[0].summary.mean[0];
    for cp in &snap.checkpoints {
        let mu = cp.measure.as_ref().unwrap();
        assert_eq!(mu.len(), 1);
        assert_eq!(mu.atom(0), &[x0]);
        assert_eq!(cp.summary.mean, vec![x0]);
    }
}

#[test]
fn deterministic_decay_is_the_euler_iterate() {
    let mut c = ou(20);
    c.initial = InitialLaw::Gaussian { mean: vec![0.0], std: 2.0 };
    c.store_paths = true;
    let sim = Simulation::with_model(c.clone(), decay_model()).unwrap();
    let r = sim.spoc().unwrap();
    let ps = r.replications[0].paths.as_ref().unwrap();
    let dt = c.dt();
    for i in 1..ps.count {
        let path = ps.path(i);
        let mut x = path[0];
        for m in 1..=c.steps {
            x += -x * dt;
            assert_eq!(path[m], x);
            let closed = (1.0 - dt).powi(m as i32) * path[0];
            assert!((path[m] - closed).abs() <= 1e-14 * path[0].abs().max(1.0));
        }
    }
    // Particle 1 stays at X_0.
    assert!(ps.path(0).iter().all(|&v| v == ps.path(0)[0]));
}

#[test]
fn anytime_snapshots_match_shorter_runs() {
    let mut c = ou(300);
    c.milestones = vec![40, 150, 300];
    c.checkpoints = vec![0.5, 1.0];
    c.replications = 2;
    c.measure_backend = MeasureBackend::FullAtoms;
    let full = spoc_run::<f64>(&c).unwrap();
    for &n in &[40usize, 150] {
        let mut short = c.clone();
        short.particles = n;
        short.milestones = vec![n];
        let s = spoc_run::<f64>(&short).unwrap();
        for (a, b) in full.replications.iter().zip(&s.replications) {
            assert_eq!(a.milestone(n).unwrap(), b.milestone(n).unwrap());
        }
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let mut c = ou(200);
    c.replications = 3;
    c.milestones = vec![100, 200];
    c.workers = 1;
    let a = spoc_run::<f64>(&c).unwrap();
    c.workers = 4;
    let b = spoc_run::<f64>(&c).unwrap();
    assert!(a.same_output(&b));
    c.batch_sizes = Some(vec![20, 30, 50, 100]);
    let x = batch_spoc_run::<f64>(&c).unwrap();
    c.workers = 1;
    let y = batch_spoc_run::<f64>(&c).unwrap();
    assert!(x.same_output(&y));
}

#[test]
fn all_ones_batches_reproduce_spoc() {
    let mut c = ou(120);
    c.milestones = vec![10, 60, 120];
    c.measure_backend = MeasureBackend::FullAtoms;
    c.store_paths = true;
    let a = spoc_run::<f64>(&c).unwrap();
    c.batch_sizes = Some(vec![1; 120]);
    let b = batch_spoc_run::<f64>(&c).unwrap();
    assert_eq!(a.replications, b.replications);
}

#[test]
fn two_batch_weights() {
    let mut c = ou(40);
    c.batch_sizes = Some(vec![20, 20]);
    c.measure_backend = MeasureBackend::FullAtoms;
    let r = batch_spoc_run::<f64>(&c).unwrap();
    let mu = r.replications[0].snapshots[0].last().measure.clone().unwrap();
    assert_eq!(mu.len(), 40);
    let w = mu.weights();
    for (i, wi) in w.iter().enumerate() {
        let expected = 0.5 / 20.0;
        assert!((wi - expected).abs() < 1e-15, "atom {i}: {wi}");
    }
    let mut c3 = ou(30);
    c3.batch_sizes = Some(vec![10, 20]);
    c3.schedule = ScheduleKind::PowerLaw { r: 0.5 };
    c3.measure_backend = MeasureBackend::FullAtoms;
    let r = batch_spoc_run::<f64>(&c3).unwrap();
    let mu = r.replications[0].snapshots[0].last().measure.clone().unwrap();
    let a2 = 2f64.powf(-0.5);
    for (i, wi) in mu.weights().iter().enumerate() {
        let expected = if i < 10 { (1.0 - a2) / 10.0 } else { a2 / 20.0 };
        assert!((wi - expected).abs() < 1e-15);
    }
}

#[test]
fn single_batch_is_frozen_initial_measure() {
    let mut c = ou(50);
    c.initial = InitialLaw::Gaussian { mean: vec![0.0], std: 1.0 };
    c.batch_sizes = Some(vec![50]);
    c.checkpoints = vec![0.0, 1.0];
    let r = batch_spoc_run::<f64>(&c).unwrap();
    let s = &r.replications[0].snapshots[0];
    assert_eq!(s.checkpoints[0].summary, s.checkpoints[1].summary);
}

#[test]
fn backends_agree_for_moment_models() {
    let mut c = ou(300);
    c.milestones = vec![100, 300];
    c.checkpoints = vec![0.2, 1.0];
    let a = spoc_run::<f64>(&c).unwrap();
    c.measure_backend = MeasureBackend::FullAtoms;
    let b = spoc_run::<f64>(&c).unwrap();
    for (ra, rb) in a.replications.iter().zip(&b.replications) {
        for (sa, sb) in ra.snapshots.iter().zip(&rb.snapshots) {
            for (ca, cb) in sa.checkpoints.iter().zip(&sb.checkpoints) {
                assert_eq!(ca.summary, cb.summary);
                // The atoms agree with the running summary up to rounding.
                let m = cb.measure.as_ref().unwrap().mean()[0];
                assert!((m - cb.summary.mean[0]).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn ou_mean_is_close_to_the_ode() {
    let mut c = ou(4000);
    c.replications = 4;
    let r = spoc_run::<f64>(&c).unwrap();
    let m: f64 = r.terminal_means(4000).iter().sum::<f64>() / 4.0;
    assert!((m - (-3.0f64).exp()).abs() < 0.05, "{m}");
}

#[test]
fn reference_ode_examples() {
    let model = crate::models::builtin_model::<f64>("mean_field_ou", &Default::default()).unwrap();
    let closure = model.moment_closure().unwrap();
    let (states, clamps) = solve_moment_ode(closure, vec![1.0, 1.0], 1.0, 30, RK4_SUBSTEPS);
    assert_eq!(clamps, 0);
    for (m, s) in states.iter().enumerate() {
        let t = m as f64 / 30.0;
        assert!((s[0] - (-3.0 * t).exp()).abs() < 1e-8);
    }
    let (states, _) = solve_moment_ode(closure, vec![1.0, 1.0], 20.0, 400, RK4_SUBSTEPS);
    let last = states.last().unwrap();
    assert!(last[0].abs() < 1e-12);
    assert!((last[1] - 4.0 / 9.0).abs() < 1e-10);
}

#[test]
fn reference_samples_follow_the_moments() {
    let mut c = ou(10);
    c.checkpoints = vec![1.0];
    let sim = Simulation::<f64>::new(c).unwrap();
    let r = sim.reference(100_000, 0).unwrap();
    assert!(!r.surrogate);
    let mu = r.sample_at(30).unwrap();
    // Euler bias on the mean is about 0.013 at M = 30; sampling sd about 0.002.
    assert!((mu.mean()[0] - r.mean[30][0]).abs() < 0.025);
    assert!((mu.moment(2).unwrap() - r.second_moment[30]).abs() < 0.03);
}

#[test]
fn surrogate_reference_for_models_without_closure() {
    let mut c = ou(10);
    c.model = ModelConfig::new("curie_weiss", &[("beta", 1.0), ("K", 0.5), ("sigma", 1.0)]);
    let sim = Simulation::<f64>::new(c).unwrap();
    let r = sim.reference(500, 0).unwrap();
    assert!(r.surrogate);
    assert_eq!(r.mean.len(), 31);
    assert!(r.sample_at(30).is_some());
}

#[test]
fn coupling_without_interaction_has_zero_gap() {
    let mut c = ou(50);
    c.milestones = vec![1, 10, 50];
    c.initial = InitialLaw::Gaussian { mean: vec![0.0], std: 1.0 };
    let model = ModelSpec::<f64>::custom(
        "free",
        1,
        InteractionForm::MomentOnly,
        NoiseForm::MeasureFree,
        |_t, x, _mu, out| out[0] = -x[0] + (x[0]).sin(),
        |_t, _x, _mu| Diffusion::Scalar(0.7),
    )
    .unwrap()
    .with_moment_closure(MomentClosure::new(|_t, _s, out| out.iter_mut().for_each(|o| *o = 0.0)));
    let sim = Simulation::with_model(c, model).unwrap();
    let cr = sim.coupled_spoc().unwrap();
    assert!(cr.mean_gap.iter().all(|&g| g == 0.0));
}

#[test]
fn coupled_paths_match_plain_spoc() {
    let mut c = ou(100);
    c.milestones = vec![1, 50, 100];
    let plain = spoc_run::<f64>(&c).unwrap();
    let cr = coupled_spoc_run::<f64>(&c).unwrap();
    assert_eq!(plain.replications, cr.run.replications);
    assert_eq!(cr.gaps[0][0], 0.0);
    assert!(cr.mean_gap[2] > 0.0);
}

#[test]
fn classical_single_particle() {
    let mut c = ou(1);
    c.store_paths = true;
    let r = classical_poc_run::<f64>(&c).unwrap();
    let ps = r.replications[0].paths.as_ref().unwrap();
    // mu = delta_x: drift -3x, diffusion 2 - |x|.
    let path = ps.path(0);
    assert_eq!(path[0], 1.0);
    assert!(path[1] != 1.0);
    let s = &r.replications[0].snapshots[0].last().summary;
    assert_eq!(s.mean[0], path[30]);
}

#[test]
fn classical_ou_mean() {
    let mut c = ou(20_000);
    c.replications = 2;
    let r = classical_poc_run::<f64>(&c).unwrap();
    let m: f64 = r.terminal_means(20_000).iter().sum::<f64>() / 2.0;
    assert!((m - (-3.0f64).exp()).abs() < 0.03, "{m}");
}

#[test]
fn blow_up_is_reported_with_context() {
    let mut c = ou(5);
    c.model = ModelConfig::new("curie_weiss", &[("beta", 1.0), ("K", 0.5), ("sigma", 1.0)]);
    c.initial = InitialLaw::Dirac { point: vec![50.0] };
    c.steps = 2;
    c.horizon = 2.0;
    match spoc_run::<f64>(&c) {
        Err(e @ SpocError::BlowUp { .. }) => {
            assert!(e.is_numeric_blowup());
            let SpocError::BlowUp { particle, step, .. } = e else { unreachable!() };
            assert_eq!((particle, step), (2, 2));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn self_inclusive_changes_the_dynamics() {
    let mut c = ou(50);
    let a = spoc_run::<f64>(&c).unwrap();
    c.self_inclusive = true;
    let b = spoc_run::<f64>(&c).unwrap();
    assert!(!a.same_output(&b));
    assert!(b.notes.iter().any(|n| n.contains("self_inclusive")));
}

#[test]
fn resume_from_saved_state() {
    let mut c = ou(200);
    c.milestones = vec![80, 200];
    c.measure_backend = MeasureBackend::FullAtoms;
    let sim = Simulation::<f64>::new(c).unwrap();
    let mut e = SpocEngine::new(&sim, 0);
    assert_eq!(e.run_to_next_milestone().unwrap(), Some(80));
    let saved = serde_json::to_string(&e.into_state()).unwrap();
    let state: SpocState<f64> = serde_json::from_str(&saved).unwrap();
    let mut e = SpocEngine::resume(&sim, state).unwrap();
    e.run_to(200).unwrap();
    let resumed = e.finish();
    let direct = sim.spoc().unwrap();
    assert_eq!(resumed.snapshots, direct.replications[0].snapshots);
}

#[test]
fn run_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = ou(30);
    c.replications = 2;
    c.store_paths = true;
    c.measure_backend = MeasureBackend::FullAtoms;
    c.checkpoints = vec![0.5, 1.0];
    let r = spoc_run::<f64>(&c).unwrap();
    let m = write_run_dir(dir.path(), &r, true).unwrap();
    let back = read_manifest(dir.path()).unwrap();
    assert!(back.complete);
    assert_eq!(back.config, c);
    assert_eq!(back.summaries.len(), m.summaries.len());
    let paths = read_paths(&dir.path().join("paths.bin")).unwrap();
    assert_eq!(paths.len(), 2);
    assert_eq!(&paths[1], r.replications[1].paths.as_ref().unwrap());
    let csv = std::fs::read_to_string(dir.path().join("snapshots/rep0_n30_m30.csv")).unwrap();
    assert!(csv.starts_with("x0,weight\n"));
    assert_eq!(csv.lines().count(), 31);
}

#[test]
fn single_precision_runs() {
    let c = ou(100);
    let r = spoc_run::<f32>(&c).unwrap();
    let m = r.terminal_means(100)[0];
    assert!(m.is_finite());
}

#[test]
fn full_measure_model_needs_atoms() {
    let c = ou(10);
    let model = ModelSpec::<f64>::custom(
        "conv",
        1,
        InteractionForm::FullMeasure,
        NoiseForm::MeasureFree,
        |_t, x, mu, out| {
            let a = mu.atoms().unwrap();
            out[0] = a.iter().map(|(y, w)| w * (y[0] - x[0])).sum::<f64>();
        },
        |_t, _x, _mu| Diffusion::Scalar(1.0),
    )
    .unwrap();
    assert!(Simulation::with_model(c.clone(), model.clone()).is_err());
    let mut c = c;
    c.measure_backend = MeasureBackend::FullAtoms;
    let sim = Simulation::with_model(c, model).unwrap();
    let a = sim.spoc().unwrap();
    let b = sim.classical_poc().unwrap();
    assert!(a.terminal_means(10)[0].is_finite() && b.terminal_means(10)[0].is_finite());
}
