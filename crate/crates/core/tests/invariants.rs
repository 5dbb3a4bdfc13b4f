use proptest::prelude::*;

use spoc_core::analysis::{density_histogram, identity_pairing_w2, path_space_w2, rate_fit};
use spoc_core::schedules::{theta_sequence, weight_sequence};
use spoc_core::simulate::{spoc_run, InitialLaw, MeasureBackend, ModelConfig, SimConfig};
use spoc_core::{ScheduleKind, UpdateSchedule};

fn ou(n: usize, seed: u64) -> SimConfig {
    let mut c = SimConfig::new(
        ModelConfig::new("mean_field_ou", &[]),
        ScheduleKind::Harmonic,
        InitialLaw::Dirac { point: vec![1.0] },
        1.0,
        10,
        n,
    );
    c.seed = seed;
    c
}

fn schedule() -> impl Strategy<Value = ScheduleKind> {
    prop_oneof![
        Just(ScheduleKind::Harmonic),
        (0.3f64..=1.0).prop_map(|r| ScheduleKind::PowerLaw { r }),
        (0.5f64..0.99).prop_map(|q| ScheduleKind::Geometric { q }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn milestones_and_workers_do_not_change_outputs(seed in 0u64..1_000, n in 2usize..200, workers in 1usize..5) {
        let mut c = ou(200, seed);
        c.replications = 2;
        c.milestones = vec![n, 200];
        c.measure_backend = MeasureBackend::FullAtoms;
        c.workers = workers;
        let long = spoc_run::<f64>(&c).unwrap();
        let mut s = ou(n, seed);
        s.replications = 2;
        s.measure_backend = MeasureBackend::FullAtoms;
        let short = spoc_run::<f64>(&s).unwrap();
        for (a, b) in long.replications.iter().zip(&short.replications) {
            prop_assert_eq!(a.milestone(n), b.milestone(n));
        }
        c.workers = 1;
        prop_assert!(spoc_run::<f64>(&c).unwrap().same_output(&long));
    }

    #[test]
    fn summary_and_atom_backends_agree(seed in 0u64..1_000, sched in schedule()) {
        let mut c = ou(150, seed);
        c.schedule = sched;
        c.milestones = vec![50, 150];
        let summary = spoc_run::<f64>(&c).unwrap();
        c.measure_backend = MeasureBackend::FullAtoms;
        let atoms = spoc_run::<f64>(&c).unwrap();
        for (a, b) in summary.terminal_means(150).iter().zip(atoms.terminal_means(150)) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn theta_matches_direct_ratio(sched in schedule(), n in 1usize..400) {
        let s = UpdateSchedule::new(sched, n).unwrap();
        let th = theta_sequence(&s, n).unwrap();
        let w = weight_sequence(&s, n).unwrap();
        let (mut sw, mut sw2) = (0.0, 0.0);
        for (k, wk) in w.iter().enumerate() {
            sw += wk;
            sw2 += wk * wk;
            let direct = sw2 / (sw * sw);
            prop_assert!((th[k] - direct).abs() <= 1e-10 * direct, "n={} {} vs {}", k + 1, th[k], direct);
        }
    }

    #[test]
    fn rate_fit_r_squared_is_a_fraction(errs in proptest::collection::vec(1e-4f64..1.0, 3..12)) {
        let ns: Vec<f64> = (0..errs.len()).map(|k| 10.0 * 2f64.powi(k as i32)).collect();
        let fit = rate_fit(&ns, &errs).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&fit.r_squared));
        prop_assert_eq!(fit, rate_fit(&ns, &errs).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn path_w2_is_below_synchronous_pairing(seed in 0u64..1_000) {
        let mut c = ou(40, seed);
        c.store_paths = true;
        let sim = spoc_core::Simulation64::new(c.clone()).unwrap();
        let run = sim.spoc().unwrap();
        let reference = sim.reference(40, 0).unwrap();
        let (a, b) = (run.replications[0].paths.as_ref().unwrap(), reference.paths.as_ref().unwrap());
        let times: Vec<f64> = (0..=c.steps).map(|m| m as f64 / c.steps as f64).collect();
        let best = path_space_w2(a, b, &times).unwrap();
        prop_assert!(best <= identity_pairing_w2(a, b, &times).unwrap() + 1e-12);
    }
}

#[test]
fn long_ou_run_settles_at_its_invariant_law() {
    let mut c = ou(100_000, 5);
    c.horizon = 6.0;
    c.steps = 60;
    c.measure_backend = MeasureBackend::FullAtoms;
    let run = spoc_run::<f64>(&c).unwrap();
    let mu = run.replications[0]
        .milestone(100_000)
        .unwrap()
        .checkpoints
        .last()
        .unwrap()
        .measure
        .clone()
        .unwrap();
    let h = density_histogram(&mu, 40, Some((-2.0, 2.0))).unwrap();
    let var = 4.0 / 9.0;
    let gap = h.sup_gap(|x| (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt());
    assert!(gap < 0.1, "sup gap {gap}");
}
