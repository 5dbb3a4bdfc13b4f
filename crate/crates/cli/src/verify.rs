//! Quick invariant battery behind `spoc verify`.

use spoc_core::measures::{wasserstein_1d, wasserstein_exact, GroundCost};
use spoc_core::models::{build_f_from_kappa, curie_weiss_f_prime_0, FProfile, GridSpec, KappaProfile};
use spoc_core::rng::{Purpose, StreamKey};
use spoc_core::schedules::{normalized_weights, theta_sequence};
use spoc_core::simulate::{solve_moment_ode, InitialLaw, ModelConfig, SimConfig, Simulation, RK4_SUBSTEPS};
use spoc_core::{Result, ScheduleKind, SpocError, UpdateSchedule, WeightedEmpirical};

type Check = fn(usize) -> Result<String>;

fn fail(msg: String) -> Result<String> {
    Err(SpocError::AssumptionViolation(msg))
}

fn theta_harmonic(_: usize) -> Result<String> {
    let n = 1_000_000;
    let th = theta_sequence(&UpdateSchedule::harmonic(n), n)?;
    let worst = th
        .iter()
        .enumerate()
        .map(|(i, t)| (t * (i + 1) as f64 - 1.0).abs())
        .fold(0.0, f64::max);
    if worst > 1e-10 {
        return fail(format!("max |n theta_n - 1| = {worst:e}"));
    }
    Ok(format!("max |n theta_n - 1| = {worst:.1e} for n <= {n}"))
}

fn weights_sum(_: usize) -> Result<String> {
    let kinds = [
        ScheduleKind::Harmonic,
        ScheduleKind::PowerLaw { r: 0.6 },
        ScheduleKind::Geometric { q: 0.9 },
    ];
    let mut worst: f64 = 0.0;
    for k in kinds {
        let s = UpdateSchedule::new(k, 5000)?;
        let w = normalized_weights(&s, 5000)?;
        let th = theta_sequence(&s, 5000)?;
        let sq: f64 = w.iter().map(|v| v * v).sum();
        worst = worst
            .max((w.iter().sum::<f64>() - 1.0).abs())
            .max((sq - th[4999]).abs() / th[4999]);
    }
    if worst > 1e-12 {
        return fail(format!("weight identity off by {worst:e}"));
    }
    Ok(format!("sum w = 1 and sum w^2 = theta_n to {worst:.1e}"))
}

fn ot_cross_check(_: usize) -> Result<String> {
    let mut s = StreamKey::new(0x5eed, 0, Purpose::Iid).stream(0);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let (n, m) = (1 + i % 50, 1 + (7 * i) % 50);
        let mut draw = |k: usize| -> Result<WeightedEmpirical<f64>> {
            let x: Vec<f64> = (0..k).map(|_| 2.0 * s.normal()).collect();
            let w: Vec<f64> = (0..k).map(|_| 0.05 + s.normal().abs()).collect();
            WeightedEmpirical::new(1, x, w)
        };
        let (a, b) = (draw(n)?, draw(m)?);
        let exact = wasserstein_exact(&a, &b, GroundCost::Power(2.0))?;
        let line = wasserstein_1d(&a, &b, 2.0)?.powi(2);
        worst = worst.max((exact - line).abs() / line.max(1e-300));
    }
    if worst > 1e-9 {
        return fail(format!("simplex vs quantile coupling: relative gap {worst:e}"));
    }
    Ok(format!("100 instances, worst relative gap {worst:.1e}"))
}

fn profile_ok(p: &FProfile) -> Result<()> {
    p.check().map(|_| ())
}

fn f_profiles(_: usize) -> Result<String> {
    profile_ok(&build_f_from_kappa(&KappaProfile::constant(1.0), GridSpec::default())?)?;
    let mut worst: f64 = 0.0;
    for beta in [0.5, 1.0, 2.0] {
        let p = build_f_from_kappa(&KappaProfile::curie_weiss(beta), GridSpec::default())?;
        profile_ok(&p)?;
        let closed = curie_weiss_f_prime_0(beta);
        worst = worst.max((p.f_prime_0 - closed).abs() / closed);
    }
    if worst > 1e-6 {
        return fail(format!("f'(0) quadrature vs closed form: {worst:e}"));
    }
    Ok(format!("ODE, concavity and ratio bounds hold; f'(0) agrees to {worst:.1e}"))
}

fn ou(n: usize, workers: usize) -> SimConfig {
    let mut c = SimConfig::new(
        ModelConfig::new("mean_field_ou", &[]),
        ScheduleKind::Harmonic,
        InitialLaw::Dirac { point: vec![1.0] },
        1.0,
        30,
        n,
    );
    c.seed = 17;
    c.replications = 2;
    c.workers = workers;
    c
}

fn anytime(workers: usize) -> Result<String> {
    let mut c = ou(400, workers);
    c.milestones = vec![100, 400];
    let joint = Simulation::<f64>::new(c.clone())?.spoc()?;
    for n in [100, 400] {
        let mut single = ou(n, workers);
        single.milestones = vec![n];
        let alone = Simulation::<f64>::new(single)?.spoc()?;
        for (a, b) in joint.replications.iter().zip(&alone.replications) {
            if a.milestone(n) != b.milestone(n) {
                return fail(format!("milestone {n} differs from a separate run"));
            }
        }
    }
    c.workers = 1;
    let one = Simulation::<f64>::new(c)?.spoc()?;
    if !one.same_output(&joint) {
        return fail("output depends on the worker count".into());
    }
    Ok("milestones match separate runs and one worker".into())
}

fn batch_degeneracy(workers: usize) -> Result<String> {
    let c = ou(300, workers);
    let plain = Simulation::<f64>::new(c.clone())?.spoc()?;
    let mut b = c;
    b.batch_sizes = Some(vec![1; 300]);
    let batched = Simulation::<f64>::new(b)?.batch_spoc()?;
    if plain.replications != batched.replications {
        return fail("unit batches differ from particle-by-particle".into());
    }
    Ok("unit batches are bit-identical".into())
}

fn ou_moments(_: usize) -> Result<String> {
    let model = ModelConfig::new("mean_field_ou", &[]).build::<f64>()?;
    let closure = model.moment_closure().expect("mean_field_ou has a closure");
    let (states, _) = solve_moment_ode(closure, vec![1.0, 1.0], 1.0, 30, RK4_SUBSTEPS);
    let m1 = states.last().expect("grid")[0];
    let (late, _) = solve_moment_ode(closure, vec![1.0, 1.0], 20.0, 200, RK4_SUBSTEPS);
    let s = late.last().expect("grid");
    let err = (m1 - (-3.0f64).exp()).abs().max(s[0].abs()).max((s[1] - 4.0 / 9.0).abs());
    if err > 1e-8 {
        return fail(format!("moment ODE off by {err:e}"));
    }
    Ok(format!("m(1) = e^-3 and (m, S) -> (0, 4/9) to {err:.1e}"))
}

pub fn run(workers: usize) -> bool {
    let checks: [(&str, Check); 7] = [
        ("theta identity (harmonic)", theta_harmonic),
        ("normalized weights", weights_sum),
        ("OT solver vs 1D coupling", ot_cross_check),
        ("f-profile battery", f_profiles),
        ("OU moment ODE", ou_moments),
        ("anytime and worker determinism", anytime),
        ("batch degeneracy", batch_degeneracy),
    ];
    let mut ok = true;
    for (name, f) in checks {
        match f(workers) {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(e) => {
                ok = false;
                println!("FAIL {name}: {e}");
            }
        }
    }
    println!("{}", if ok { "all checks passed" } else { "some checks failed" });
    ok
}
