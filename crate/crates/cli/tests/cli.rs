use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spoc_core::simulate::{read_manifest, write_run_dir, SimConfig, Simulation, SpocEngine};

const OU: &str = r#"{
  "model": { "name": "mean_field_ou", "params": {} },
  "schedule": { "kind": "harmonic" },
  "initial": { "kind": "dirac", "point": [1.0] },
  "T": 1.0, "M": 30, "N": 400, "seed": 5, "replications": 3,
  "milestones": [100, 200, 400]
}"#;

fn spoc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spoc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn simulate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), OU);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(spoc(&["simulate", "--config", &cfg, "--out", &s(&a)]).status.success());
    assert!(spoc(&["simulate", "--config", &cfg, "--out", &s(&b), "--workers", "1"]).status.success());
    let sa = fs::read_to_string(a.join("snapshots/summary.csv")).unwrap();
    assert_eq!(sa, fs::read_to_string(b.join("snapshots/summary.csv")).unwrap());
    let m = read_manifest(&a).unwrap();
    assert!(m.complete);
    assert_eq!(m.seed_map.len(), 3);
    assert!(!a.join("state").exists());

    // The echoed configuration reproduces the run.
    let echoed = tmp.path().join("echoed.json");
    fs::write(&echoed, serde_json::to_string(&m.config).unwrap()).unwrap();
    let c = tmp.path().join("c");
    assert!(spoc(&["simulate", "--config", &s(&echoed), "--out", &s(&c)]).status.success());
    assert_eq!(sa, fs::read_to_string(c.join("snapshots/summary.csv")).unwrap());
}

#[test]
fn resume_finishes_an_interrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = write_config(tmp.path(), OU);
    let full = tmp.path().join("full");
    assert!(spoc(&["simulate", "--config", &cfg_path, "--out", &s(&full)]).status.success());

    // Fake an interruption after the first milestone of every replication.
    let part = tmp.path().join("part");
    let cfg = SimConfig::from_json(OU).unwrap();
    let sim = Simulation::<f64>::new(cfg.clone()).unwrap();
    write_run_dir(&part, &sim.assemble(spoc_core::simulate::Method::Spoc, vec![], 0.0), false).unwrap();
    fs::create_dir_all(part.join("state")).unwrap();
    for r in 0..cfg.replications as u64 {
        let mut e = SpocEngine::new(&sim, r);
        e.run_to_next_milestone().unwrap();
        fs::write(
            part.join(format!("state/rep{r}.json")),
            serde_json::to_vec(e.state()).unwrap(),
        )
        .unwrap();
    }
    assert!(!read_manifest(&part).unwrap().complete);
    let other = spoc(&["simulate", "--config", &cfg_path, "--out", &s(&part), "--resume", "--seed", "9"]);
    assert_eq!(other.status.code(), Some(2), "a different configuration cannot resume it");
    let out = spoc(&["simulate", "--config", &cfg_path, "--out", &s(&part), "--resume"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(read_manifest(&part).unwrap().complete);
    assert_eq!(
        fs::read_to_string(full.join("snapshots/summary.csv")).unwrap(),
        fs::read_to_string(part.join("snapshots/summary.csv")).unwrap()
    );
    let again = spoc(&["simulate", "--config", &cfg_path, "--out", &s(&part), "--resume"]);
    assert!(again.status.success(), "complete runs are left alone");
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), OU);
    let out = s(&tmp.path().join("o"));
    for bad in [
        vec!["--set", "N=lots"],
        vec!["--set", "unknown_key=1"],
        vec!["--set", "model.params.gamma=1"],
        vec!["--set", "milestones=[500]"],
    ] {
        let mut args = vec!["simulate", "--config", &cfg, "--out", &out];
        args.extend(bad.iter().copied());
        let o = spoc(&args);
        assert_eq!(o.status.code(), Some(2), "{bad:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let broken = tmp.path().join("broken.json");
    fs::write(&broken, "{\n  \"model\": \n}").unwrap();
    let o = spoc(&["simulate", "--config", &s(&broken), "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn blow_up_exits_3_with_context() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{
  "model": { "name": "curie_weiss", "params": { "beta": 1.0, "K": 0.5, "sigma": 1.0 } },
  "schedule": { "kind": "harmonic" },
  "initial": { "kind": "dirac", "point": [40.0] },
  "T": 10.0, "M": 5, "N": 10
}"#,
    );
    let out = tmp.path().join("o");
    let o = spoc(&["simulate", "--config", &cfg, "--out", &s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("particle") && err.contains("step"), "{err}");
    assert!(!read_manifest(&out).unwrap().complete);
}

#[test]
fn compare_tables_share_milestones() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), OU);
    let out = tmp.path().join("cmp");
    let o = spoc(&["compare", "--config", &cfg, "--out", &s(&out), "--milestones", "1e2,2e2,4e2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(out.join("compare.csv")).unwrap();
    let mut by_method: std::collections::BTreeMap<String, Vec<String>> = Default::default();
    for rec in rdr.records() {
        let rec = rec.unwrap();
        by_method.entry(rec[0].to_string()).or_default().push(rec[1].to_string());
    }
    assert_eq!(by_method.len(), 2);
    assert_eq!(by_method["spoc"], by_method["classical_poc"]);
    assert_eq!(by_method["spoc"], vec!["100", "200", "400"]);
    assert!(out.join("curves.csv").exists());
}

#[test]
fn rates_writes_table_fit_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), OU);
    let out = tmp.path().join("rates");
    let o = spoc(&[
        "rates", "--config", &cfg, "--out", &s(&out), "--milestones", "50,100,200,400", "--metric",
        "mean_abs_err", "--format", "json",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let study: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("rates.json")).unwrap()).unwrap();
    assert_eq!(study["table"]["rows"].as_array().unwrap().len(), 4);
    assert!(out.join("fit.json").exists());
    let svg = fs::read_to_string(out.join("rates.svg")).unwrap();
    assert!(svg.contains("stroke-dasharray") && svg.contains("slope -0.5"));
}

#[test]
fn density_and_schedule_diag() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), OU);
    let out = tmp.path().join("d");
    let o = spoc(&["density", "--config", &cfg, "--out", &s(&out), "--bins", "12", "--range=-2,2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("density.csv")).unwrap();
    assert_eq!(text.lines().count(), 13);

    let o = spoc(&["schedule-diag", "--schedule", r#"{"kind":"geometric","q":0.9}"#, "--n", "1000"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("theta_n"));
    let o = spoc(&["schedule-diag", "--schedule", r#"{"kind":"geometric","q":2}"#]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_passes() {
    let o = spoc(&["verify"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{text}");
    assert!(!text.contains("FAIL"));
    assert!(text.lines().filter(|l| l.starts_with("PASS")).count() >= 7);
}
