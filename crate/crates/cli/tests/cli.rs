use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ebcal_cli::config::{load_config, parse_config};

fn sample(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("samples/wave").join(name)
}

fn ebcal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ebcal")).args(args).env_remove("EBCAL_OUT").output().expect("spawn ebcal")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn fit_then_predict_on_bundled_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let (fit_dir, pred_dir) = (tmp.path().join("fit"), tmp.path().join("pred"));
    let o = ebcal(&["fit", "--config", s(&sample("fit.toml")), "--out", s(&fit_dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("theta[0] = "));
    let fit_json = fit_dir.join("fit.json");
    let o = ebcal(&["predict", "--config", s(&sample("predict.toml")), "--fit", s(&fit_json), "--out", s(&pred_dir)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let csv = read(&pred_dir.join("predictions.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t0,t1,mean,var,lo95,hi95"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 225);
    for r in &rows {
        assert!(r[3] >= 0.0 && r[4] <= r[2] && r[2] <= r[5], "{r:?}");
    }
    for dir in [&fit_dir, &pred_dir] {
        assert!(dir.join("config.toml").is_file());
    }
}

#[test]
fn outputs_are_byte_identical_and_rerunnable_from_snapshot() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("fit");
    let run = || {
        let o = ebcal(&["fit", "--config", s(&sample("fit.toml")), "--out", s(&dir)]);
        assert!(o.status.success(), "{}", stderr(&o));
        ["config.toml", "fit.json", "estimates.csv"].map(|f| read(&dir.join(f)))
    };
    let first = run();
    assert_eq!(first, run());

    // The written snapshot reproduces the run on its own.
    let again = tmp.path().join("again");
    let o = ebcal(&["run", "--config", s(&dir.join("config.toml")), "--out", s(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read(&again.join("fit.json")), first[1]);
    assert_eq!(read(&again.join("estimates.csv")), first[2]);
}

#[test]
fn snapshot_parses_to_the_resolved_config() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("dom");
    let cfg = tmp.path().join("dom.toml");
    std::fs::write(&cfg, "[dominance]\nrun_counts = [0, 5]\nthetas = [0.5]\n").unwrap();
    let o = ebcal(&["study", "kernel-dominance", "--config", s(&cfg), "--seed", "7", "--out", s(&dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let snap = parse_config(&dir.join("config.toml")).unwrap();
    assert_eq!(snap.seed, 7);
    assert_eq!(snap.dominance.seed, 7);
    assert_eq!(snap.dominance.run_counts, vec![0, 5]);
    assert_eq!(snap.out.as_deref(), Some(dir.as_path()));
    let metrics = read(&dir.join("metrics.csv"));
    assert_eq!(metrics.lines().count(), 1 + 2 * 2 * 2);
}

#[test]
fn unknown_task_is_a_usage_error() {
    let o = ebcal(&["train"]);
    assert_eq!(o.status.code(), Some(2));

    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "task = \"train\"\n").unwrap();
    let o = ebcal(&["run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown task 'train'"), "{}", stderr(&o));
}

#[test]
fn equivalence_check_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ebcal(&["check", "equivalence", "--out", s(tmp.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("pass"));
    assert!(tmp.path().join("metrics.csv").is_file());
}

#[test]
fn too_many_folds_rejected_with_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    let obs = tmp.path().join("obs.csv");
    let mut body = String::from("t0,t1,y\n");
    for i in 0..10 {
        body.push_str(&format!("{},{},{}\n", i as f64 / 10.0, 0.5, i));
    }
    std::fs::write(&obs, body).unwrap();
    let cfg = tmp.path().join("cv.toml");
    let runs = sample("runs.csv");
    std::fs::write(
        &cfg,
        format!("[data]\nobservations = \"obs.csv\"\nruns = \"{}\"\n[fit]\nloss = \"cv\"\ncv_k = 20\n", s(&runs)),
    )
    .unwrap();
    let e = ebcal_cli::config::parse_config(&cfg).unwrap_err();
    assert!(e.to_string().contains("fit.cv_k") && e.to_string().contains("K <= n"), "{e}");
    let o = ebcal(&["fit", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("n = 10"), "{}", stderr(&o));
}

#[test]
fn data_errors_have_their_own_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ebcal(&["fit", "--observations", s(&tmp.path().join("missing.csv")), "--runs", s(&sample("runs.csv"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("data.observations"));

    let nan = tmp.path().join("nan.csv");
    std::fs::write(&nan, "t0,t1,y\nNaN,0.5,1\n").unwrap();
    let o = ebcal(&["fit", "--observations", s(&nan), "--runs", s(&sample("runs.csv")), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(18), "{}", stderr(&o));
    assert!(stderr(&o).contains("row 1"));

    let cols = tmp.path().join("cols.csv");
    std::fs::write(&cols, "t0,t1,value\n0.1,0.5,1\n").unwrap();
    let o = ebcal(&["fit", "--observations", s(&cols), "--runs", s(&sample("runs.csv")), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(19));
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[equivalence]\ninstances = 3\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ebcal"))
        .args(["check", "--config", s(&cfg)])
        .env("EBCAL_OUT", tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let snap = load_config(&tmp.path().join("equivalence-check/config.toml")).unwrap();
    assert_eq!(snap.equivalence.instances, 3);
}

#[test]
fn mcmc_on_sample() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("mc");
    let o = ebcal(&["mcmc", "--config", s(&sample("mcmc.toml")), "--iterations", "300", "--out", s(&dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let chain = read(&dir.join("chain.csv"));
    assert!(chain.starts_with("theta[0],theta[1],"));
    assert_eq!(chain.lines().count(), 1 + 300 - 60);
    assert!(read(&dir.join("summary.csv")).starts_with("param,mean,mcse,acceptance\n"));
    assert!(read(&dir.join("predictions.csv")).starts_with("t0,t1,mean,var,lo95,hi95\n"));
}

#[test]
fn sample_round_trips_through_fit_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = ebcal(&["sample", "--n", "40", "--sample-seed", "11", "--out", s(tmp.path())]);
    assert!(o.status.success());
    for f in ["observations.csv", "runs.csv"] {
        assert_eq!(read(&tmp.path().join(f)), read(&sample(f)), "{f}");
    }
}
