use std::path::Path;
use std::process::{Command, Output};

fn boltzmann(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_boltzmann")).args(args).current_dir(dir).env_remove("BOLTZMANN_OUT").output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_BALL: &str = r#"{"dt": 0.1, "t_end": 0.5, "n_v": 6, "v_cut": 4.0, "n_x": 4, "initial": "phi-modulated", "phi_amplitude": 0.3}"#;

#[test]
fn missing_dt_is_a_config_error_naming_dt() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"t_end": 1.0}"#).unwrap();
    let o = boltzmann(&["simulate", "--config", "c.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let record: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(record["error"], "config-invalid");
    assert!(record["message"].as_str().unwrap().contains("`dt`"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_keys_and_checks_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"dt": 0.1, "t_ned": 1.0}"#).unwrap();
    let o = boltzmann(&["simulate", "--config", "c.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("t_ned"));
    let o = boltzmann(&["verify", "no-such-check"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    for name in ["jacobian", "c-mu", "gain-pointwise", "gain-lp", "kernel-integral", "coercivity", "cycle-probability", "all"] {
        assert!(stderr(&o).contains(name), "{name} missing from {}", stderr(&o));
    }
    let o = boltzmann(&["simulate", "--preset", "nope"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dry_run_prints_the_resolved_config_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = boltzmann(&["simulate", "--preset", "homogeneous-h-theorem", "--dry-run", "--seed", "17"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let cfg: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cfg["seed"], 17);
    assert_eq!(cfg["domain"], "homogeneous");
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn verify_jacobian_passes_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = boltzmann(&["verify", "jacobian", "--out", "res"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("res/reports.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("name,ratio_sup"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "jacobian");
    assert!(row[1].parse::<f64>().unwrap() < 1e-6);
    assert_eq!(row[4], "true");
}

#[test]
fn failed_check_exits_one_after_writing_outputs() {
    let dir = tempfile::tempdir().unwrap();
    // with at most four bounces nearly every cycle is still running at t = 20
    std::fs::write(dir.path().join("s.json"), r#"{"cycle_k": [1, 2, 4], "cycle_samples": 500}"#).unwrap();
    let o = boltzmann(&["verify", "cycle-probability", "--config", "s.json"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(dir.path().join("out/cycles.csv").exists());
    assert!(dir.path().join("out/manifest.json").exists());
}

#[test]
fn simulate_rerun_from_manifest_is_bitwise_identical_at_other_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), SMALL_BALL).unwrap();
    let a = boltzmann(&["simulate", "--config", "c.json", "--out", "a", "--threads", "1"], dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = boltzmann(&["simulate", "--config", "a/manifest.json", "--out", "b", "--threads", "3"], dir.path());
    assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/timeseries.csv"), read("b/timeseries.csv"));
    let manifest = |p: &str| serde_json::from_slice::<serde_json::Value>(&read(p)).unwrap();
    let (ma, mb) = (manifest("a/manifest.json"), manifest("b/manifest.json"));
    assert_eq!(ma["determinism_token"], mb["determinism_token"]);
    assert_eq!(ma["seed"], 0);
    assert_eq!(ma["grid_hashes"].as_array().unwrap().len(), 1);
    assert_eq!(mb["threads"], 3);
}

#[test]
fn decay_fit_reads_a_written_series() {
    let dir = tempfile::tempdir().unwrap();
    let rows: String = (0..12).map(|i| format!("{},{}\n", 0.5 * i as f64, (-0.8 * 0.5 * i as f64).exp())).collect();
    std::fs::write(dir.path().join("s.csv"), format!("t,l2_xv\n{rows}")).unwrap();
    let o = boltzmann(&["decay-fit", "s.csv", "--column", "l2_xv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let vals: Vec<f64> = out.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!((vals[0] - 0.8).abs() < 1e-9 && (vals[1] - 1.0).abs() < 1e-9 && vals[2] == 12.0);
    let o = boltzmann(&["decay-fit", "s.csv", "--t-min", "4.0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = boltzmann(&["decay-fit", "s.csv", "--column", "l2_xv", "--t-min", "4.0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn lsmall_honours_the_output_environment_variable() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.json"), r#"{"t_list": [2.0], "k_list": [1, 4, 16], "n_samples": 400}"#).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_boltzmann"))
        .args(["lsmall", "--config", "c.json"])
        .current_dir(dir.path())
        .env("BOLTZMANN_OUT", "from-env")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("from-env/lsmall.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("t,k,p_hat,stderr"));
    assert_eq!(text.lines().count(), 4);
}
