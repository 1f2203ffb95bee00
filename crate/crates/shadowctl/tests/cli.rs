use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn shadowctl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shadowctl"))
        .args(args)
        .current_dir(dir)
        .env_remove("SHADOWCTL_JOBS")
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("run.cfg");
    let text = format!(
        "# small desk problem\ngrid.n_cells = 30\ntime.n_steps = 40\n\
         problem.sigma_list = 1,10,100\nhum.epsilon = 1e-4\n{extra}"
    );
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn hum_with_zero_data_costs_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(
        dir.path(),
        "initial_data.y_amplitude = 0\ninitial_data.z_amplitude = 0\noutput.formats = json,csv,binary\n",
    );
    let out = shadowctl(&["hum", "--config", &cfg, "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json = read_json(&dir.path().join("o/hum.json"));
    assert_eq!(json["cost"].as_f64(), Some(0.0));
    let stdout: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stdout, json);
    for f in ["trajectory.csv", "trajectory.shct"] {
        assert!(dir.path().join("o").join(f).is_file(), "{f}");
    }
}

#[test]
fn hum_reports_required_fields() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "experiment.epsilons = 1e-1,1e-2,1e-3\n");
    let out = shadowctl(&["hum", "--config", &cfg, "--out", "o"], dir.path());
    assert!(out.status.success());
    let json = read_json(&dir.path().join("o/hum.json"));
    for key in ["cost", "terminal_y", "terminal_z", "cg_iters", "duality_residual"] {
        assert!(json.get(key).is_some(), "{key}");
    }
    assert!(json["duality_residual"].as_f64().unwrap() < 1e-10);
    assert_eq!(json["epsilon_sweep"]["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn sweep_writes_report_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = shadowctl(&["sweep", "--config", &cfg, "--out", "o", "--jobs", "2"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let o = dir.path().join("o");
    let report = read_json(&o.join("sweep.json"));
    let sigmas: Vec<f64> = report["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["sigma"].as_f64().unwrap())
        .collect();
    assert_eq!(sigmas, vec![1.0, 10.0, 100.0]);
    for f in ["cost_vs_sigma.dat", "gap_vs_sigma.dat"] {
        let text = fs::read_to_string(o.join(f)).unwrap();
        let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 3, "{f}");
        assert!(rows.iter().all(|l| l.split_whitespace().count() == 2));
    }
    let csv = fs::read_to_string(o.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn jobs_env_matches_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let a = shadowctl(&["sweep", "--config", &cfg, "--out", "a", "--jobs", "1"], dir.path());
    let b = Command::new(env!("CARGO_BIN_EXE_shadowctl"))
        .args(["sweep", "--config", &cfg, "--out", "b"])
        .current_dir(dir.path())
        .env("SHADOWCTL_JOBS", "3")
        .output()
        .unwrap();
    assert!(a.status.success() && b.status.success());
    assert_eq!(
        fs::read(dir.path().join("a/sweep.json")).unwrap(),
        fs::read(dir.path().join("b/sweep.json")).unwrap()
    );
}

#[test]
fn selftest_prints_table_and_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = shadowctl(&["selftest", "--out", "o", "--seed", "7"], dir.path());
    assert!(out.status.success());
    let table = String::from_utf8(out.stdout).unwrap();
    for name in ["duality identity", "gramian symmetry", "taylor identity", "constant preservation"] {
        let line = table.lines().find(|l| l.starts_with(name)).expect(name);
        assert!(line.ends_with("PASS"), "{line}");
    }
    assert_eq!(read_json(&dir.path().join("o/selftest.json"))["passed"], Value::Bool(true));
}

#[test]
fn weights_and_hypotheses_emit_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "problem.mode = semilinear\n");
    let out = shadowctl(&["weights", "--config", &cfg, "--out", "o"], dir.path());
    assert!(out.status.success());
    let w = read_json(&dir.path().join("o/weights.json"));
    for key in ["K", "K_tilde", "lambda", "s", "report"] {
        assert!(w.get(key).is_some(), "{key}");
    }
    let out = shadowctl(&["check-hypotheses", "--config", &cfg, "--out", "o"], dir.path());
    assert!(out.status.success());
    let h = read_json(&dir.path().join("o/check_hypotheses.json"));
    assert_eq!(h["violations"], Value::Array(vec![]));
}

#[test]
fn failed_weight_checks_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "weights.lambda = 0.01\n");
    let out = shadowctl(&["weights", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(read_json(&dir.path().join("o/weights.json"))["report"]["alpha_ratio_holds"], Value::Bool(false));
}

#[test]
fn config_errors_exit_two_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "grid.omega_a = 0.9\ngrid.omega_b = 0.3\n");
    let out = shadowctl(&["hum", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("grid.omega_b"), "{err}");

    let cfg = small_config(dir.path(), "grid.cells = 3\n");
    let out = shadowctl(&["hum", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("grid.cells"));

    let out = shadowctl(&["hum", "--config", "missing.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = shadowctl(&["bogus"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // dt * max|a_ij| violates the step bound
    let cfg = small_config(dir.path(), "time.T = 10\nproblem.a = 5\n");
    let out = shadowctl(&["hum", "--config", &cfg, "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}
