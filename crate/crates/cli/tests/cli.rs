use std::path::Path;
use std::process::{Command, Output};

fn mixlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mixlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const G1: &str = r#"{"atoms": [{"mean": 0.0}, {"mean": 2.0}], "weights": [0.4, 0.6]}"#;

#[test]
fn identical_distance_prints_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", G1);
    let b = write(dir.path(), "b.json", G1);
    let o = mixlab(&["distance", &a, &b]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "0.000000000000");
}

#[test]
fn point_mass_distance() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", r#"{"atoms": [{"mean": 0.0}], "weights": [1.0]}"#);
    let b = write(dir.path(), "b.json", r#"{"atoms": [{"mean": 1.0}], "weights": [1.0]}"#);
    let o = mixlab(&["--json", "distance", &a, &b]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!((v["value"].as_f64().unwrap() - (1.0 - (-1f64).exp())).abs() < 1e-15);
    let o = mixlab(&["distance", &a, &b, "--dim", "3"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pfanzagl_equality_case_passes_with_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.json",
        &format!(
            r#"{{"family": {{"kind": "poisson"}}, "g_star": {G1}, "g_alt": {G1}, "u": 0.5, "mc_n": 10000, "seed": 3}}"#
        ),
    );
    let o = mixlab(&["--json", "check", "--name", "pfanzagl", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["statistic"].as_f64(), Some(0.0));
    assert_eq!(v["passed"].as_bool(), Some(true));
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // k tops out far too low for the likelihood gap of 100.
    let cfg = write(
        dir.path(),
        "d.json",
        r#"{"sample": {"values": [0.1, -0.4, 1.3, 0.7, -1.1]}, "k_list": [1, 10]}"#,
    );
    let o = mixlab(&["check", "--name", "degenerate_sequence", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("FAIL degenerate_sequence"));
}

#[test]
fn unknown_check_and_bad_json_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", "{}");
    let o = mixlab(&["check", "--name", "nope", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown check"));
    let bad = write(
        dir.path(),
        "bad.json",
        "{\n  \"eps0\": 0.05,\n  \"sigma1_list\": [0.01,\n}",
    );
    let o = mixlab(&["check", "--name", "g_dominance", "--config", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(mixlab(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn sample_then_fit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scfg = write(
        dir.path(),
        "s.json",
        r#"{"family": {"kind": "normal_free_variance"},
            "mixing": {"atoms": [{"mean": 0.0, "scale": 1.0}, {"mean": 4.0, "scale": 0.5}], "weights": [0.5, 0.5]},
            "n": 300, "seed": 11}"#,
    );
    let csv = dir.path().join("x.csv");
    let o = mixlab(&["sample", "--config", &scfg, "--output", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("x.meta.json").exists());

    let fcfg = write(
        dir.path(),
        "f.json",
        r#"{"family": {"kind": "normal_free_variance"}, "m": 2, "mode": {"kind": "penalized"}, "seed": 2}"#,
    );
    let report = dir.path().join("r.json");
    let o = mixlab(&[
        "fit",
        "--sample",
        csv.to_str().unwrap(),
        "--config",
        &fcfg,
        "--output",
        report.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["estimate"]["atoms"].as_array().unwrap().len(), 2);
    assert_eq!(v["degenerate"].as_bool(), Some(false));

    // Identical invocations give identical reports.
    let again = dir.path().join("r2.json");
    mixlab(&[
        "fit",
        "--sample",
        csv.to_str().unwrap(),
        "--config",
        &fcfg,
        "--output",
        again.to_str().unwrap(),
    ]);
    let strip = |p: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("wall_time_ms");
        v
    };
    assert_eq!(strip(&report), strip(&again));
}

#[test]
fn fit_with_too_few_observations_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "x.csv", "value\n1.0\n2.0\n");
    let fcfg = write(
        dir.path(),
        "f.json",
        r#"{"family": {"kind": "normal_free_variance"}, "m": 3, "mode": {"kind": "penalized"}}"#,
    );
    let o = mixlab(&["fit", "--sample", &csv, "--config", &fcfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("m = 3"), "{}", stderr(&o));
}

#[test]
fn npmle_on_poisson_counts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "x.csv", "value\n0\n1\n1\n2\n5\n6\n4\n5\n");
    let cfg = write(dir.path(), "n.json", r#"{"family": {"kind": "poisson"}}"#);
    let o = mixlab(&["--json", "npmle", "--sample", &csv, "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["certified"].as_bool(), Some(true));
}

#[test]
fn small_consistency_experiment_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("runs.csv");
    let cfg = write(
        dir.path(),
        "e.json",
        r#"{"family": {"kind": "normal_equal_variance", "variance": 1.0},
            "g_star": {"atoms": [{"mean": 0.0}, {"mean": 3.0}], "weights": [0.5, 0.5]},
            "n_grid": [50, 100], "reps": 2,
            "fit": {"family": {"kind": "normal_equal_variance", "variance": 1.0}, "m": 2,
                    "mode": {"kind": "equal_variance"}, "restarts": 2},
            "master_seed": 5}"#,
    );
    let o = mixlab(&[
        "experiment",
        "consistency",
        "--config",
        &cfg,
        "--output",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("n,rep,kw_dist,objective,converged,wall_time_ms")
    );
    assert_eq!(text.lines().count(), 5);
    assert!(dir.path().join("runs.summary.json").exists());
}

#[test]
fn help_documents_schemas() {
    let o = mixlab(&["check", "--help"]);
    let text = stdout(&o);
    assert!(text.contains("poisson_heavy_tail") && text.contains("\"uniform\""));
    let o = mixlab(&["--help"]);
    assert!(stdout(&o).contains("normal_free_variance"));
}
