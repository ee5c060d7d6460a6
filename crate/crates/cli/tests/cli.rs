use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eit_size_cli::records::{read_csv, COLUMNS};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_eit-size"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

const SWEEP: &str = r#"{
  "model": "neumann",
  "mesh": {"dim": 2, "n_e": 10},
  "excitation": {"test": "T2"},
  "sweep": {
    "k_values": [0.1, 10.0],
    "generator": {"type": "connected", "min": 1, "max": 5, "d0_min": 2,
                  "exhaustive_max": 3, "samples": 20, "octant": false}
  },
  "seed": 11
}"#;

#[test]
fn homogeneous_unit_square() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "t1.json",
        r#"{"model": "neumann", "mesh": {"dim": 2, "n_e": 10}, "excitation": {"test": "T1"}}"#,
    );
    let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let w0 = v["w0"].as_f64().unwrap();
    assert!((w0 - 1.0).abs() < 1e-10, "{w0}");
}

#[test]
fn malformed_json_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", "{\"model\": \"neumann\",\n  \"mesh\": {\"dim\": 2 \"n_e\": 4}}");
    let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2 column"), "{err}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("k1", r#"{"model": "neumann", "mesh": {"dim": 2, "n_e": 6}, "excitation": {"test": "T1"},
                  "inclusion": {"shape": {"elements": [14]}, "k": 1.0}}"#),
        ("zeta", r#"{"model": "cem", "mesh": {"dim": 2, "n_e": 6}, "excitation": {"test": "T1", "zeta": 0.0}}"#),
        ("unknown", r#"{"model": "neumann", "mesh": {"dim": 2, "n_e": 6}, "excitation": {"test": "T1"}, "speed": 3}"#),
        ("mesh", r#"{"model": "neumann", "mesh": {"dim": 4, "n_e": 6}, "excitation": {"test": "T1"}}"#),
    ] {
        let cfg = write(dir.path(), &format!("{name}.json"), text);
        let out = run(&["solve", "--config", cfg.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(2), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let missing = run(&["solve", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn sweep_is_deterministic_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "sweep.json", SWEEP);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    for (path, workers) in [(&a, "1"), (&b, "3")] {
        let out = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", path.to_str().unwrap(), "--workers", workers]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let out = run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap(), "--seed", "12"]);
    assert!(out.status.success());
    assert_ne!(bytes, std::fs::read(&c).unwrap(), "seed should change the sampled shapes");

    let text = String::from_utf8(bytes).unwrap();
    let lines = text.lines().count() - 1;
    let records = read_csv(text.as_bytes(), "a.csv").unwrap();
    assert_eq!(records.len(), lines);
    assert!(records.iter().all(|r| r.is_ok() && r.obeys_sign_law()));

    // mixed contrasts need a filter
    let mixed = run(&["report", a.to_str().unwrap()]);
    assert_eq!(mixed.status.code(), Some(2));
    let out = run(&["report", a.to_str().unwrap(), "--k", "10"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["rows"].as_u64().unwrap() as usize, lines);
    assert_eq!(rep["used"].as_u64().unwrap() as usize, lines / 2);
}

#[test]
fn empty_plan_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "empty.json",
        r#"{"model": "neumann", "mesh": {"dim": 2, "n_e": 6}, "excitation": {"test": "T1"},
            "sweep": {"k_values": [10.0], "generator": {"type": "blocks", "min": 5, "max": 5, "d0_min": 2}}}"#,
    );
    let out = run(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), COLUMNS.join(",") + "\n");
}

#[test]
fn single_record_report_goes_through_the_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "one.json",
        r#"{"model": "neumann", "mesh": {"dim": 2, "n_e": 8}, "excitation": {"test": "T1"},
            "sweep": {"k_values": [10.0], "generator": {"type": "centered_blocks", "min": 2, "max": 2}}}"#,
    );
    let csv = dir.path().join("one.csv");
    assert!(run(&["sweep", "--config", cfg.to_str().unwrap(), "--out", csv.to_str().unwrap()]).status.success());
    let out = run(&["report", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rec = &read_csv(std::fs::File::open(&csv).unwrap(), "one.csv").unwrap()[0];
    let q = rec.volume_fraction / rec.gap;
    for key in ["lower_coef", "upper_coef"] {
        let c = rep[key].as_f64().unwrap();
        assert!((c - q).abs() <= 1e-12 * q, "{key}: {c} vs {q}");
    }
    assert!(rep["fit"].is_null());
}

#[test]
fn lines_table_values() {
    let out = run(&["lines", "--k", "10"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let coef = |key: &str| -> f64 {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("# {key}: ")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((coef("lower_coef") - 1.0 / 9.0).abs() < 1e-15);
    assert!((coef("upper_coef") - 10.0 / 9.0).abs() < 1e-15);
    let out = run(&["lines", "--k", "10", "--scenario", "cem", "--zeta", "0.2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let cem = eit_size::bounds::theoretical_line_cem_uniform(10.0, 1.0, 0.2).unwrap();
    assert!((cem.lower_coef - 1.4 / 9.0).abs() < 1e-15);
    assert!((cem.upper_coef - 14.0 / 9.0).abs() < 1e-14);
    assert!(text.contains(&format!("# lower_coef: {:.16e}", cem.lower_coef)));
    assert!(text.contains(&format!("# upper_coef: {:.16e}", cem.upper_coef)));
    let out = run(&["lines", "--k", "10", "--scenario", "cosine", "--n", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let line = eit_size::bounds::theoretical_line_cosine(10.0, 1).unwrap();
    assert!(text.contains(&format!("# upper_coef: {:.16e}", line.upper_coef)));
    assert_eq!(run(&["lines", "--k", "0"]).status.code(), Some(2));
}

#[test]
fn frequency_command() {
    let dir = tempfile::tempdir().unwrap();
    let mut f = Vec::new();
    for n in 0..3 {
        let cfg = write(
            dir.path(),
            &format!("c{n}.json"),
            &format!(r#"{{"model": "neumann", "mesh": {{"dim": 3, "n_e": 6}}, "excitation": {{"test": "cosine", "n": {n}}}}}"#),
        );
        let out = run(&["freq", "--config", cfg.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        f.push(v["frequency"].as_f64().unwrap());
    }
    assert!(f[0] < f[1] && f[1] < f[2], "{f:?}");
}
