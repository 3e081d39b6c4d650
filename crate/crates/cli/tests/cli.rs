use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_annihilator"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn verdict(out: &Output) -> String {
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    report["verdicts"][0]["verdict"].as_str().unwrap().to_string()
}

/// `(eps, value_re, value_im, norm)` per CSV row, header checked.
fn rows(csv: &str) -> Vec<(f64, f64, f64, f64)> {
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("detector,vector_id,eps,value_re,value_im,norm"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let p = |i: usize| f[i].parse::<f64>().unwrap();
            (p(2), p(3), p(4), p(5))
        })
        .collect()
}

#[test]
fn annihilate_gap_scenario_is_singular() {
    let cfg = scenario("atoms_gap.json");
    let out = run(&["annihilate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(verdict(&out), "singular");
}

#[test]
fn classify_flat_density_is_absolutely_continuous() {
    let cfg = scenario("ac_flat.json");
    let out = run(&["classify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(verdict(&out), "absolutely-continuous");
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["scenario_id", "mode", "verdicts", "calibration", "runtime_ms"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn missing_gap_is_a_config_error() {
    let cfg = scenario("invalid/thm2_missing_gap.json");
    let out = run(&["annihilate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("requires a declared gap containing 0"), "{err}");
    assert!(err.contains("line "), "{err}");
}

#[test]
fn bad_arguments_exit_with_two() {
    let cfg = scenario("atoms_left.json");
    let cfg = cfg.to_str().unwrap();
    let cases: [&[&str]; 5] = [
        &["classify", "--config", cfg, "--eps-ladder", ""],
        &["classify", "--config", cfg, "--eps-ladder", "1e-2,1e-1"],
        &["trace", "--config", cfg, "--detector", "nope", "--vector", "atom0"],
        &["trace", "--config", cfg, "--detector", "smirnov_strong", "--vector", "nope"],
        &["classify", "--config", "/nonexistent/config.json"],
    ];
    for args in cases {
        let out = run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn strong_trace_of_an_atom_follows_the_lorentzian_law() {
    let cfg = scenario("atoms_left.json");
    let out = run(&[
        "trace", "--config", cfg.to_str().unwrap(), "--detector", "smirnov_strong", "--vector", "atom0",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let rows = rows(&stdout(&out));
    assert_eq!(rows.len(), 7);
    // atom0 has weight 0.3 at unit coupling: ‖·‖² → 2πw²/ε as ε → 0
    let w: f64 = 0.3;
    for &(eps, _, _, norm) in rows.iter().filter(|r| r.0 <= 1e-2) {
        let law = 2.0 * PI * w * w / eps;
        assert!((norm * norm - law).abs() < 1e-2 * law, "ε = {eps}: {} vs {law}", norm * norm);
    }
}

#[test]
fn weak_target_trace_of_cantor_decreases() {
    let cfg = scenario("cantor_left.json");
    let out = run(&[
        "trace", "--config", cfg.to_str().unwrap(), "--detector", "weak_thm3", "--vector", "cantor0",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let norms: Vec<f64> = rows(&stdout(&out)).iter().map(|r| r.3).collect();
    assert_eq!(norms.len(), 7);
    assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
}

#[test]
fn reports_are_byte_identical() {
    let cfg = scenario("mixed_atom_ac.json");
    let args = ["smirnov", "--config", cfg.to_str().unwrap(), "--seed", "11"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn out_dir_receives_report_traces_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("atoms_left.json");
    let out = run(&[
        "annihilate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--grid",
        "257",
        "--eps-ladder",
        "1e-1,1e-2,1e-3,1e-4,1e-5",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert_eq!(report, stdout(&out));
    let traces = std::fs::read_to_string(dir.path().join("traces.csv")).unwrap();
    assert!(rows(&traces).iter().all(|r| r.0 >= 1e-5));
    for table in ["gamma_lines.csv", "gamma_a_boundary.csv", "beta_boundary.csv"] {
        assert!(dir.path().join(table).exists(), "{table}");
    }
}
