use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn vilab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vilab"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("vilab runs")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn solve_projects_the_scalar_example() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(vilab().arg("solve").arg(data("scalar_projection.json")).arg("--out").arg(dir.path()));
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("solution.csv"));
    assert_eq!(rows, vec![vec!["0".to_string(), "1".to_string()]]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("solve_report.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], true);
    assert!(dir.path().join("run_manifest.json").exists());
}

#[test]
fn unconstrained_identity_echoes_the_load() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(vilab()
        .args(["solve", "--method", "fixed-point", "--out"])
        .arg(dir.path())
        .arg(data("identity_free.json")));
    assert_eq!(out.status.code(), Some(0));
    let u: Vec<f64> = csv_rows(&dir.path().join("solution.csv")).iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(u, vec![0.5, -1.25, 3.0]);
}

#[test]
fn malformed_spec_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    std::fs::write(&spec, r#"{"operator": {"kind": "linear"}, "set": {"kind": "whole_space"}}"#).unwrap();
    let out = run(vilab().arg("solve").arg(&spec).arg("--out").arg(dir.path().join("o")));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("matrix"));
}

#[test]
fn iteration_limit_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(vilab()
        .args(["solve", "--method", "fixed-point", "--max-iter", "1", "--rho", "0.1", "--out"])
        .arg(dir.path())
        .arg(data("scalar_projection.json")));
    assert_eq!(out.status.code(), Some(2));
    assert!(dir.path().join("solution.csv").exists());
}

#[test]
fn scalar_penalty_study_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(vilab().args(["study", "penalty", "--preset", "scalar", "--out"]).arg(dir.path()));
    assert_eq!(out.status.code(), Some(0));
    for r in csv_rows(&dir.path().join("table.csv")) {
        let lambda: f64 = r[1].parse().unwrap();
        let err: f64 = r[2].parse().unwrap();
        assert!((err - lambda / (1.0 + lambda)).abs() <= 1e-9);
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["passed"], true);
}

#[test]
fn heat_study_trace_at_one_tenth() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(vilab()
        .args(["study", "heat", "--dim", "1", "--nx", "64", "--g", "2", "--b", "0", "--emit-gnuplot", "--out"])
        .arg(dir.path()));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&dir.path().join("table.csv"));
    let row = rows.iter().find(|r| r[1].parse::<f64>().unwrap() == 0.1).unwrap();
    let trace: f64 = row[8].parse().unwrap();
    assert!((trace - 0.0909).abs() < 1e-4, "{trace}");
    assert!(dir.path().join("plot.gp").exists());
    assert!(dir.path().join("nodal.csv").exists());
}

#[test]
fn interval_mosco_errors_are_harmonic() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(vilab().args(["study", "mosco", "--preset", "interval", "--len", "50", "--out"]).arg(dir.path()));
    // 1/50 is above the final-row threshold
    assert_eq!(out.status.code(), Some(1));
    for r in csv_rows(&dir.path().join("table.csv")) {
        let n: f64 = r[0].parse().unwrap();
        let err: f64 = r[2].parse().unwrap();
        assert!((err - 1.0 / n).abs() < 1e-12);
    }
}

#[test]
fn classify_reproduces_the_two_examples() {
    let dir = tempfile::tempdir().unwrap();
    let flags = |spec: &str, seq: &str, sub: &str| -> serde_json::Value {
        let o = dir.path().join(sub);
        let out = run(vilab().arg("classify").arg(data(spec)).arg(data(seq)).arg("--out").arg(&o));
        assert_eq!(out.status.code(), Some(0));
        assert!(o.join("criterion.csv").exists());
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(o.join("flags.json")).unwrap()).unwrap();
        v["flags"].clone()
    };
    let f = flags("scalar_projection.json", "interior_sequence.csv", "a");
    assert_eq!((f["t_approximating"].as_bool(), f["tykhonov_approximating"].as_bool()), (Some(true), Some(false)));
    let f = flags("scalar_unit_rhs.json", "exterior_sequence.csv", "b");
    assert_eq!((f["lp_approximating"].as_bool(), f["tykhonov_approximating"].as_bool()), (Some(true), Some(false)));
    let f = flags("scalar_projection.json", "constant_solution.csv", "c");
    for k in ["t_approximating", "tykhonov_approximating", "lp_approximating", "converging_trend"] {
        assert_eq!(f[k], true, "{k}");
    }
}

#[test]
fn classify_rejects_dimension_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(vilab()
        .arg("classify")
        .arg(data("identity_free.json"))
        .arg(data("constant_solution.csv"))
        .arg("--out")
        .arg(dir.path()));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn selftest_is_byte_identical_per_seed() {
    let a = run(vilab().arg("selftest").env("VI_LAB_SEED", "99"));
    let b = run(vilab().arg("selftest").env("VI_LAB_SEED", "99"));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8_lossy(&a.stdout).starts_with("golden suite seed=99\n"));
}

#[test]
fn contact_solve_writes_nodal_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(vilab().args(["contact", "solve", "--cx", "4", "--cy", "2", "--out"]).arg(dir.path()));
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&dir.path().join("nodal.csv"));
    assert_eq!(rows.len(), 15);
    assert!(rows.iter().any(|r| r[5] == "1"));
}

#[test]
fn contact_refuses_huge_friction() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(vilab().args(["contact", "solve", "--cx", "4", "--cy", "2", "--mu", "1e6", "--out"]).arg(dir.path()));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("smallness"));
}
