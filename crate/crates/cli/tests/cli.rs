use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_qrelax"));
    c.env("QRELAX_WORKERS", "1");
    c
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qrelax-cli-{name}-{}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    dir
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|row| row.unwrap().iter().map(String::from).collect()).collect()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn convex_control_has_convex_table_equal_to_raw() {
    let out = scratch("convex");
    let o = run(&["envelope", "--integrand", "quadratic-2d", "--tables", "raw,convex,lamination"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let column = |file: &str| -> Vec<f64> { read_csv(&out.join(file)).iter().map(|r| r[2].parse().unwrap()).collect() };
    let (raw, convex) = (column("raw.csv"), column("convex.csv"));
    assert_eq!(raw.len(), 81);
    for (a, b) in raw.iter().zip(&convex) {
        assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
    }
    let meta = json(&out.join("envelope.json"));
    assert_eq!(meta["status"], "ok");
    assert_eq!(meta["config"]["integrand"], "quadratic-2d");
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn double_well_relaxation_closes_at_zero_gradient() {
    let out = scratch("relax");
    let o = run(&["relax", "--integrand", "double-well-1d"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = &json(&out.join("relax.json"))["result"]["report"];
    let gap = report["gap"].as_f64().unwrap();
    assert!(gap.abs() < 5e-2, "gap {gap}");
    // The sawtooth competitor brings the value from f(0) = 1 down to the
    // convex envelope at zero.
    assert!(report["representation"].as_f64().unwrap().abs() < 5e-2);
    let history = read_csv(&out.join("history.csv"));
    assert_eq!(history.len(), 5);
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn replay_reproduces_tables_byte_for_byte() {
    let first = scratch("replay-a");
    let o = run(
        &[
            "envelope",
            "--integrand",
            "double-well-1d",
            "--tables",
            "raw,convex,zl",
            "--mesh-n",
            "8",
            "--eps-seq",
            "0.25,0.125",
        ],
        &first,
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let second = scratch("replay-b");
    let cfg = first.join("run.toml");
    let o = run(&["envelope", "--config", cfg.to_str().unwrap()], &second);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for file in ["raw.csv", "convex.csv", "zl.csv"] {
        let a = std::fs::read(first.join(file)).unwrap();
        let b = std::fs::read(second.join(file)).unwrap();
        assert!(a == b, "{file} differs between runs");
    }
    std::fs::remove_dir_all(&first).ok();
    std::fs::remove_dir_all(&second).ok();
}

#[test]
fn errors_and_violations_have_distinct_codes() {
    let out = scratch("codes");
    assert_eq!(run(&["envelope", "--integrand", "no-such-entry"], &out).status.code(), Some(2));
    assert_eq!(run(&["relax"], &out).status.code(), Some(2));
    let bad = out.join("bad.toml");
    std::fs::write(&bad, "not_a_field = 1\n").unwrap();
    assert_eq!(run(&["check", "--config", bad.to_str().unwrap()], &out).status.code(), Some(2));
    // The weighted density moves with the scale, so a zero tolerance fails.
    let cfg = out.join("derive.toml");
    std::fs::write(&cfg, "points = [[0.5]]\n[set_function]\nkind = \"weighted-volume\"\nk = 2\n").unwrap();
    let o = run(&["derive", "--config", cfg.to_str().unwrap(), "--tol", "0", "--eps-seq", "0.4,0.2,0.1"], &out);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stdout));
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn derive_writes_scale_value_rows() {
    let out = scratch("derive");
    let cfg = out.join("in.toml");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(&cfg, "points = [[0.3, 0.6]]\n[set_function]\nkind = \"weighted-volume\"\nk = 4\n").unwrap();
    let o = run(&["derive", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv(&out.join("derive.csv"));
    assert_eq!(rows.len(), 5);
    let last: f64 = rows[4][4].parse().unwrap();
    assert!((last - 1.45).abs() < 1e-3, "{last}");
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn check_reports_declared_hypotheses() {
    let out = scratch("check");
    let o = run(&["check", "--integrand", "two-well-rank-one", "--t-seq", "0.5,0.9"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let meta = json(&out.join("check.json"));
    assert_eq!(meta["result"]["hypotheses"][0]["hypothesis"], "H3");
    assert_eq!(read_csv(&out.join("modulus.csv")).len(), 2);
    std::fs::remove_dir_all(&out).ok();
}

#[test]
fn verify_runs_a_filtered_suite() {
    let out = scratch("verify");
    let o = run(&["verify", "--only", "11"], &out);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("PASS [11]"), "{stdout}");
    let meta = json(&out.join("verify.json"));
    assert_eq!(meta["result"]["outcomes"].as_array().unwrap().len(), 1);
    std::fs::remove_dir_all(&out).ok();
}
