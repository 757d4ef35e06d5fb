use std::path::Path;
use std::process::{Command, Output};

fn asfw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asfw")).args(args).output().expect("binary runs")
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn meta(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn chained_lq_trace_on_stdout() {
    let out = asfw(&["run", "--problem", "chained_lq", "--n", "5", "--step", "sqrt", "--max-iters", "500"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("t,alpha,gap,fval,inner_polyhedra,lp_calls,elapsed_ms"));
    let rows = rows(&text);
    assert!(!rows.is_empty() && rows.len() <= 500);
    for r in &rows {
        let gap: f64 = r[2].parse().unwrap();
        let f: f64 = r[3].parse().unwrap();
        assert!(gap >= -1e-12 && f.is_finite());
    }
    let f_last: f64 = rows.last().unwrap()[3].parse().unwrap();
    assert!((f_last + 4.0 * 2f64.sqrt()).abs() < 0.5, "f={f_last}");
}

#[test]
fn maxq_writes_csv_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("mq.csv");
    let out = asfw(&[
        "run", "--problem", "maxq", "--n", "10", "--set", "C2", "--step", "sqrt", "--gap-tol", "1e-10",
        "--output", csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let m = meta(&dir.path().join("mq.meta.json"));
    assert_eq!(m["status"], "GapTolReached");
    assert_eq!(m["name"], "maxq");
    assert_eq!(m["set"], "C2");
    assert_eq!(m["n"], "10");
    let n_rows = rows(&std::fs::read_to_string(&csv).unwrap()).len();
    assert_eq!(m["rows"], n_rows);
}

#[test]
fn ordered_lasso_stops_after_a_few_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("lasso.csv");
    let out = asfw(&[
        "run", "--problem", "lasso", "--n", "125", "--p", "250", "--variant", "ordered", "--seed", "7",
        "--output", csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let m = meta(&dir.path().join("lasso.meta.json"));
    assert_eq!(m["status"], "ExactGapZero");
    assert!(m["rows"].as_u64().unwrap() <= 5);
    assert_eq!(m["seed"], 7);
    assert_eq!(m["rho_setting"], "auto");
    assert!(m["generator"].is_string());
}

#[test]
fn csv_is_deterministic_apart_from_timing() {
    let args = ["run", "--problem", "chained_crescent1", "--n", "6", "--step", "harmonic", "--max-iters", "60"];
    let strip = |o: Output| -> Vec<String> {
        String::from_utf8(o.stdout)
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
            .collect()
    };
    assert_eq!(strip(asfw(&args)), strip(asfw(&args)));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# sweep settings\nproblem = chained_lq\nn = 4\nmax_iters = 7\nstep = harmonic\n").unwrap();
    let out = asfw(&["run", "--config", cfg.to_str().unwrap(), "--max-iters", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(rows(&text).len(), 3);
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("\"step\": \"harmonic\""), "{stderr}");
    assert!(stderr.contains("\"n\": \"4\""), "{stderr}");
}

#[test]
fn sweep_writes_one_file_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = asfw(&[
        "run", "--problem", "maxq", "--n", "4,6", "--set", "C1,C3", "--max-iters", "50", "--jobs", "3",
        "--output", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for n in [4, 6] {
        for set in ["C1", "C3"] {
            let stem = format!("maxq_n{n}_{set}");
            assert!(dir.path().join(format!("{stem}.csv")).exists(), "{stem}");
            assert_eq!(meta(&dir.path().join(format!("{stem}.meta.json")))["set"], set);
        }
    }
}

#[test]
fn config_errors_exit_with_two() {
    for args in [
        vec!["run", "--problem", "nope"],
        vec!["run", "--problem", "maxq", "--n", "1"],
        vec!["run", "--problem", "lasso", "--rho", "-2"],
        vec!["run", "--problem", "maxq", "--step", "fixed:0"],
        vec!["run", "--problem", "active_faces"],
        vec!["run", "--problem", "maxq", "--n", "3,4"],
        vec!["run", "--config", "/nonexistent/cfg"],
        vec!["run", "--bogus-flag"],
        vec!["aasm-table", "--n-max", "21"],
    ] {
        let out = asfw(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn extended_problems_need_the_flag() {
    let out = asfw(&["run", "--problem", "active_faces", "--n", "4", "--max-iters", "20", "--extended"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn aasm_table_counts() {
    let out = asfw(&["aasm-table", "--n-max", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0][1], "1");
    assert_eq!(lines[4][2], "16");
    assert!(lines.iter().all(|l| l[4] == "yes" && l[5] == "yes"));
}

#[test]
fn selftest_passes_and_detects_corruption() {
    assert_eq!(asfw(&["selftest"]).status.code(), Some(0));
    let bad = asfw(&["selftest", "--corrupt-l"]);
    assert_ne!(bad.status.code(), Some(0));
    assert!(String::from_utf8(bad.stdout).unwrap().contains("FAIL"));
}
