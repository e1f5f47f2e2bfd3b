use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mcboost"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn mcboost")
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let p = dir.join(format!("sim_{n}_{seed}.csv"));
    ok(&["simulate", "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", s(&p)]);
    p
}

fn fit_ols(dir: &Path, data: &Path) -> PathBuf {
    let m = dir.join("ols.json");
    ok(&["fit", "--data", s(data), "--kind", "ols", "--out", s(&m)]);
    m
}

#[test]
fn simulate_writes_rows_and_truth() {
    let t = tempfile::tempdir().unwrap();
    let p = simulate(t.path(), 1000, 5);
    let text = std::fs::read_to_string(p).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "x1,x2,x3,x4,x5,x6,x7,y,f_star");
    assert_eq!(lines.count(), 1000);
}

#[test]
fn simulate_is_seed_reproducible() {
    let t = tempfile::tempdir().unwrap();
    let a = std::fs::read(simulate(t.path(), 300, 11)).unwrap();
    let b = std::fs::read(simulate(&t.path().join(".."), 300, 11)).unwrap();
    let c = std::fs::read(simulate(t.path(), 300, 12)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

fn last_trace_calib_loss(trace: &Path) -> f64 {
    let text = std::fs::read_to_string(trace).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "calib_loss").unwrap();
    let last = lines.last().expect("trace has records");
    last.split(',').nth(col).unwrap().parse().unwrap()
}

fn report_value(report: &str, metric: &str) -> f64 {
    report
        .lines()
        .find(|l| l.starts_with("global,") && l.split(',').nth(3) == Some(metric))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn calibrate_then_evaluate_reproduces_trace() {
    let t = tempfile::tempdir().unwrap();
    let data = simulate(t.path(), 2000, 3);
    let m0 = fit_ols(t.path(), &data);
    let model = t.path().join("m.json");
    let trace = t.path().join("trace.csv");
    ok(&[
        "calibrate", "--data", s(&data), "--model", s(&m0), "--auditor", "tree", "--groups", "x6,x7", "--L", "4",
        "--stop", "budget:0.5", "--out", s(&model), "--trace", s(&trace),
    ]);
    let o = ok(&["evaluate", "--data", s(&data), "--model", s(&model), "--part", "calib", "--truth", "f_star"]);
    let report = String::from_utf8(o.stdout).unwrap();
    assert_eq!(report_value(&report, "mean_loss"), last_trace_calib_loss(&trace));

    // the initial model alone scores worse on Ξ
    let o = ok(&["evaluate", "--data", s(&data), "--model", s(&model), "--part", "calib", "--initial-only"]);
    let before = report_value(&String::from_utf8(o.stdout).unwrap(), "mean_loss");
    assert!(before > last_trace_calib_loss(&trace));
}

#[test]
fn calibrate_is_reproducible_across_thread_counts() {
    let t = tempfile::tempdir().unwrap();
    let data = simulate(t.path(), 1200, 8);
    let m0 = fit_ols(t.path(), &data);
    let outs: Vec<String> = ["1", "3"]
        .iter()
        .map(|threads| {
            let m = t.path().join(format!("m{threads}.json"));
            ok(&[
                "--threads", threads, "calibrate", "--data", s(&data), "--model", s(&m0), "--auditor", "tree",
                "--groups", "x6", "--stop", "cv:3", "--seed", "4", "--out", s(&m),
            ]);
            std::fs::read_to_string(m).unwrap()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn config_file_fills_missing_flags() {
    let t = tempfile::tempdir().unwrap();
    let data = simulate(t.path(), 500, 1);
    let m0 = fit_ols(t.path(), &data);
    let model = t.path().join("m.json");
    let cfg = t.path().join("cfg.json");
    let json = format!(
        r#"{{"seed": 9, "calibrate": {{"data": {:?}, "model": {:?}, "auditor": "linear", "L": 2, "max_iters": 3}}}}"#,
        s(&data),
        s(&m0)
    );
    std::fs::write(&cfg, json).unwrap();
    ok(&["--config", s(&cfg), "calibrate", "--out", s(&model)]);
    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(model).unwrap()).unwrap();
    assert!(m["updates"].as_array().unwrap().len() <= 3);
    assert_eq!(m["split"]["spec"]["seed"], 9);
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(run(&["calibrate", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["simulate", "--n", "10"]).status.code(), Some(2));

    let cfg = t.path().join("bad.json");
    std::fs::write(&cfg, r#"{"calibrate": {"nonsense": 1}}"#).unwrap();
    assert_eq!(run(&["--config", s(&cfg), "calibrate"]).status.code(), Some(2));

    let missing = t.path().join("missing.csv");
    let o = run(&["calibrate", "--data", s(&missing), "--initial-column", "f", "--out", "x.json"]);
    assert_eq!(o.status.code(), Some(3));

    let data = simulate(t.path(), 200, 1);
    let o = run(&["calibrate", "--data", s(&data), "--initial-column", "f", "--score", "pinball:1.5", "--out", "x.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tau"));
}

#[test]
fn failed_write_leaves_no_partial_file() {
    let t = tempfile::tempdir().unwrap();
    let data = simulate(t.path(), 200, 2);
    let out = t.path().join("m.json");
    let o = run(&["calibrate", "--data", s(&data), "--initial-column", "absent", "--out", s(&out)]);
    assert_ne!(o.status.code(), Some(0));
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(t.path()).unwrap().count(), 1);
}

#[test]
fn quantile_instances_run() {
    let t = tempfile::tempdir().unwrap();
    let data = simulate(t.path(), 1500, 4);
    let q0 = t.path().join("qrf.json");
    ok(&["fit", "--data", s(&data), "--kind", "qrf", "--tau", "0.9", "--n-trees", "20", "--out", s(&q0)]);
    let g = t.path().join("gcp.json");
    ok(&["batchgcp", "--data", s(&data), "--model", s(&q0), "--tau", "0.9", "--groups", "x6,x7", "--out", s(&g)]);
    let o = ok(&["evaluate", "--data", s(&data), "--model", s(&g), "--coverage"]);
    let report = String::from_utf8(o.stdout).unwrap();
    let covs: Vec<f64> = report
        .lines()
        .filter(|l| l.starts_with("group,") && l.split(',').nth(3) == Some("coverage"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(covs.len(), 4);
    for c in covs {
        assert!((c - 0.9).abs() < 0.02, "coverage {c}");
    }

    let m = t.path().join("mvp.json");
    let tr = t.path().join("mvp.csv");
    ok(&[
        "multimvp", "--data", s(&data), "--model", s(&q0), "--tau", "0.9", "--L", "20", "--scale", "--groups", "x6",
        "--out", s(&m), "--trace", s(&tr),
    ]);
    ok(&["evaluate", "--data", s(&data), "--model", s(&m), "--coverage"]);
}

#[test]
fn shift_eval_reports_weighted_metrics() {
    let t = tempfile::tempdir().unwrap();
    let data = simulate(t.path(), 1000, 6);
    let m0 = fit_ols(t.path(), &data);
    let m = t.path().join("m.json");
    ok(&["calibrate", "--data", s(&data), "--model", s(&m0), "--max-iters", "5", "--out", s(&m)]);
    for shift in ["curvature_tilt", "hard_region"] {
        let o = ok(&["shift-eval", "--data", s(&data), "--model", s(&m), "--shift", shift, "--groups", "x6"]);
        assert!(String::from_utf8(o.stdout).unwrap().contains("mse"));
    }
    ok(&["shift-eval", "--data", s(&data), "--model", s(&m), "--custom", "exp(0.3*z1)"]);
    let o = run(&["shift-eval", "--data", s(&data), "--model", s(&m), "--custom", "exp(q)"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reproduce_emits_figure_table() {
    let o = ok(&[
        "reproduce", "--figure", "1", "--reps", "1", "--sizes", "300", "--n-test", "300", "--n-trees", "5",
        "--max-iters", "5",
    ]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "n,init,metric,mean,se");
    assert!(text.lines().count() > 1);
    assert_eq!(run(&["reproduce", "--figure", "9", "--reps", "1"]).status.code(), Some(2));
}
