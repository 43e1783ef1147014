use std::path::Path;
use std::process::{Command, Output};

use qcd_cli::commands::{latency_plan, read_latency_report};
use qcd_cli::{Cli, Options};
use qcd_core::montecarlo::estimate_latency;

use clap::Parser;

fn qcd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcd"))
        .args(args)
        .output()
        .expect("spawn qcd")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn detect_zero_stream_has_no_alarm() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "zeros.txt", &"0\n".repeat(100));
    let out = qcd(&["detect", &input, "--detector", "glr-both"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("result: no alarm"), "{text}");
    assert!(text.contains("final_statistic: 0\n"), "{text}");
}

#[test]
fn detect_trace_rows() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "obs.txt", "0\n2\n");
    let trace = dir.path().join("trace.csv");
    let out = qcd(&[
        "detect",
        &input,
        "--detector",
        "glr-post",
        "--mu0",
        "0",
        "--sigma2",
        "1",
        "--delta-f",
        "0.01",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(&trace).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "n,statistic,threshold,alarm");
    assert!(rows[2].starts_with("2,2,"), "{csv}");
    assert!(rows[2].ends_with(",false"));
    assert!(!csv.contains('\r'));
}

#[test]
fn detect_reports_alarm_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "jump.txt", &"5\n".repeat(30));
    let out = qcd(&["detect", &input, "--detector", "glr-post", "--mu0", "0", "--format", "json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let n = v["fired_at"].as_u64().unwrap();
    assert!(n >= 1 && n <= 30);
    assert!(v["final_statistic"].as_f64().unwrap() >= v["threshold"].as_f64().unwrap());
    let text = stdout(&qcd(&["detect", &input, "--detector", "glr-post", "--mu0", "0"]));
    assert!(text.contains(&format!("result: alarm at n={n}")));
}

#[test]
fn detect_rejects_bad_lines() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "bad.txt", "1.5\nabc\n2\n");
    let out = qcd(&["detect", &input, "--detector", "glr-post", "--mu0", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
    let missing = qcd(&["detect", "/nonexistent/obs.txt", "--detector", "glr-post", "--mu0", "0"]);
    assert_eq!(missing.status.code(), Some(2));
    let input = write(dir.path(), "ok.txt", "1\n");
    let out = qcd(&["detect", &input, "--detector", "glr-post"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("mu0"));
    let input = write(dir.path(), "nan.txt", "1\nNaN\n");
    let out = qcd(&["detect", &input, "--detector", "glr-post", "--mu0", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bounds_table() {
    let base = ["bounds", "--horizon", "10000", "--delta-f", "0.01", "--delta-d", "0.01", "--sigma2", "1"];
    let mut args = base.to_vec();
    args.extend(["--detector", "glr-post"]);
    let out = qcd(&args);
    assert!(out.status.success());
    assert_eq!(
        stdout(&out),
        "detector,horizon,delta_f,delta_d,sigma2,gap,pre_window,m_min,m_cor1,d\nglr-post,10000,0.01,0.01,1,1,,,,141\n"
    );
    let mut args = base.to_vec();
    args.extend(["--detector", "glr-both", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&qcd(&args).stdout).unwrap();
    assert_eq!(v["m_min"], 596);
    assert_eq!(v["m_cor1"], 1196);
    let mut args = base.to_vec();
    args.extend(["--detector", "glr-both", "--pre-window", "100"]);
    let out = qcd(&args);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("pre-window too small"));
}

#[test]
fn latency_oracle_and_validation() {
    let out = qcd(&[
        "latency",
        "--detector",
        "oracle",
        "--oracle-delay",
        "7",
        "--horizon",
        "500",
        "--pre-window",
        "100",
        "--trials",
        "10",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.starts_with("nu,percentile_delay,n_trials,n_false_alarms,n_censored\n101,7,10,0,0\n"));
    assert!(text.ends_with("summary,7,80,0,0\n"), "{text}");

    let out = qcd(&[
        "latency", "--detector", "glr-post", "--horizon", "500", "--pre-window", "100", "--grid", "50,200",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("pre-window"));
}

#[test]
fn latency_is_reproducible_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let args = |path: &str, threads: &'static str| {
        vec![
            "latency".to_string(),
            "--detector=glr-post".into(),
            "--horizon=600".into(),
            "--trials=30".into(),
            "--seed=11".into(),
            "--delta-f=0.05".into(),
            "--delta-d=0.05".into(),
            "--format=json".into(),
            format!("--threads={threads}"),
            format!("--output={path}"),
        ]
    };
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let run = |p: &Path, t| {
        let v = args(p.to_str().unwrap(), t);
        let out = Command::new(env!("CARGO_BIN_EXE_qcd")).args(&v).output().unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
    };
    run(&a, "1");
    run(&b, "3");
    let bytes = std::fs::read(&a).unwrap();
    assert_eq!(bytes, std::fs::read(&b).unwrap());

    let parsed = read_latency_report(&a).unwrap();
    let cli = Cli::try_parse_from([
        "qcd",
        "latency",
        "--detector=glr-post",
        "--horizon=600",
        "--trials=30",
        "--seed=11",
        "--delta-f=0.05",
        "--delta-d=0.05",
    ]);
    let o: Options = cli.unwrap().options;
    let (plan, _) = latency_plan(&o, "glr-post", 600, (0.05, 0.05), 0).unwrap();
    assert_eq!(parsed, estimate_latency(&plan).unwrap());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cfg.json",
        r#"{"detector": "glr-both", "horizon": 10000, "delta-f": 0.01, "delta-d": 0.01}"#,
    );
    let out = qcd(&["bounds", "--config", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).ends_with(",596,1196,1187\n"), "{}", stdout(&out));
    let out = qcd(&["bounds", "--config", &cfg, "--detector", "glr-post"]);
    assert!(stdout(&out).ends_with(",141\n"));
    let bad = write(dir.path(), "bad.json", r#"{"detectr": "glr-both"}"#);
    assert_eq!(qcd(&["bounds", "--config", &bad]).status.code(), Some(1));
}

#[test]
fn simulate_is_seeded() {
    let args = ["simulate", "--horizon", "50", "--change-point", "20", "--seed", "4"];
    let a = qcd(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, qcd(&args).stdout);
    assert_eq!(stdout(&a).lines().count(), 50);
    let other = qcd(&["simulate", "--horizon", "50", "--change-point", "20", "--seed", "5"]);
    assert_ne!(a.stdout, other.stdout);
    let json = qcd(&["simulate", "--horizon", "50", "--change-point", "20", "--seed", "4", "--format", "json"]);
    let v: Vec<f64> = serde_json::from_slice(&json.stdout).unwrap();
    let text: Vec<f64> = stdout(&a).lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(v, text);
    assert_eq!(qcd(&["simulate", "--horizon", "50", "--change-point", "60"]).status.code(), Some(1));
}

#[test]
fn false_alarm_command() {
    let out = qcd(&[
        "false-alarm",
        "--detector",
        "cusum",
        "--threshold=-inf",
        "--mu0",
        "0",
        "--mu1",
        "1",
        "--horizon",
        "100",
        "--trials",
        "20",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(
        stdout(&out),
        "fa_rate,ci_halfwidth,n_trials,n_alarms,earliest_alarm,latest_alarm\n1,0,20,20,1,1\n"
    );
}

#[test]
fn sweep_rows() {
    let out = qcd(&[
        "sweep",
        "--detector",
        "glr-both,glr-post",
        "--axis",
        "horizon",
        "--values",
        "2000,3000",
        "--trials",
        "40",
        "--delta-f",
        "0.05",
        "--delta-d",
        "0.05",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], ["axis_value", "empirical_latency", "bound", "detector"]);
    assert_eq!(rows.len(), 5);
    for r in &rows[1..] {
        let emp: u64 = r[1].parse().unwrap();
        let bound: u64 = r[2].parse().unwrap();
        assert!(emp <= bound, "{text}");
    }
    assert_eq!(rows[1][0], "2000");
    assert_eq!(rows[3][3], "glr-post");

    let bad = qcd(&["sweep", "--detector", "glr-post", "--axis", "delta", "--values", "1.5", "--horizon", "500"]);
    assert_eq!(bad.status.code(), Some(1));
    let empty = qcd(&["sweep", "--detector", "glr-post", "--axis", "delta", "--horizon", "500"]);
    assert_eq!(empty.status.code(), Some(1));
    let axis = qcd(&["sweep", "--detector", "glr-post", "--axis", "width", "--values", "1"]);
    assert_eq!(axis.status.code(), Some(1));
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(qcd(&["--help"]).status.code(), Some(0));
    assert_eq!(qcd(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(qcd(&["bounds", "--detector", "sr", "--horizon", "10"]).status.code(), Some(1));
}
