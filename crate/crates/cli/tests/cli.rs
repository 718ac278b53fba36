use std::path::Path;
use std::process::{Command, Output};

fn minsurf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minsurf"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path).expect("output file")
}

#[test]
fn verify_report_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    for t in ["1", "4"] {
        let out = format!("v{t}.json");
        let o = minsurf(dir.path(), &["verify", "--samples", "5000", "--seed", "7", "--threads", t, "--out", &out]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(read(dir.path().join("v1.json")), read(dir.path().join("v4.json")));
}

#[test]
fn scan_reports_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["rank1-convexity", "small-det", "sptnull"] {
        let mut files = Vec::new();
        for t in ["1", "4"] {
            let out = format!("{kind}-{t}.json");
            let hist = format!("{kind}-{t}.csv");
            let o = minsurf(
                dir.path(),
                &["scan", "--kind", kind, "--samples", "3000", "--threads", t, "--out", &out, "--histogram-csv", &hist],
            );
            assert_eq!(code(&o), 0, "{kind}: {}", String::from_utf8_lossy(&o.stderr));
            files.push((read(dir.path().join(&out)), std::fs::read(dir.path().join(&hist)).ok()));
        }
        assert!(files[0] == files[1], "{kind} differs between thread counts");
    }
}

#[test]
fn verify_with_zero_samples_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let o = minsurf(dir.path(), &["verify", "--samples", "0"]);
    assert_eq!(code(&o), 0);
    let report: serde_json::Value = serde_json::from_slice(&read(dir.path().join("verify-report.json"))).unwrap();
    assert_eq!(report["violation_count"], 0);
    assert_eq!(report["samples"], 0);
}

#[test]
fn unknown_scan_kind_prints_usage() {
    let dir = tempfile::tempdir().unwrap();
    let o = minsurf(dir.path(), &["scan", "--kind", "no-such-scan"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("usage"), "{err}");
    assert!(err.contains("small-det"), "{err}");
    assert!(!dir.path().join("scan-report.json").exists());
}

#[test]
fn forced_violations_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    // C1 grid too small for the inequality to hold.
    let o = minsurf(dir.path(), &["scan", "--kind", "sptnull", "--samples", "2000", "--c1", "1e-6"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&read(dir.path().join("scan-report.json"))).unwrap();
    assert!(report["violation_count"].as_u64().unwrap() > 0);
}

#[test]
fn invalid_parameters_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&minsurf(dir.path(), &["scan", "--kind", "rank1-convexity", "--lambda-bound", "-1"])), 2);
    assert_eq!(code(&minsurf(dir.path(), &["solve", "--preset", "nope"])), 2);
    assert_eq!(code(&minsurf(dir.path(), &["solve", "--tol", "-1"])), 2);
}

#[test]
fn missing_input_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&minsurf(dir.path(), &["residuals", "--input", "absent.json"])), 4);
}

#[test]
fn unwritable_output_leaves_no_file() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("missing").join("report.json");
    let o = minsurf(dir.path(), &["verify", "--samples", "100", "--out", target.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(!target.exists());
    let leftovers: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn nonconvergence_saves_last_iterate() {
    let dir = tempfile::tempdir().unwrap();
    let o = minsurf(dir.path(), &["solve", "--rings", "6", "--max-iter", "1", "--out", "last.json"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let map: serde_json::Value = serde_json::from_slice(&read(dir.path().join("last.json"))).unwrap();
    assert_eq!(map["schema"], "minsurf.discrete-map/v1");
}

#[test]
fn solve_residuals_and_factorize_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = minsurf(dir.path(), &["solve", "--rings", "8", "--levels", "2", "--residual-csv", "r.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = String::from_utf8(read(dir.path().join("r.csv"))).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "level,rings,h,nodes,iterations,outer_residual,inner_residual");
    assert_eq!(lines.len(), 3);

    let o = minsurf(dir.path(), &["residuals", "--input", "solution.json"]);
    assert_eq!(code(&o), 0);
    let res: serde_json::Value = serde_json::from_slice(&read(dir.path().join("residuals.json"))).unwrap();
    let refined = res["test_spaces"]["refined"]["outer_residual"].as_f64().unwrap();
    let last: f64 = lines[2].split(',').nth(5).unwrap().parse().unwrap();
    assert_eq!(refined, last);

    let o = minsurf(dir.path(), &["factorize", "--input", "solution.json", "--grid", "64", "--out", "fac"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["phi.json", "v.json", "report.json"] {
        assert!(dir.path().join("fac").join(f).exists(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&read(dir.path().join("fac/report.json"))).unwrap();
    assert!(report["mu_sup"].as_f64().unwrap() < 1.0);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.conf"), "# scan settings\nsamples = 500\nseed = 3\nout = from-file.json\n").unwrap();

    let o = minsurf(dir.path(), &["scan", "--kind", "rank1-hessian", "--config", "run.conf"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a: serde_json::Value = serde_json::from_slice(&read(dir.path().join("from-file.json"))).unwrap();
    assert_eq!(a["samples"], 500);

    let o = minsurf(
        dir.path(),
        &["scan", "--kind", "rank1-hessian", "--config", "run.conf", "--samples", "700", "--out", "flag.json"],
    );
    assert_eq!(code(&o), 0);
    let b: serde_json::Value = serde_json::from_slice(&read(dir.path().join("flag.json"))).unwrap();
    assert_eq!(b["samples"], 700);
    assert_eq!(b["seed"], a["seed"]);
}

#[test]
fn config_file_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.conf"), "smaples = 5\n").unwrap();
    let o = minsurf(dir.path(), &["verify", "--config", "bad.conf"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn help_documents_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let o = minsurf(dir.path(), &["--help"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("level,rings,h,nodes,iterations,outer_residual,inner_residual"));
    assert!(text.contains("bin_lo,bin_hi,count"));
}
