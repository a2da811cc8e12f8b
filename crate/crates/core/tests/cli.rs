use std::fs;
use std::path::Path;
use std::process::Command;

use irr::bench::{ExperimentReport, Method};

fn irr_bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_irr"));
    c.env("RUST_LOG", "error");
    c
}

/// 80 rows: an id column, three features, and a label that is linear in them.
fn write_csv(path: &Path) {
    let mut text = String::from("id,a,b,c,target\n");
    for i in 0..80 {
        let a = (i as f64 * 0.37).sin();
        let b = (i as f64 * 0.11).cos();
        let c = a * 0.8 + b * 0.3;
        let y = 2.0 * a - b + 0.5 * c + 0.01 * ((i * 7919) % 13) as f64;
        text.push_str(&format!("{i},{a},{b},{c},{y}\n"));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn bench_writes_json_and_tsv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("toy.csv");
    write_csv(&csv);
    let json = dir.path().join("r.json");
    let tsv = dir.path().join("r.tsv");
    let out = irr_bin()
        .args(["bench", "--data"])
        .arg(&csv)
        .args(["--has-header", "--label-col", "target", "--skip-cols", "id"])
        .args(["--corruption", "independent", "--target-fraction", "0.7"])
        .args([
            "--train-size",
            "50",
            "--trials",
            "2",
            "--methods",
            "nocorr,zero,mean,ind,irr",
        ])
        .args(["--seed", "7", "--report-bounds", "--out"])
        .arg(&json)
        .arg("--tsv")
        .arg(&tsv)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let report: ExperimentReport =
        serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report.d, 3);
    assert_eq!(report.trials, 2);
    assert_eq!(report.methods.len(), 5);
    for m in &report.methods {
        assert_eq!(m.trial_rmse.len(), 2);
        assert!(m.rmse_mean.is_finite());
    }
    assert!(report.method(Method::Irr).unwrap().best_gamma.is_some());
    assert_eq!(report.bounds.len(), 2);
    assert!((report.fraction_remaining.mean - 0.7).abs() < 0.1);

    let table = fs::read_to_string(&tsv).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0].split('\t').count(), 8);
    assert!(String::from_utf8_lossy(&out.stdout).contains("IRR"));

    // same seed, same report apart from timing
    let json2 = dir.path().join("r2.json");
    let out = irr_bin()
        .args(["bench", "--data"])
        .arg(&csv)
        .args(["--has-header", "--label-col", "target", "--skip-cols", "id"])
        .args(["--corruption", "independent", "--target-fraction", "0.7"])
        .args([
            "--train-size",
            "50",
            "--trials",
            "2",
            "--methods",
            "nocorr,zero,mean,ind,irr",
        ])
        .args(["--seed", "7", "--report-bounds", "--out"])
        .arg(&json2)
        .output()
        .unwrap();
    assert!(out.status.success());
    let mut again: ExperimentReport =
        serde_json::from_str(&fs::read_to_string(&json2).unwrap()).unwrap();
    again.runtime_seconds = report.runtime_seconds;
    assert_eq!(again, report);
}

#[test]
fn sweep_emits_plot_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("toy.csv");
    write_csv(&csv);
    let tsv = dir.path().join("sweep.tsv");
    let out = irr_bin()
        .args(["sweep", "--data"])
        .arg(&csv)
        .args([
            "--has-header",
            "--skip-cols",
            "id",
            "--corruption",
            "dependent",
        ])
        .args([
            "--fractions",
            "0.75,1.0",
            "--train-size",
            "50",
            "--trials",
            "2",
        ])
        .args(["--methods", "nocorr,zero,mean", "--tsv"])
        .arg(&tsv)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(&tsv).unwrap();
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows.len(), 6);
    let nocorr: Vec<&str> = rows
        .iter()
        .filter(|r| r[2] == "nocorr")
        .map(|r| r[3])
        .collect();
    assert_eq!(nocorr[0], nocorr[1]);
    let full: Vec<&str> = rows.iter().filter(|r| r[0] == "1").map(|r| r[3]).collect();
    assert!(full.iter().all(|v| *v == full[0]));
}

#[test]
fn failures_exit_nonzero() {
    let out = irr_bin()
        .args([
            "bench",
            "--data",
            "/nonexistent/file.csv",
            "--label-col",
            "0",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("toy.csv");
    write_csv(&csv);
    let out = irr_bin()
        .args(["digits", "--digit", "3", "--has-header", "--data"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(!out.status.success());

    let out = irr_bin()
        .args(["bench", "--methods", "knn", "--data", "x.csv"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
