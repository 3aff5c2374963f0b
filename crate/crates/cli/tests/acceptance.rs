//! The acceptance criteria at their stated tolerances, on the full-size suite
//! presets. One test per criterion; the suite runs once and is shared.

use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use shelab::config::{SuiteConfig, DEFAULT_DETERMINISM_PATHS};
use shelab::run::Artifacts;
use shelab::suite::run_suite;
use shelab::Report;

const SEED: u64 = 1;

fn suite() -> &'static Report {
    static REPORT: OnceLock<Report> = OnceLock::new();
    REPORT.get_or_init(|| {
        let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
        let config = SuiteConfig {
            seed: SEED,
            paths_cap: None,
            determinism_paths: DEFAULT_DETERMINISM_PATHS,
        };
        let mut report = Report::new("full-suite", String::new());
        run_suite(&config, workers, false, &mut report, &mut Artifacts::default()).expect("suite runs");
        report
    })
}

fn criterion(group: u32) {
    let report = suite();
    let entries: Vec<_> = report.criteria.iter().filter(|c| c.group == Some(group)).collect();
    assert!(!entries.is_empty(), "criterion {group} produced no entries");
    let pass = entries.iter().all(|c| c.pass);
    let mut lines = format!("criterion {group}: {}\n", if pass { "PASS" } else { "FAIL" });
    for c in &entries {
        lines.push_str(&format!(
            "  {} {:<40} measured {:.6e} bound [{}, {}] {}\n",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            c.measured,
            c.bound.lower.map_or("-inf".into(), |v| v.to_string()),
            c.bound.upper.map_or("inf".into(), |v| v.to_string()),
            c.detail
        ));
    }
    println!("{lines}");
    assert!(pass, "{lines}");
}

#[test]
fn criterion_1_kernel_identities() {
    criterion(1);
}

#[test]
fn criterion_2_additive_variance_and_normality() {
    criterion(2);
}

#[test]
fn criterion_3_anderson_variance_growth() {
    criterion(3);
}

#[test]
fn criterion_4_clt_rate() {
    criterion(4);
}

#[test]
fn criterion_5_finite_dimensional_distributions() {
    criterion(5);
}

#[test]
fn criterion_6_tightness() {
    criterion(6);
}

#[test]
fn criterion_7_determinism_across_workers() {
    criterion(7);
}

#[test]
fn criterion_8_xi_solver_and_estimate() {
    criterion(8);
}

fn run_binary(out: &Path, workers: usize) -> serde_json::Value {
    let status = Command::new(env!("CARGO_BIN_EXE_shelab"))
        .args([
            "full-suite",
            "--paths",
            "200",
            "--seed",
            "3",
            "--workers",
            &workers.to_string(),
            "--out",
        ])
        .arg(out)
        .env("RUST_LOG", "warn")
        .status()
        .expect("binary runs");
    assert!(matches!(status.code(), Some(0 | 1)), "unexpected exit {status:?}");
    serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

/// The binary end to end: one and eight workers give identical reports.
#[test]
fn criterion_7_binary_reports_match() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_binary(&dir.path().join("w1"), 1);
    let b = run_binary(&dir.path().join("w8"), 8);
    let verdicts = |r: &serde_json::Value| -> Vec<(String, bool)> {
        r["criteria"]
            .as_array()
            .unwrap()
            .iter()
            .filter(|c| c["name"] != "kernel.runtime_seconds")
            .map(|c| (c["name"].as_str().unwrap().to_string(), c["pass"].as_bool().unwrap()))
            .collect()
    };
    let same = a["digests"] == b["digests"] && verdicts(&a) == verdicts(&b);
    println!("criterion 7 (binary): {}", if same { "PASS" } else { "FAIL" });
    assert_eq!(a["digests"], b["digests"]);
    assert_eq!(verdicts(&a), verdicts(&b));
    let csv = |d: &str| std::fs::read(dir.path().join(d).join("results.csv")).unwrap();
    assert_eq!(csv("w1"), csv("w8"));
}
