use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn shelab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shelab"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "info")
        .env_remove("SHELAB_WORKERS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bad_config_names_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.conf"), "kind = variance\ndx = 0.05\ndt = 0.01\n").unwrap();
    let o = shelab(&["variance", "--config", "bad.conf", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("dt"), "{err}");
    assert!(err.contains("<="), "inequality missing: {err}");

    std::fs::write(dir.path().join("typo.conf"), "kind = variance\npaths = many\n").unwrap();
    let o = shelab(&["variance", "--config", "typo.conf", "--out", "o"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("line 2") && stderr(&o).contains("paths"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("blocker"), "").unwrap();
    let o = shelab(&["verify-kernels", "--out", "blocker/sub"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn vanishing_noise_fails_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = shelab(
        &[
            "variance",
            "--paths",
            "64",
            "--set",
            "sigma_c=0",
            "--set",
            "dx=0.1",
            "--out",
            "o",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("sigma_R_positive"));
}

#[test]
fn omitted_domain_is_derived_and_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let o = shelab(
        &["variance", "--paths", "32", "--set", "dx=0.1", "--out", "o"],
        dir.path(),
    );
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
    // R_max + 6√T = 10
    assert!(stderr(&o).contains("L = 10"), "{}", stderr(&o));
    let conf = std::fs::read_to_string(dir.path().join("o/experiment.conf")).unwrap();
    assert!(conf.lines().any(|l| l.replace(' ', "") == "L=10"), "{conf}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        [
            "tightness",
            "--paths",
            "200",
            "--seed",
            "9",
            "--workers",
            "2",
            "--out",
            out,
        ]
    };
    shelab(&args("a"), dir.path());
    shelab(&args("b"), dir.path());
    let read = |d: &str, f: &str| std::fs::read(dir.path().join(d).join(f)).unwrap();
    assert_eq!(read("a", "results.csv"), read("b", "results.csv"));
    let header = String::from_utf8(read("a", "results.csv")).unwrap();
    assert!(
        header.starts_with("R,t,n,mean,var,var_exact,ks,w1,skew,kurt"),
        "{header}"
    );
}

#[test]
fn interrupted_run_resumes_to_the_same_result() {
    let dir = tempfile::tempdir().unwrap();
    let common = [
        "fclt",
        "--paths",
        "300",
        "--seed",
        "4",
        "--set",
        "R=4",
        "--set",
        "L=10",
        "--set",
        "checkpoint_every=64",
    ];
    let mut whole = common.to_vec();
    whole.extend(["--out", "whole"]);
    shelab(&whole, dir.path());

    let mut part = common.to_vec();
    part.extend(["--out", "part", "--stop-after", "128"]);
    let o = shelab(&part, dir.path());
    assert!(
        String::from_utf8_lossy(&o.stdout).contains("stopped after"),
        "{}",
        stderr(&o)
    );
    assert!(dir.path().join("part/checkpoint.shee").exists());
    let o = shelab(&["resume", "--out", "part", "--workers", "3"], dir.path());
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));

    let read = |d: &str, f: &str| std::fs::read(dir.path().join(d).join(f)).unwrap();
    assert_eq!(read("whole", "results.csv"), read("part", "results.csv"));
    let digests = |d: &str| {
        let v: serde_json::Value = serde_json::from_slice(&read(d, "report.json")).unwrap();
        v["digests"].clone()
    };
    assert_eq!(digests("whole"), digests("part"));
}

#[test]
fn kernel_verification_is_quick() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let o = shelab(&["verify-kernels", "--out", "k"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("k/report.json")).unwrap()).unwrap();
    assert_eq!(report["schema_version"], 1);
    for c in report["criteria"].as_array().unwrap() {
        for key in ["name", "measured", "bound", "pass"] {
            assert!(c.get(key).is_some(), "missing {key} in {c}");
        }
    }
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for kind in shelab::Kind::ALL {
        let path = dir.join(format!("{kind}.conf"));
        let config = shelab::parse_config(&path, None).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(config.kind, kind);
        let again = shelab::parse_config_str(&shelab::serialize_config(&config), None).unwrap();
        assert_eq!(again, config);
    }
}
