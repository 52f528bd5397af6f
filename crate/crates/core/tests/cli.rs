use std::path::Path;
use std::process::{Command, Output};

use fairlens::harness::{AuditReport, CSV_HEADER};

fn fairlens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairlens"))
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

const QUICK: [&str; 6] = ["--n", "2000", "--n-permutations", "99", "--n-bins", "5"];

fn audit(extra: &[&str]) -> Output {
    fairlens(&[&["audit"], &QUICK[..], extra].concat())
}

/// Report bytes with the timestamp line dropped.
fn without_timestamp(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .filter(|l| !l.trim_start().starts_with("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn audit_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("r.csv");
    let json = dir.path().join("r.json");
    assert_eq!(code(&audit(&["--out", csv.to_str().unwrap()])), 0);
    assert_eq!(code(&audit(&["--out", json.to_str().unwrap()])), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER.join(","));
    assert_eq!(lines.count(), 3);
    let rep: AuditReport = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(rep.verdicts.len(), 3);
    assert_eq!(rep.config_echo.n, 2000);
}

#[test]
fn format_flag_overrides_extension() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.txt");
    assert_eq!(
        code(&audit(&["--out", out.to_str().unwrap(), "--format", "csv"])),
        0
    );
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("axiom,"));
}

#[test]
fn config_file_is_layered_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("r.json");
    std::fs::write(
        &cfg,
        r#"{"rho1": 0.0, "rho2": 0.5, "n": 50000, "seed": 9, "test": {"n_bins_y": 5}}"#,
    )
    .unwrap();
    let o = fairlens(&[
        "audit",
        "--config",
        cfg.to_str().unwrap(),
        "--n",
        "3000",
        "--n-permutations",
        "99",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: AuditReport = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!((rep.config_echo.rho1, rep.config_echo.rho2), (0.0, 0.5));
    assert_eq!((rep.config_echo.n, rep.config_echo.seed), (3000, 9));
    assert_eq!(
        (
            rep.config_echo.test.n_bins_y,
            rep.config_echo.test.n_permutations
        ),
        (5, 99)
    );
}

#[test]
fn repeated_runs_are_identical_but_for_the_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    assert_eq!(code(&audit(&["--out", out.to_str().unwrap()])), 0);
    let first = without_timestamp(&out);
    assert!(first.len() < std::fs::read_to_string(&out).unwrap().len());
    assert_eq!(code(&audit(&["--out", out.to_str().unwrap()])), 0);
    assert_eq!(without_timestamp(&out), first);
}

#[test]
fn config_errors_exit_2() {
    assert_eq!(code(&audit(&["--rho1", "0.9", "--rho2", "0.9"])), 2);
    assert_eq!(code(&audit(&["--alpha", "0.7"])), 2);
    assert_eq!(code(&audit(&["--pricing", "oracle"])), 2);
    assert_eq!(code(&fairlens(&["audit", "--n", "999"])), 2);
    assert_eq!(
        code(&fairlens(&[
            "reproduce",
            "separation-moments",
            "--n",
            "1000"
        ])),
        2
    );
    assert_eq!(
        code(&fairlens(&["table", "--pair", "0.8,0.8", "--n", "1000"])),
        2
    );
    assert_eq!(code(&fairlens(&["table", "--pair", "nonsense"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"rho3": 0.1}"#).unwrap();
    assert_eq!(
        code(&fairlens(&["audit", "--config", cfg.to_str().unwrap()])),
        2
    );
    std::fs::write(&cfg, "not json").unwrap();
    assert_eq!(
        code(&fairlens(&["audit", "--config", cfg.to_str().unwrap()])),
        2
    );
}

#[test]
fn io_errors_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing/r.json");
    assert_eq!(code(&audit(&["--out", missing.to_str().unwrap()])), 4);
    let cfg = dir.path().join("absent.json");
    assert_eq!(
        code(&fairlens(&["audit", "--config", cfg.to_str().unwrap()])),
        4
    );
}

#[test]
fn disagreement_exits_3() {
    // A correlation far too small to detect at this size: the test HOLDS
    // while the population verdict is VIOLATED.
    let o = fairlens(&[
        "audit",
        "--rho1",
        "0.001",
        "--rho2",
        "0.0",
        "--n",
        "100000",
        "--n-permutations",
        "99",
        "--n-bins",
        "5",
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("disagreement"));
}

#[test]
fn reproduce_reports_ordered_moments() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sep.json");
    let o = fairlens(&[
        "reproduce",
        "separation-moments",
        "--n",
        "1000000",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["value1_lt_value2"], true);
    assert_eq!(v["value2_lt_one"], true);
    assert_eq!(v["value1"]["method"], "monte_carlo");
}

#[test]
fn table_with_custom_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = fairlens(&[
        "table",
        "--pair",
        "0,0",
        "--pair",
        "0.3,0",
        "--n",
        "2000",
        "--n-permutations",
        "99",
        "--n-bins",
        "5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(
        std::fs::read_to_string(&out).unwrap().lines().count(),
        1 + 6
    );
    assert!(String::from_utf8_lossy(&o.stdout).contains("(0.3, 0)"));
}
