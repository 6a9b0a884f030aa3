//! End-to-end tests of the `tmcc` binary: golden files, format contracts,
//! exit codes, determinism, and the networked session path.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn tmcc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tmcc"))
}

fn run(args: &[&str]) -> Output {
    tmcc().args(args).output().expect("binary runs")
}

fn stdout_of(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "tmcc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 output")
}

fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("missing golden {name}: {e}"))
}

fn temp_path(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("tmcc-cli-test-{}-{name}", std::process::id()))
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .expect("header")
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .take_while(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, rows)
}

#[test]
fn dist_matches_golden_files() {
    for lambda in ["0.5", "1", "2", "5"] {
        let out = stdout_of(&["dist", "--lambda", lambda]);
        assert_eq!(
            out,
            golden(&format!("dist_lambda_{lambda}.csv")),
            "dist output drifted at λ = {lambda}"
        );
    }
    let json = stdout_of(&["dist", "--lambda", "2", "--format", "json"]);
    assert_eq!(json, golden("dist_lambda_2.json"));
    let parsed: serde_json::Value = serde_json::from_str(&json).expect("valid JSON");
    assert!(parsed.as_array().unwrap().len() > 10);
}

#[test]
fn dist_columns_sum_to_one() {
    let (header, rows) = parse_csv(&stdout_of(&["dist", "--lambda", "2"]));
    assert_eq!(header, ["n", "p_tmcc", "p_poisson"]);
    for column in [1, 2] {
        let total: f64 = rows.iter().map(|r| r[column].parse::<f64>().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9, "column {column} sums to {total}");
    }
}

#[test]
fn dist_vacuum_is_a_single_row() {
    let (_, rows) = parse_csv(&stdout_of(&["dist", "--lambda", "0"]));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0], ["0", "1", "1"]);
}

#[test]
fn moments_match_golden_and_fig2_ordering() {
    let out = stdout_of(&["moments", "--lambdas", "0.5,1,2,5"]);
    assert_eq!(out, golden("moments.csv"));

    let (header, rows) = parse_csv(&out);
    assert_eq!(header, ["lambda", "mean", "variance", "poisson_variance"]);
    for row in &rows {
        let variance: f64 = row[2].parse().unwrap();
        let poisson: f64 = row[3].parse().unwrap();
        assert!(variance < poisson, "row {row:?} breaks the dispersion ordering");
    }
    // λ = 1 row against the frozen oracle value.
    let row1 = rows.iter().find(|r| r[0] == "1").unwrap();
    let variance: f64 = row1[2].parse().unwrap();
    assert!((variance - 0.513_110_526_703).abs() < 1e-9);
}

#[test]
fn moments_vacuum_row() {
    let (_, rows) = parse_csv(&stdout_of(&["moments", "--lambdas", "0"]));
    assert_eq!(rows, [["0", "0", "0", "0"]]);
}

#[test]
fn session_is_deterministic_and_accepted() {
    let args = ["session", "--lambda", "2", "--bits", "256", "--seed", "11"];
    let first = stdout_of(&args);
    let second = stdout_of(&args);
    assert_eq!(first, second, "same flags and seed must give identical bytes");

    let summary: Vec<&str> = first.lines().skip_while(|l| !l.is_empty()).collect();
    assert!(summary.contains(&"outcome,accepted"));
    assert!(summary.contains(&"verification,match"));
    let key_rows: Vec<&&str> = summary
        .iter()
        .filter(|l| l.starts_with("alice_key,") || l.starts_with("bob_key,"))
        .collect();
    let alice = key_rows[0].split_once(',').unwrap().1;
    let bob = key_rows[1].split_once(',').unwrap().1;
    assert_eq!(alice, bob);
    assert_eq!(alice.len(), 256);
}

#[test]
fn session_exit_codes() {
    // Accepted.
    assert_eq!(
        run(&["session", "--lambda", "2", "--bits", "128", "--seed", "1"])
            .status
            .code(),
        Some(0)
    );
    // Eavesdropping suspected: cloned stream trips the distribution test.
    assert_eq!(
        run(&[
            "session", "--lambda", "2", "--bits", "4096", "--seed", "3", "--attack",
            "clone:poisson"
        ])
        .status
        .code(),
        Some(5)
    );
    // Verification abort: heavy noise on a session too short for detection.
    assert_eq!(
        run(&[
            "session", "--lambda", "2", "--epsilon", "0.3", "--bits", "32", "--seed", "0"
        ])
        .status
        .code(),
        Some(4)
    );
    // Usage errors.
    assert_eq!(
        run(&["session", "--lambda", "2", "--bits", "3"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["session", "--bits", "128"]).status.code(), Some(2));
    assert_eq!(
        run(&["session", "--lambda", "2", "--attack", "beam-split:1.5"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["dist", "--lambda", "2", "--format", "xml"]).status.code(),
        Some(2)
    );
    // Connection failure: nothing listens on a reserved port of the host.
    assert_eq!(
        run(&[
            "session", "--lambda", "2", "--transport", "tcp", "--role", "bob", "--connect",
            "127.0.0.1:1"
        ])
        .status
        .code(),
        Some(3)
    );
}

#[test]
fn session_attack_summary_names_detection() {
    let out = run(&[
        "session", "--lambda", "2", "--bits", "4096", "--seed", "3", "--attack", "clone:tmcc",
    ]);
    assert_eq!(out.status.code(), Some(5));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("outcome,aborted"));
    assert!(stdout.contains("abort_reason,eavesdropping-suspected"));
    assert!(stdout.contains("bob_detection_passed,false"));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("eavesdropping-suspected"));
}

#[test]
fn tcp_and_loopback_transcripts_are_byte_identical() {
    let seed = "90210";
    let loopback = temp_path("loopback.csv");
    let alice_file = temp_path("alice.csv");
    let bob_file = temp_path("bob.csv");

    // A noisy session: the outcome (usually a verification abort at this
    // length) must be identical over every transport, byte for byte.
    let base = [
        "session", "--lambda", "2", "--bits", "512", "--seed", seed, "--epsilon", "0.02",
    ];
    let loopback_status = tmcc()
        .args(base)
        .args(["--output", loopback.to_str().unwrap()])
        .status()
        .unwrap();

    // Alice listens on an OS-assigned port, announced on stderr.
    let mut alice = tmcc()
        .args(base)
        .args([
            "--transport",
            "tcp",
            "--role",
            "alice",
            "--listen",
            "127.0.0.1:0",
            "--output",
            alice_file.to_str().unwrap(),
        ])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut alice_stderr = BufReader::new(alice.stderr.take().unwrap());
    let mut line = String::new();
    alice_stderr.read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap_or_else(|| panic!("unexpected announcement {line:?}"))
        .to_string();

    let bob_status = tmcc()
        .args(base)
        .args([
            "--transport",
            "tcp",
            "--role",
            "bob",
            "--connect",
            &addr,
            "--output",
            bob_file.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    let alice_status = alice.wait().unwrap();
    assert_eq!(bob_status.code(), loopback_status.code());
    assert_eq!(alice_status.code(), loopback_status.code());

    let reference = std::fs::read(&loopback).unwrap();
    assert_eq!(std::fs::read(&alice_file).unwrap(), reference);
    assert_eq!(std::fs::read(&bob_file).unwrap(), reference);

    for path in [loopback, alice_file, bob_file] {
        let _ = std::fs::remove_file(path);
    }
}

#[test]
fn config_file_precedence() {
    let config = temp_path("session.conf");
    std::fs::write(&config, "lambda=1\nbits=64\nseed=5\n").unwrap();

    // Config alone supplies the values.
    let out = stdout_of(&["session", "--config", config.to_str().unwrap()]);
    assert!(out.contains("lambda,1\n"));
    assert!(out.contains("key_bits,64\n"));

    // Flags override the config.
    let out = stdout_of(&[
        "session",
        "--config",
        config.to_str().unwrap(),
        "--lambda",
        "2",
    ]);
    assert!(out.contains("lambda,2\n"));
    assert!(out.contains("key_bits,64\n"));

    let _ = std::fs::remove_file(config);
}

#[test]
fn sweep_error_columns() {
    let (header, rows) = parse_csv(&stdout_of(&[
        "sweep",
        "--lambdas",
        "1:6:1",
        "--epsilons",
        "0,0.05",
        "--bits-per-cell",
        "20000",
        "--seed",
        "3",
    ]));
    assert_eq!(
        header,
        [
            "lambda",
            "epsilon",
            "threshold",
            "p_zero",
            "error_factor",
            "p_err",
            "empirical_conditional_error",
            "empirical_mismatch_rate"
        ]
    );
    assert_eq!(rows.len(), 12);

    let mut previous_factor = f64::INFINITY;
    for row in &rows {
        let epsilon: f64 = row[1].parse().unwrap();
        let factor: f64 = row[4].parse().unwrap();
        let p_err: f64 = row[5].parse().unwrap();
        let conditional: f64 = row[6].parse().unwrap();
        let mismatch: f64 = row[7].parse().unwrap();
        if epsilon == 0.0 {
            assert_eq!(p_err, 0.0);
            assert_eq!(conditional, 0.0);
            assert_eq!(mismatch, 0.0);
            // Error factor is non-increasing along the λ grid.
            assert!(factor <= previous_factor + 1e-15);
            previous_factor = factor;
        } else {
            // Monte-Carlo estimate tracks ε·P_max(0) within 5 standard
            // errors plus the second-order slack.
            let se = (p_err * (1.0 - p_err) / 9000.0).sqrt(); // ≥ 45% of bits decode 0
            assert!(
                (conditional - p_err).abs() < 5.0 * se + epsilon * epsilon,
                "row {row:?}: conditional {conditional} vs p_err {p_err}"
            );
        }
    }

    assert_eq!(run(&["sweep", "--lambdas", "", "--epsilons", "0"]).status.code(), Some(2));
}
