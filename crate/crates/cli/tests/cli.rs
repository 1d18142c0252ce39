use std::path::Path;
use std::process::{Command, Output};

use qkdkit::bench::from_csv as bench_from_csv;
use qkdkit::keyrate::binary_entropy;
use qkdkit::protocol::SiftedSession;
use serde_json::Value;

fn qkdkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qkdkit")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn summary(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    let line = text.lines().last().unwrap_or_else(|| panic!("no stdout; stderr: {}", String::from_utf8_lossy(&out.stderr)));
    serde_json::from_str(line).expect("summary is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_code_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ok = d.join("ok.json");
    let aborted = d.join("aborted.json");
    let noisy = d.join("noisy.json");
    assert_eq!(code(&qkdkit(&["simulate", "--n", "20000", "--q", "0.04", "--seed", "1", "--out", s(&ok)])), 0);
    assert_eq!(code(&qkdkit(&["simulate", "--n", "2000", "--q", "0.5", "--seed", "1", "--out", s(&aborted)])), 1);
    assert_eq!(code(&qkdkit(&["simulate", "--n", "20000", "--q", "0.16", "--seed", "1", "--out", s(&noisy)])), 0);

    assert_eq!(code(&qkdkit(&["reconcile", "--session", s(&ok), "--out", s(&d.join("r0"))])), 0);
    assert_eq!(code(&qkdkit(&["reconcile", "--session", s(&aborted), "--out", s(&d.join("r1"))])), 1);
    // A single pass leaves residual errors at this noise level.
    assert_eq!(code(&qkdkit(&["reconcile", "--session", s(&noisy), "--passes", "1", "--out", s(&d.join("r2"))])), 2);

    let corrupt = d.join("corrupt.json");
    std::fs::write(&corrupt, "{\"n_raw\": 12").unwrap();
    assert_eq!(code(&qkdkit(&["reconcile", "--session", s(&corrupt)])), 3);
    assert_eq!(code(&qkdkit(&["simulate", "--q", "0.1", "--out", s(&d.join("x.json"))])), 3);
    assert_eq!(code(&qkdkit(&["simulate", "--n", "abc"])), 3);
    assert_eq!(code(&qkdkit(&["frobnicate"])), 3);
    assert_eq!(code(&qkdkit(&["keyrate", "--q", "1.5"])), 3);
    assert_eq!(code(&qkdkit(&["bench", "--sizes", "1000,500", "--out", s(&d.join("b.csv"))])), 3);

    assert_eq!(code(&qkdkit(&["reconcile", "--session", s(&d.join("missing.json"))])), 4);
    assert_eq!(code(&qkdkit(&["train", "--data", s(&d.join("missing.csv"))])), 4);
    let blocked = d.join("not_a_dir");
    std::fs::write(&blocked, "").unwrap();
    assert_eq!(code(&qkdkit(&["simulate", "--n", "1000", "--out", s(&blocked.join("s.json"))])), 4);
}

#[test]
fn simulate_qber_matches_channel() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    let out = qkdkit(&["simulate", "--n", "10000", "--q", "0.06", "--seed", "42", "--out", s(&path)]);
    assert_eq!(code(&out), 0);
    let session = SiftedSession::from_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let sigma = (0.03 * 0.97 / session.test_bits as f64).sqrt();
    assert!((session.qber_est - 0.03).abs() <= 3.0 * sigma, "{}", session.qber_est);
    assert_eq!(summary(&out)["qber_est"].as_f64().unwrap(), session.qber_est);
}

#[test]
fn reconcile_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let clean = d.join("clean.json");
    qkdkit(&["simulate", "--n", "20000", "--seed", "3", "--out", s(&clean)]);
    let out = qkdkit(&["reconcile", "--session", s(&clean), "--out", s(&d.join("c"))]);
    assert_eq!(code(&out), 0);
    let sum = summary(&out);
    assert!(sum["measured_f"].is_null());
    assert_eq!(sum["verified"], true);
    assert_eq!(sum["corrections"], 0);
    let transcript = qkdkit::cascade::parse_ndjson(&std::fs::read_to_string(d.join("c/transcript.ndjson")).unwrap()).unwrap();
    assert!(transcript.iter().all(|m| m.kind == qkdkit::cascade::MessageKind::BlockParity));
    assert_eq!(sum["leak_ab_bits"].as_u64().unwrap() as usize, transcript.len() / 2);

    let noisy = d.join("noisy.json");
    qkdkit(&["simulate", "--n", "50000", "--q", "0.1", "--seed", "5", "--out", s(&noisy)]);
    let out = qkdkit(&["reconcile", "--session", s(&noisy), "--seed", "5", "--out", s(&d.join("n"))]);
    assert_eq!(code(&out), 0);
    let sum = summary(&out);
    let f = sum["measured_f"].as_f64().unwrap();
    assert!((1.0..=1.5).contains(&f), "{f}");
    let sidecar = qkdkit::amplify::FinalKeySidecar::from_json(&std::fs::read_to_string(d.join("n/final_key.json")).unwrap()).unwrap();
    let key = std::fs::read(d.join("n/final_key.bin")).unwrap();
    assert_eq!(key.len(), sidecar.output_len.div_ceil(8));
    assert_eq!(sidecar.output_len as u64, sum["final_key_len"].as_u64().unwrap());
}

#[test]
fn keyrate_examples() {
    let perfect = summary(&qkdkit(&["keyrate", "--theta", "0", "--q", "0"]));
    assert!((perfect["rate_per_sifted"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(perfect["delta_leak"].as_f64().unwrap().abs() < 1e-12);

    let r = summary(&qkdkit(&["keyrate", "--theta", "0", "--q", "0.2", "--f-eff", "1.2"]));
    let threshold = 0.5 * 1.2 * binary_entropy(0.1).unwrap();
    let f = r["f"].as_f64().unwrap();
    assert_eq!(r["rate"].as_f64().unwrap() >= 0.0, f >= threshold);

    for (theta, q) in [("0.1", "0.05"), ("0.3", "0.0"), ("1.2", "0.3"), ("0.0", "1.0")] {
        let r = summary(&qkdkit(&["keyrate", "--theta", theta, "--q", q]));
        assert!(r["gap"].as_f64().unwrap() >= -1e-9, "{theta} {q}");
    }
}

#[test]
fn data_train_predict_tune_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (csv1, csv2) = (d.join("a.csv"), d.join("b.csv"));
    for (p, jobs) in [(&csv1, "1"), (&csv2, "2")] {
        let out = qkdkit(&["gen-data", "--records", "60", "--rate-max", "30000", "--seed", "4", "--jobs", jobs, "--out", s(p)]);
        assert_eq!(code(&out), 0);
        assert_eq!(summary(&out)["records"], 60);
    }
    assert_eq!(std::fs::read(&csv1).unwrap(), std::fs::read(&csv2).unwrap());

    let (m1, m2) = (d.join("m1.json"), d.join("m2.json"));
    for m in [&m1, &m2] {
        let out = qkdkit(&["train", "--data", s(&csv1), "--epochs", "13", "--seed", "2", "--out", s(m)]);
        assert_eq!(code(&out), 0);
        let sum = summary(&out);
        assert!(sum["checkpoints"]["13"].is_number());
        assert!(String::from_utf8_lossy(&out.stderr).contains("epoch   13  loss"));
    }
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());

    let out = qkdkit(&["predict", "--model", s(&m1), "--features", "4,2,0.03"]);
    assert_eq!(code(&out), 0);
    let p = summary(&out);
    assert!(p["qber_pred"].is_number() && p["key_len_fraction_pred"].is_number());
    assert_eq!(code(&qkdkit(&["predict", "--model", s(&m1), "--features", "4,2"])), 3);

    let t = summary(&qkdkit(&["tune", "--model", s(&m1), "--init", "4,2,0.03", "--step", "0.01", "--iterations", "5"]));
    assert_eq!(t["iterations"], 5);
}

#[test]
fn tune_toy_quadratic_converges() {
    let out = qkdkit(&["tune", "--toy-quadratic", "--step", "0.1", "--iterations", "500"]);
    let params: Vec<f64> = summary(&out)["params"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (got, want) in params.iter().zip([1.0, 2.0, 3.0]) {
        assert!((got - want).abs() < 0.01);
    }
}

#[test]
fn bench_rows_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.csv");
    let out = qkdkit(&["bench", "--sizes", "1000,4000", "--trials", "1", "--out", s(&path)]);
    assert_eq!(code(&out), 0);
    let rows = bench_from_csv(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), vec![1000, 4000]);
    assert!(summary(&out)["slopes"]["cascade"].is_number());
}

#[test]
fn config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("cfg.json");
    std::fs::write(&cfg, r#"{"n": 3000, "q": 0.5, "seed": 9}"#).unwrap();
    // q from the file aborts; the flag overrides it.
    assert_eq!(code(&qkdkit(&["--config", s(&cfg), "simulate", "--out", s(&d.join("a.json"))])), 1);
    let out = qkdkit(&["--config", s(&cfg), "simulate", "--q", "0.02", "--out", s(&d.join("b.json"))]);
    assert_eq!(code(&out), 0);
    assert_eq!(summary(&out)["n_raw"], 3000);
    std::fs::write(&cfg, r#"{"n": "many"}"#).unwrap();
    assert_eq!(code(&qkdkit(&["--config", s(&cfg), "simulate"])), 3);
}
