//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! Failures are reported but do not fail the process unless QKDKIT_ACCEPTANCE_STRICT=1.
//! QKDKIT_ACCEPTANCE_CORPUS=<path> caches the generated training corpus between runs.

use std::collections::HashMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qkdkit::amplify::verify_keys;
use qkdkit::bench::{run_bench, synthetic_keys};
use qkdkit::cascade::{parse_ndjson, recount, run_cascade, CascadeConfig, Direction, MessageKind};
use qkdkit::dataset::{self, DatasetRecord, GenerateConfig};
use qkdkit::keyrate::{binary_entropy, objective, Variant};
use qkdkit::predictor::{self, init_model, AutoencoderModel, Sample, TrainConfig, TrainingRecord};
use qkdkit::protocol::{run_session, SessionConfig};
use qkdkit::quantum::{analytic_qber, channel_state, outcome_distribution, ComplexMatrix, PovmSet};
use qkdkit::{BitString, ChannelParams};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn channel_correctness() -> Verdict {
    let povm = PovmSet::default();
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        for j in 0..20 {
            let theta = std::f64::consts::FRAC_PI_2 * i as f64 / 19.0;
            let q = j as f64 / 19.0;
            let params = ChannelParams::new(theta, q).unwrap();
            let dist = outcome_distribution(&channel_state(params).unwrap(), &povm).unwrap();
            let (mut err, mut matched) = (0.0, 0.0);
            for (a, b, x, y, p) in dist.iter() {
                if a == b {
                    matched += p;
                    if x != y {
                        err += p;
                    }
                }
            }
            let closed_form = (1.0 - q) * theta.sin().powi(2) + q / 2.0;
            worst = worst.max((err / matched - closed_form).abs()).max((analytic_qber(params).unwrap() - closed_form).abs());
        }
    }
    let mut inside = 0;
    for run in 0..100u64 {
        let q = [0.02, 0.06, 0.1, 0.14][run as usize % 4];
        let theta = [0.0, 0.05, 0.1][run as usize % 3];
        let params = ChannelParams::new(theta, q).unwrap();
        let e = analytic_qber(params).unwrap();
        let s = run_session(&SessionConfig::new(100_000, params, 1000 + run)).unwrap();
        let sigma = (e * (1.0 - e) / s.test_bits as f64).sqrt();
        if (s.qber_est - e).abs() <= 3.0 * sigma {
            inside += 1;
        }
    }
    verdict(worst <= 1e-12 && inside >= 95, format!("grid max |diff| = {worst:.2e}; {inside}/100 sampled QBERs within 3 sigma"))
}

fn cascade_efficiency() -> Verdict {
    let n = 10_000;
    let mut parts = Vec::new();
    let mut ok = true;
    for e in [0.02, 0.05, 0.08, 0.10] {
        let (mut sum_f, mut counted, mut clean) = (0.0, 0, 0);
        for t in 0..100u64 {
            let (a, b) = synthetic_keys(n, e, 7_000 + t);
            let r = run_cascade(&a, &b, e, &CascadeConfig::with_seed(t)).unwrap();
            if r.transcript.final_mismatch == 0 {
                clean += 1;
            }
            let e_true = a.hamming(&b).unwrap() as f64 / n as f64;
            if e_true > 0.0 {
                sum_f += r.transcript.leak_ab_bits as f64 / (n as f64 * binary_entropy(e_true).unwrap());
                counted += 1;
            }
        }
        let mean_f = sum_f / counted as f64;
        ok &= (1.0..=1.5).contains(&mean_f) && clean >= 99;
        parts.push(format!("e={e}: mean f {mean_f:.3}, clean {clean}/100"));
    }
    verdict(ok, parts.join("; "))
}

fn leak_accounting() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = 0;
    for i in 0..50u64 {
        let n_raw = rng.random_range(2_000..40_000);
        let q = rng.random_range(0.0..0.2);
        let s = run_session(&SessionConfig::new(n_raw, ChannelParams::new(0.0, q).unwrap(), 500 + i)).unwrap();
        if s.alice_key.len() < 2 {
            continue;
        }
        let qber = if s.aborted { 0.05 } else { s.qber_est };
        let r = run_cascade(&s.alice_key, &s.bob_key, qber, &CascadeConfig::with_seed(i)).unwrap();
        let t = &r.transcript;
        let messages = parse_ndjson(&t.to_ndjson()).unwrap();
        let (mut ab, mut ba) = (0u64, 0u64);
        let mut parities: HashMap<(u32, u64), (usize, usize)> = HashMap::new();
        for m in &messages {
            match m.direction {
                Direction::AliceToBob => ab += m.payload_bits as u64,
                Direction::BobToAlice => ba += m.payload_bits as u64,
            }
            if m.kind == MessageKind::BlockParity {
                let e = parities.entry((m.pass, m.block)).or_default();
                match m.direction {
                    Direction::AliceToBob => e.0 += 1,
                    Direction::BobToAlice => e.1 += 1,
                }
            }
        }
        let reciprocal = parities.values().all(|(a, b)| a == b);
        if (ab, ba) != (t.leak_ab_bits, t.leak_ba_bits) || recount(&messages) != (ab, ba) || !reciprocal {
            failures += 1;
        }
    }
    verdict(failures == 0, format!("{failures} of 50 sessions disagree with the replayed log"))
}

fn objective_sanity() -> Verdict {
    let bell = channel_state(ChannelParams::perfect()).unwrap();
    let f_bell = objective(&bell, Variant::F).unwrap();
    let mixed = ComplexMatrix::identity(4).scale(0.25);
    let f_mixed = objective(&mixed, Variant::F).unwrap();
    let fp_mixed = objective(&mixed, Variant::FPrime).unwrap();
    let (mut worst_excess, mut max_gap) = (f64::NEG_INFINITY, 0.0f64);
    for i in 0..8 {
        for j in 0..8 {
            let params = ChannelParams::new(std::f64::consts::FRAC_PI_2 * i as f64 / 7.0, j as f64 / 7.0).unwrap();
            let rho = channel_state(params).unwrap();
            let f = objective(&rho, Variant::F).unwrap();
            let fp = objective(&rho, Variant::FPrime).unwrap();
            worst_excess = worst_excess.max(fp - f);
            max_gap = max_gap.max(f - fp);
        }
    }
    let ok = (f_bell - 0.5).abs() <= 1e-9 && f_mixed.abs() <= 1e-9 && fp_mixed.abs() <= 1e-9 && worst_excess <= 1e-9;
    verdict(
        ok,
        format!("f(Bell) = {f_bell:.12}; f(I/4) = {f_mixed:.1e}, f'(I/4) = {fp_mixed:.1e}; max f'-f = {worst_excess:.1e}; measured max F-F' gap = {max_gap:.3e}"),
    )
}

fn corpus() -> Vec<DatasetRecord> {
    let config = GenerateConfig::new(dataset::DEFAULT_RECORDS, 0);
    if let Ok(path) = std::env::var("QKDKIT_ACCEPTANCE_CORPUS") {
        let path = Path::new(&path);
        if path.exists() {
            return dataset::load(path).expect("cached corpus loads");
        }
        let records = dataset::generate(&config).expect("corpus generates");
        dataset::save(&records, path).expect("corpus saves");
        return records;
    }
    dataset::generate(&config).expect("corpus generates")
}

fn training_trend(trace: &[TrainingRecord]) -> Verdict {
    let at: Vec<f64> = [1, 13, 50, 70, 100].iter().map(|&e| trace[e - 1].loss).collect();
    let decreasing = at.windows(2).all(|w| w[1] < w[0]);
    let ratio = at[4] / at[0];
    verdict(
        decreasing && ratio <= 0.25,
        format!("losses at 1/13/50/70/100 = {}; loss(100)/loss(1) = {ratio:.3}", at.iter().map(|l| format!("{l:.4}")).collect::<Vec<_>>().join(" > ")),
    )
}

fn prediction_quality(model: &AutoencoderModel, test: &[Sample]) -> Verdict {
    let eval = predictor::evaluate(model, test, 0.05).unwrap();
    let (acc_key, mae_qber) = (eval.accuracy[1], eval.mae[0]);
    verdict(
        acc_key >= 0.95 && mae_qber <= 0.01,
        format!("key-length accuracy (±5%) = {acc_key:.3} (need 0.95); QBER MAE = {mae_qber:.4} (need 0.01); {} held-out records", test.len()),
    )
}

fn gradient_correctness() -> Verdict {
    let mut worst: f64 = 0.0;
    for seed in 0..5u64 {
        let mut model = init_model(&[3, 8, 4, 8, 2], seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        model.biases.iter_mut().flatten().for_each(|b| *b = rng.random_range(0.01..0.1));
        let batch: Vec<Sample> = (0..5)
            .map(|_| ((0..3).map(|_| rng.random_range(-1.0..1.0)).collect(), (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let analytic = model.loss_and_gradient(&batch, 0.0).1.flatten();
        let h = 1e-6;
        let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
        for (i, a) in analytic.iter().enumerate() {
            let p = model.param(i);
            let mut plus = model.clone();
            plus.set_param(i, p + h);
            let mut minus = model.clone();
            minus.set_param(i, p - h);
            let numeric = (plus.batch_loss(&batch, 0.0) - minus.batch_loss(&batch, 0.0)) / (2.0 * h);
            diff += (a - numeric).powi(2);
            na += a * a;
            nn += numeric * numeric;
        }
        worst = worst.max(diff.sqrt() / (na.sqrt() + nn.sqrt()));
    }
    verdict(worst <= 1e-4, format!("max relative error over 5 seeds = {worst:.2e}"))
}

fn complexity(model: &AutoencoderModel) -> Verdict {
    let report = run_bench(&[10_000, 100_000, 1_000_000], 5, model, 0).unwrap();
    let last = report.rows.last().unwrap();
    let ratio = last.traditional_model_seconds / last.inference_seconds;
    let s = report.slopes;
    verdict(
        s.inference <= 1.1 && (0.9..=1.4).contains(&s.cascade) && ratio >= 1e3,
        format!("inference slope {:.3}; cascade slope {:.3}; traditional/inference at n=1e6 = {ratio:.2e}", s.inference, s.cascade),
    )
}

fn end_to_end_determinism() -> Verdict {
    let bin = env!("CARGO_BIN_EXE_qkdkit");
    let root = tempfile::tempdir().unwrap();
    let run = |dir: &Path| {
        std::fs::create_dir_all(dir).unwrap();
        let session = dir.join("session.json");
        let sim = Command::new(bin)
            .args(["simulate", "--n", "50000", "--q", "0.06", "--theta", "0.05", "--seed", "2024", "--out"])
            .arg(&session)
            .output()
            .unwrap();
        let rec = Command::new(bin)
            .args(["reconcile", "--seed", "2024", "--session"])
            .arg(&session)
            .arg("--out")
            .arg(dir.join("out"))
            .output()
            .unwrap();
        (sim.status.code(), rec.status.code())
    };
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    let codes = (run(&a), run(&b));
    let files = ["session.json", "out/transcript.ndjson", "out/reconcile.json", "out/final_key.bin", "out/final_key.json"];
    let same = files.iter().all(|f| match (std::fs::read(a.join(f)), std::fs::read(b.join(f))) {
        (Ok(x), Ok(y)) => x == y && !x.is_empty(),
        _ => false,
    });
    let ok_codes = codes.0 == (Some(0), Some(0)) && codes.1 == (Some(0), Some(0));
    verdict(same && ok_codes, format!("{} files byte-identical: {same}; exit codes {:?}", files.len(), codes))
}

fn verification_soundness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut rejected, mut accepted) = (0, 0);
    for _ in 0..10_000 {
        let n = rng.random_range(1..2_000);
        let key: BitString = (0..n).map(|_| rng.random::<bool>() as u8).collect();
        let mut bad = key.clone();
        bad.flip(rng.random_range(0..n));
        let seed = rng.random();
        if !verify_keys(&key, &bad, seed).unwrap() {
            rejected += 1;
        }
        if verify_keys(&key, &key.clone(), seed).unwrap() {
            accepted += 1;
        }
    }
    verdict(rejected == 10_000 && accepted == 10_000, format!("corrupted rejected {rejected}/10000; identical accepted {accepted}/10000"))
}

fn main() {
    // Ignore libtest-style arguments such as --nocapture or test filters.
    let mut results: Vec<(&str, Verdict, f64)> = Vec::new();
    let mut timed = |name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        let start = Instant::now();
        let v = f();
        let secs = start.elapsed().as_secs_f64();
        println!("{} {name}: {} [{secs:.1}s]", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((name, v, secs));
    };

    timed("channel-correctness", &mut channel_correctness);
    timed("cascade-efficiency", &mut cascade_efficiency);
    timed("leak-accounting", &mut leak_accounting);
    timed("objective-sanity", &mut objective_sanity);

    let start = Instant::now();
    let records = corpus();
    let (train_r, test_r) = dataset::split(&records, 0.8, 0).unwrap();
    let train_set: Vec<Sample> = train_r.iter().map(DatasetRecord::sample).collect();
    let test_set: Vec<Sample> = test_r.iter().map(DatasetRecord::sample).collect();
    let (model, trace) = predictor::train(&train_set, &TrainConfig::default()).unwrap();
    let shared = start.elapsed().as_secs_f64();
    println!("       corpus of {} records generated and model trained in {shared:.1}s", records.len());

    timed("training-trend", &mut || training_trend(&trace));
    timed("prediction-quality", &mut || prediction_quality(&model, &test_set));
    timed("gradient-correctness", &mut gradient_correctness);
    timed("complexity-comparison", &mut || complexity(&model));
    timed("end-to-end-determinism", &mut end_to_end_determinism);
    timed("verification-soundness", &mut verification_soundness);

    let passed = results.iter().filter(|r| r.1.pass).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    let strict = std::env::var("QKDKIT_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < results.len() {
        std::process::exit(1);
    }
}
