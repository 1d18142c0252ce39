//! Timing harness: Cascade, batched inference, and a calibrated c1 n + c2 n^2 + c3 n^3 cost model.

use std::hint::black_box;
use std::io::{Read, Write};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bits::BitString;
use crate::cascade::{run_cascade_with, CascadeConfig, CascadeTranscript};
use crate::error::{Error, Result};
use crate::predictor::{session_features, AutoencoderModel};
use crate::rng::{indexed_stream, Stream};

pub const BENCH_HEADER: &str = "n,cascade_seconds,inference_seconds,traditional_model_seconds";
pub const BENCH_ERROR_RATE: f64 = 0.05;
pub const CALIBRATION_SIZES: [usize; 4] = [64, 128, 256, 512];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub cascade_seconds: f64,
    pub inference_seconds: f64,
    pub traditional_model_seconds: f64,
}

/// Seconds per unit of work for vector, matrix-vector and matrix-matrix primitives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl CostModel {
    pub fn seconds(&self, n: usize) -> f64 {
        let n = n as f64;
        self.c1 * n + self.c2 * n * n + self.c3 * n * n * n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slopes {
    pub cascade: f64,
    pub inference: f64,
    pub traditional: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub cost_model: CostModel,
    pub slopes: Slopes,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 { xs[m] } else { 0.5 * (xs[m - 1] + xs[m]) }
}

fn time_median(trials: usize, mut f: impl FnMut()) -> f64 {
    median(
        (0..trials.max(1))
            .map(|_| {
                let t = Instant::now();
                f();
                t.elapsed().as_secs_f64()
            })
            .collect(),
    )
}

/// Random key of length n and a copy with independent flips at rate e.
pub fn synthetic_keys(n: usize, e: f64, seed: u64) -> (BitString, BitString) {
    let mut rng = indexed_stream(seed, Stream::Synthetic, n as u64);
    let alice: BitString = (0..n).map(|_| rng.random::<bool>() as u8).collect();
    let bob: BitString = alice.iter().map(|b| b ^ rng.random_bool(e) as u8).collect();
    (alice, bob)
}

/// Median wall time of one Cascade run at e = 0.05, fresh keys per trial.
pub fn time_cascade(n: usize, trials: usize, seed: u64) -> Result<f64> {
    let mut times = Vec::new();
    for t in 0..trials.max(1) as u64 {
        let (a, b) = synthetic_keys(n, BENCH_ERROR_RATE, seed.wrapping_add(t));
        let cfg = CascadeConfig::with_seed(seed ^ t);
        let start = Instant::now();
        let r = run_cascade_with(&a, &b, BENCH_ERROR_RATE, &cfg, CascadeTranscript::counters_only())?;
        times.push(start.elapsed().as_secs_f64());
        black_box(r);
    }
    Ok(median(times))
}

pub fn synthetic_feature_rows(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = indexed_stream(seed, Stream::Synthetic, u64::MAX - n as u64);
    (0..n)
        .map(|i| session_features(rng.random_range(1_000..1_000_000), i % 10 + 1, rng.random_range(0.0..0.08)))
        .collect()
}

/// Median wall time of predicting an n-row batch.
pub fn time_inference(model: &AutoencoderModel, n: usize, trials: usize, seed: u64) -> Result<f64> {
    let rows = synthetic_feature_rows(n, seed);
    model.forward(&rows[0])?;
    Ok(time_median(trials, || {
        black_box(model.predict_batch(black_box(&rows)).expect("shape checked"));
    }))
}

/// Least-squares c in t = c m^k over the calibration sizes.
fn fit_power(samples: &[(usize, f64)], k: i32) -> f64 {
    let num: f64 = samples.iter().map(|&(m, t)| t * (m as f64).powi(k)).sum();
    let den: f64 = samples.iter().map(|&(m, _)| (m as f64).powi(2 * k)).sum();
    num / den
}

/// Times dense f64 vector, matrix-vector and matrix-matrix products at m ≤ 512.
pub fn calibrate(trials: usize, seed: u64) -> CostModel {
    let mut rng = indexed_stream(seed, Stream::Synthetic, 0);
    let (mut v1, mut v2, mut v3) = (Vec::new(), Vec::new(), Vec::new());
    for &m in &CALIBRATION_SIZES {
        let a = DMatrix::<f64>::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let b = DMatrix::<f64>::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let x = DVector::<f64>::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::<f64>::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        // Small primitives are repeated so a single timing is well above clock resolution.
        let reps = 1000;
        v1.push((m, time_median(trials, || {
            for _ in 0..reps {
                black_box(black_box(&x).dot(black_box(&y)));
            }
        }) / reps as f64));
        let reps = 20;
        v2.push((m, time_median(trials, || {
            for _ in 0..reps {
                black_box(black_box(&a) * black_box(&x));
            }
        }) / reps as f64));
        v3.push((m, time_median(trials, || {
            black_box(black_box(&a) * black_box(&b));
        })));
    }
    CostModel { c1: fit_power(&v1, 1), c2: fit_power(&v2, 2), c3: fit_power(&v3, 3) }
}

/// Least-squares slope of log t against log n.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::param("points", "need at least 2"));
    }
    if points.iter().any(|&(n, t)| !(n > 0.0 && t > 0.0)) {
        return Err(Error::param("points", "log-log fit needs positive values"));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::param("points", "need distinct sizes"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

pub fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.is_empty() || sizes[0] < 2 {
        return Err(Error::param("sizes", "need at least one size >= 2"));
    }
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("sizes", "must be strictly increasing"));
    }
    Ok(())
}

pub fn run_bench(sizes: &[usize], trials: usize, model: &AutoencoderModel, seed: u64) -> Result<BenchReport> {
    check_sizes(sizes)?;
    let cost_model = calibrate(trials.max(3), seed);
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        rows.push(BenchRow {
            n,
            cascade_seconds: time_cascade(n, trials, seed)?,
            inference_seconds: time_inference(model, n, trials, seed)?,
            traditional_model_seconds: cost_model.seconds(n),
        });
    }
    let slopes = if rows.len() >= 2 {
        let fit = |f: fn(&BenchRow) -> f64| loglog_slope(&rows.iter().map(|r| (r.n as f64, f(r))).collect::<Vec<_>>());
        Slopes {
            cascade: fit(|r| r.cascade_seconds)?,
            inference: fit(|r| r.inference_seconds)?,
            traditional: fit(|r| r.traditional_model_seconds)?,
        }
    } else {
        Slopes { cascade: f64::NAN, inference: f64::NAN, traditional: f64::NAN }
    };
    Ok(BenchReport { rows, cost_model, slopes })
}

pub fn write_csv<W: Write>(rows: &[BenchRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BENCH_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            format!("{:.16e}", r.cascade_seconds),
            format!("{:.16e}", r.inference_seconds),
            format!("{:.16e}", r.traditional_model_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is ascii")
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<BenchRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut records = reader.records();
    match records.next() {
        Some(Ok(h)) if h.iter().eq(BENCH_HEADER.split(',')) => {}
        _ => return Err(Error::MalformedLine { line: 1, reason: "missing or unexpected header".into() }),
    }
    let mut rows: Vec<BenchRow> = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| Error::MalformedLine { line: e.position().map_or(0, |p| p.line()), reason: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(Error::MalformedLine { line, reason: format!("expected 4 columns, found {}", rec.len()) });
        }
        let bad = |what: &str| Error::MalformedLine { line, reason: format!("bad {what}") };
        let time = |i: usize, what: &str| -> Result<f64> {
            let v: f64 = rec[i].trim().parse().map_err(|_| bad(what))?;
            if v.is_finite() && v >= 0.0 { Ok(v) } else { Err(bad(what)) }
        };
        let row = BenchRow {
            n: rec[0].trim().parse().map_err(|_| bad("n"))?,
            cascade_seconds: time(1, "cascade_seconds")?,
            inference_seconds: time(2, "inference_seconds")?,
            traditional_model_seconds: time(3, "traditional_model_seconds")?,
        };
        if rows.last().is_some_and(|prev| prev.n >= row.n) {
            return Err(Error::MalformedLine { line, reason: "n must be strictly increasing".into() });
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn from_csv(text: &str) -> Result<Vec<BenchRow>> {
    read_csv(text.as_bytes())
}
