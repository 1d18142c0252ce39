//! Training corpus: full simulated sessions across transmission rates.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{post_process, PostProcessConfig};
use crate::predictor::{session_features, Sample};
use crate::protocol::{run_session, SessionConfig, DEFAULT_QBER_THRESHOLD, DEFAULT_TEST_FRACTION, MIN_RAW_SIGNALS};
use crate::quantum::ChannelParams;
use crate::rng::{derive_seed, indexed_stream, stream, Stream};

pub const CSV_HEADER: &str =
    "attempt_id,rate_bps,n_initial,attempt_index,qber_true,qber_est,leak_ab_bits,leak_ba_bits,final_key_len,seed";
pub const DEFAULT_N_CAP: usize = 1_000_000;
pub const DEFAULT_RECORDS: usize = 10_000;
pub const ATTEMPTS_PER_PAIR: usize = 10;
pub const DEFAULT_RATE_MIN: f64 = 1e3;
pub const DEFAULT_RATE_MAX: f64 = 1.56e8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub attempt_id: u64,
    pub rate_bps: f64,
    pub n_initial: usize,
    pub attempt_index: usize,
    pub qber_true: f64,
    pub qber_est: f64,
    pub leak_ab_bits: u64,
    pub leak_ba_bits: u64,
    pub final_key_len: usize,
    pub seed: u64,
}

impl DatasetRecord {
    pub fn features(&self) -> Vec<f64> {
        session_features(self.n_initial, self.attempt_index, self.qber_est)
    }

    pub fn targets(&self) -> Vec<f64> {
        vec![self.qber_true, self.final_key_len as f64 / self.n_initial as f64]
    }

    pub fn sample(&self) -> Sample {
        (self.features(), self.targets())
    }

    pub fn validate(&self) -> Result<()> {
        if self.final_key_len > self.n_initial {
            return Err(Error::malformed("record", "final_key_len exceeds n_initial"));
        }
        if !(0.0..=1.0).contains(&self.qber_true) || !(0.0..=1.0).contains(&self.qber_est) {
            return Err(Error::malformed("record", "qber outside [0, 1]"));
        }
        if self.attempt_index == 0 || self.n_initial == 0 {
            return Err(Error::malformed("record", "attempt_index and n_initial must be positive"));
        }
        if !(self.rate_bps.is_finite() && self.rate_bps > 0.0) {
            return Err(Error::malformed("record", "rate_bps must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSampler {
    /// q uniform in [q_min, q_max], fixed misalignment.
    Uniform { q_min: f64, q_max: f64, theta: f64 },
    Fixed(ChannelParams),
}

impl Default for ChannelSampler {
    fn default() -> Self {
        ChannelSampler::Uniform { q_min: 0.0, q_max: 0.16, theta: 0.0 }
    }
}

impl ChannelSampler {
    fn draw(&self, rng: &mut impl Rng) -> Result<ChannelParams> {
        match *self {
            ChannelSampler::Uniform { q_min, q_max, theta } => {
                let q = if q_max > q_min { rng.random_range(q_min..=q_max) } else { q_min };
                ChannelParams::new(theta, q)
            }
            ChannelSampler::Fixed(p) => Ok(p),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ChannelSampler::Uniform { q_min, q_max, theta } => {
                if !(0.0 <= q_min && q_min <= q_max && q_max <= 1.0) {
                    return Err(Error::param("channel_sampler", "need 0 <= q_min <= q_max <= 1"));
                }
                ChannelParams::new(theta, q_min).map(|_| ())
            }
            ChannelSampler::Fixed(p) => p.validate(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub records: usize,
    pub rate_min_bps: f64,
    pub rate_max_bps: f64,
    pub sampler: ChannelSampler,
    pub master_seed: u64,
    pub n_cap: usize,
    pub test_fraction: f64,
    pub qber_threshold: f64,
}

impl GenerateConfig {
    pub fn new(records: usize, master_seed: u64) -> Self {
        GenerateConfig {
            records,
            rate_min_bps: DEFAULT_RATE_MIN,
            rate_max_bps: DEFAULT_RATE_MAX,
            sampler: ChannelSampler::default(),
            master_seed,
            n_cap: DEFAULT_N_CAP,
            test_fraction: DEFAULT_TEST_FRACTION,
            qber_threshold: DEFAULT_QBER_THRESHOLD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.records == 0 {
            return Err(Error::param("records", "must be at least 1"));
        }
        if !(self.rate_min_bps.is_finite() && self.rate_min_bps > 0.0 && self.rate_min_bps <= self.rate_max_bps && self.rate_max_bps.is_finite()) {
            return Err(Error::param("rate", format!("need 0 < {} <= {}", self.rate_min_bps, self.rate_max_bps)));
        }
        if self.n_cap < MIN_RAW_SIGNALS {
            return Err(Error::param("n_cap", format!("must be at least {MIN_RAW_SIGNALS}")));
        }
        self.sampler.validate()
    }
}

/// One record. Sessions shorter than the protocol minimum are raised to it.
pub fn generate_record(config: &GenerateConfig, attempt_id: u64) -> Result<DatasetRecord> {
    let mut rng = indexed_stream(config.master_seed, Stream::Dataset, attempt_id);
    let (lo, hi) = (config.rate_min_bps.ln(), config.rate_max_bps.ln());
    let rate_bps = if hi > lo { rng.random_range(lo..hi).exp() } else { config.rate_min_bps };
    let n_initial = (rate_bps.floor() as usize).min(config.n_cap).max(MIN_RAW_SIGNALS);
    let params = config.sampler.draw(&mut rng)?;
    let seed = derive_seed(config.master_seed, attempt_id);
    let session = run_session(&SessionConfig {
        n_raw: n_initial,
        params,
        test_fraction: config.test_fraction,
        qber_threshold: config.qber_threshold,
        seed,
    })?;
    let mut record = DatasetRecord {
        attempt_id,
        rate_bps,
        n_initial,
        attempt_index: (attempt_id as usize % ATTEMPTS_PER_PAIR) + 1,
        qber_true: session.qber_true,
        qber_est: session.qber_est,
        leak_ab_bits: 0,
        leak_ba_bits: 0,
        final_key_len: 0,
        seed,
    };
    if !session.aborted {
        let mut pp = PostProcessConfig::new(seed);
        pp.keep_messages = false;
        // The final length is fixed by the plan; the extraction itself is skipped here.
        pp.apply_amplification = false;
        let out = post_process(&session, &pp)?;
        record.leak_ab_bits = out.reconciliation.transcript.leak_ab_bits;
        record.leak_ba_bits = out.reconciliation.transcript.leak_ba_bits;
        record.final_key_len = out.final_len();
    }
    Ok(record)
}

pub fn generate(config: &GenerateConfig) -> Result<Vec<DatasetRecord>> {
    generate_parallel(config, 1)
}

/// Generates records on `jobs` threads; output is ordered by attempt_id.
pub fn generate_parallel(config: &GenerateConfig, jobs: usize) -> Result<Vec<DatasetRecord>> {
    config.validate()?;
    let jobs = jobs.clamp(1, config.records);
    if jobs == 1 {
        return (0..config.records as u64).map(|id| generate_record(config, id)).collect();
    }
    let ids: Vec<u64> = (0..config.records as u64).collect();
    let chunk = config.records.div_ceil(jobs);
    let parts: Vec<Result<Vec<DatasetRecord>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = ids
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|&id| generate_record(config, id)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("generator thread panicked")).collect()
    });
    let mut out = Vec::with_capacity(config.records);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// Seeded shuffle then split at round(train_fraction * len).
pub fn split(records: &[DatasetRecord], train_fraction: f64, seed: u64) -> Result<(Vec<DatasetRecord>, Vec<DatasetRecord>)> {
    if records.len() < 2 {
        return Err(Error::param("records", "need at least 2 to split"));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::param("train_fraction", format!("{train_fraction} not in (0, 1)")));
    }
    let mut shuffled = records.to_vec();
    shuffled.shuffle(&mut stream(seed, Stream::Shuffle));
    let cut = ((train_fraction * records.len() as f64).round() as usize).clamp(1, records.len() - 1);
    let test = shuffled.split_off(cut);
    Ok((shuffled, test))
}

pub fn write_csv<W: Write>(records: &[DatasetRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.write_record([
            r.attempt_id.to_string(),
            format!("{:.16e}", r.rate_bps),
            r.n_initial.to_string(),
            r.attempt_index.to_string(),
            format!("{:.16e}", r.qber_true),
            format!("{:.16e}", r.qber_est),
            r.leak_ab_bits.to_string(),
            r.leak_ba_bits.to_string(),
            r.final_key_len.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv(records: &[DatasetRecord]) -> String {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is ascii")
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: u64) -> Result<T> {
    let name = CSV_HEADER.split(',').nth(idx).unwrap_or("?");
    rec[idx].trim().parse().map_err(|_| Error::MalformedLine { line, reason: format!("bad {name} value {:?}", &rec[idx]) })
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<DatasetRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(input);
    let mut rows = reader.records();
    let columns = CSV_HEADER.split(',').count();
    match rows.next() {
        Some(Ok(h)) if h.iter().eq(CSV_HEADER.split(',')) => {}
        Some(Ok(_)) => return Err(Error::MalformedLine { line: 1, reason: "unexpected header".into() }),
        Some(Err(e)) => return Err(Error::MalformedLine { line: 1, reason: e.to_string() }),
        None => return Err(Error::MalformedLine { line: 1, reason: "missing header".into() }),
    }
    let mut out = Vec::new();
    for row in rows {
        let rec = row.map_err(|e| Error::MalformedLine {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != columns {
            return Err(Error::MalformedLine { line, reason: format!("expected {columns} columns, found {}", rec.len()) });
        }
        let r = DatasetRecord {
            attempt_id: field(&rec, 0, line)?,
            rate_bps: field(&rec, 1, line)?,
            n_initial: field(&rec, 2, line)?,
            attempt_index: field(&rec, 3, line)?,
            qber_true: field(&rec, 4, line)?,
            qber_est: field(&rec, 5, line)?,
            leak_ab_bits: field(&rec, 6, line)?,
            leak_ba_bits: field(&rec, 7, line)?,
            final_key_len: field(&rec, 8, line)?,
            seed: field(&rec, 9, line)?,
        };
        r.validate().map_err(|e| Error::MalformedLine { line, reason: e.to_string() })?;
        out.push(r);
    }
    Ok(out)
}

pub fn from_csv(text: &str) -> Result<Vec<DatasetRecord>> {
    read_csv(text.as_bytes())
}

pub fn save(records: &[DatasetRecord], path: &std::path::Path) -> Result<()> {
    write_csv(records, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load(path: &std::path::Path) -> Result<Vec<DatasetRecord>> {
    read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(records: usize, seed: u64) -> GenerateConfig {
        GenerateConfig { rate_max_bps: 2e4, ..GenerateConfig::new(records, seed) }
    }

    #[test]
    fn clean_channel_records() {
        let cfg = GenerateConfig {
            rate_min_bps: 1e3,
            rate_max_bps: 1e3,
            sampler: ChannelSampler::Fixed(ChannelParams::perfect()),
            ..GenerateConfig::new(10, 4)
        };
        let recs = generate(&cfg).unwrap();
        assert_eq!(recs.len(), 10);
        for r in &recs {
            assert_eq!(r.qber_true, 0.0);
            assert_eq!(r.n_initial, 1000);
            assert!(r.final_key_len > 0);
        }
        let idx: Vec<usize> = recs.iter().map(|r| r.attempt_index).collect();
        assert_eq!(idx, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn cap_and_abort_rules() {
        let cfg = GenerateConfig { records: 100, ..GenerateConfig::new(100, 2) };
        // Only the rate draw matters for the cap; check it without running sessions.
        for id in 0..100 {
            let mut rng = indexed_stream(cfg.master_seed, Stream::Dataset, id);
            let rate: f64 = rng.random_range(cfg.rate_min_bps.ln()..cfg.rate_max_bps.ln()).exp();
            assert!((rate.floor() as usize).min(cfg.n_cap) <= DEFAULT_N_CAP);
        }
        let abort = GenerateConfig {
            rate_max_bps: 1e4,
            sampler: ChannelSampler::Fixed(ChannelParams::new(0.0, 0.3).unwrap()),
            ..GenerateConfig::new(30, 3)
        };
        assert!(generate(&abort).unwrap().iter().all(|r| r.final_key_len == 0));
    }

    #[test]
    fn reproducible_and_parallel_agrees() {
        let cfg = small(24, 11);
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        assert_eq!(a, generate_parallel(&cfg, 3).unwrap());
        assert!(a.iter().all(|r| r.validate().is_ok()));
    }

    #[test]
    fn split_partitions() {
        let recs = generate(&small(10, 5)).unwrap();
        let (train, test) = split(&recs, 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let mut ids: Vec<u64> = train.iter().chain(&test).map(|r| r.attempt_id).collect();
        ids.sort();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
        assert_eq!(split(&recs, 0.8, 1).unwrap(), (train, test));
        assert!(split(&recs, 1.0, 1).is_err());
        assert!(split(&recs[..1], 0.5, 1).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let recs = generate(&small(40, 9)).unwrap();
        let text = to_csv(&recs);
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(from_csv(&text).unwrap(), recs);
        assert_eq!(to_csv(&[]).trim_end(), CSV_HEADER);
        assert!(from_csv(&to_csv(&[])).unwrap().is_empty());

        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[3].push_str(",7");
        match from_csv(&lines.join("\n")) {
            Err(Error::MalformedLine { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }
}
