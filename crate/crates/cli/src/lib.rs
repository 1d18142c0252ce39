//! `qkdkit` command-line front end.
//!
//! Exit codes: 0 success, 1 protocol abort, 2 verification failure, 3 usage error or
//! corrupt input, 4 I/O error. Every successful command prints one JSON summary line.

pub mod config;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use qkdkit::bench::{self, run_bench};
use qkdkit::dataset::{self, ChannelSampler, GenerateConfig};
use qkdkit::keyrate::evaluate_channel;
use qkdkit::pipeline::{post_process, EntropySource, PostProcessConfig};
use qkdkit::predictor::{
    self, init_model, predict_session, tune_parameters, AutoencoderModel, ModelSurrogate, TrainConfig, TuneConfig,
};
use qkdkit::protocol::{run_session, SessionConfig, SiftedSession, DEFAULT_QBER_THRESHOLD, DEFAULT_TEST_FRACTION};
use qkdkit::{ChannelParams, Error};

use config::{parse_config, pick, FileConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ABORT: i32 = 1;
pub const EXIT_VERIFY: i32 = 2;
pub const EXIT_USAGE: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Checkpoint epochs highlighted in the training trace.
pub const CHECKPOINT_EPOCHS: [usize; 5] = [1, 13, 50, 70, 100];

#[derive(Debug, Parser)]
#[command(name = "qkdkit", version, about = "BB84 simulation, Cascade reconciliation and key-length prediction")]
pub struct Cli {
    /// JSON file with default values for any flag
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for independent records (gen-data)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one BB84 session and write it as JSON
    Simulate(SimulateArgs),
    /// Cascade, verification and privacy amplification on a session file
    Reconcile(ReconcileArgs),
    /// Key-rate report for a channel
    Keyrate(KeyrateArgs),
    /// Time Cascade, inference and the cubic cost model
    Bench(BenchArgs),
    /// Train the predictor on a dataset CSV
    Train(TrainArgs),
    /// Predict QBER and key fraction for one session
    Predict(PredictArgs),
    /// Generate a dataset CSV from simulated sessions
    GenData(GenDataArgs),
    /// Gradient ascent on predicted key length
    Tune(TuneArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "session.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconcileArgs {
    #[arg(long)]
    pub session: PathBuf,
    #[arg(long)]
    pub passes: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub security_margin: Option<f64>,
    /// channel (f/p_pass at the session's channel) or conservative (1 - h(qber_est))
    #[arg(long)]
    pub entropy: Option<String>,
    /// Output directory
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct KeyrateArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub f_eff: Option<f64>,
    #[arg(long)]
    pub rep_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma-separated, strictly increasing
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Model for inference timing; a freshly initialized one is used if omitted
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "bench.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub l1_lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// log10 n_initial, attempt_index, qber_est
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub features: Vec<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub records: Option<usize>,
    #[arg(long)]
    pub rate_min: Option<f64>,
    #[arg(long)]
    pub rate_max: Option<f64>,
    #[arg(long)]
    pub q_min: Option<f64>,
    #[arg(long)]
    pub q_max: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub cap: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "dataset.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Model whose predicted key length is maximized
    #[arg(long, conflicts_with = "toy_quadratic")]
    pub model: Option<PathBuf>,
    /// Use g = -(p-1)^2 - (q-2)^2 - (s-3)^2 instead of a model
    #[arg(long)]
    pub toy_quadratic: bool,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub init: Option<Vec<f64>>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    pub k_max: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: EXIT_USAGE, message: message.into() }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Failure { code: EXIT_IO, message: format!("{}: {err}", path.display()) }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Io(_)) { EXIT_IO } else { EXIT_USAGE };
        Failure { code, message: e.to_string() }
    }
}

/// Summary line plus exit code for a command that ran to completion.
pub struct Outcome {
    pub summary: Value,
    pub code: i32,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Outcome { summary, code: EXIT_OK }
    }
}

type CmdResult = Result<Outcome, Failure>;

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::io(path, e))
}

fn load_model(path: &Path) -> Result<AutoencoderModel, Failure> {
    Ok(AutoencoderModel::from_json(&read_text(path)?)?)
}

fn channel(theta: f64, q: f64) -> Result<ChannelParams, Failure> {
    Ok(ChannelParams::new(theta, q)?)
}

fn cmd_simulate(a: &SimulateArgs, file: &FileConfig) -> CmdResult {
    let n = a.n.or(file.n).ok_or_else(|| Failure::usage("simulate: --n is required"))?;
    let params = channel(pick(a.theta, file.theta, 0.0), pick(a.q, file.q, 0.0))?;
    let config = SessionConfig {
        n_raw: n,
        params,
        test_fraction: pick(a.test_fraction, file.test_fraction, DEFAULT_TEST_FRACTION),
        qber_threshold: pick(a.threshold, file.threshold, DEFAULT_QBER_THRESHOLD),
        seed: pick(a.seed, file.seed, 0),
    };
    let session = run_session(&config)?;
    write_bytes(&a.out, session.to_json().as_bytes())?;
    Ok(Outcome {
        summary: json!({
            "command": "simulate",
            "out": a.out,
            "n_raw": session.n_raw,
            "n_sifted": session.n_sifted,
            "test_bits": session.test_bits,
            "qber_est": session.qber_est,
            "aborted": session.aborted,
        }),
        code: if session.aborted { EXIT_ABORT } else { EXIT_OK },
    })
}

fn cmd_reconcile(a: &ReconcileArgs, file: &FileConfig) -> CmdResult {
    let session = SiftedSession::from_json(&read_text(&a.session)?)?;
    if session.aborted {
        return Err(Failure { code: EXIT_ABORT, message: "session was aborted at parameter estimation".into() });
    }
    let mut cfg = PostProcessConfig::new(pick(a.seed, file.seed, 0));
    cfg.cascade.n_passes = pick(a.passes, file.passes, cfg.cascade.n_passes);
    cfg.security_margin = pick(a.security_margin, file.security_margin, cfg.security_margin);
    cfg.entropy = match a.entropy.clone().or(file.entropy.clone()).as_deref() {
        None | Some("channel") => EntropySource::Channel,
        Some("conservative") => EntropySource::Conservative,
        Some(other) => return Err(Failure::usage(format!("unknown entropy source {other:?}"))),
    };
    let out = post_process(&session, &cfg)?;
    fs::create_dir_all(&a.out).map_err(|e| Failure::io(&a.out, e))?;
    let t = &out.reconciliation.transcript;
    write_bytes(&a.out.join("transcript.ndjson"), t.to_ndjson().as_bytes())?;
    let result = json!({
        "n": session.n_sifted,
        "qber_est": session.qber_est,
        "leak_ab_bits": t.leak_ab_bits,
        "leak_ba_bits": t.leak_ba_bits,
        "message_count": t.message_count,
        "corrections": t.corrections.len(),
        "final_mismatch": t.final_mismatch,
        "measured_f": out.reconciliation.measured_f,
        "passes": t.passes,
        "verified": out.verified,
        "final_key_len": out.final_len(),
    });
    let mut result_text = serde_json::to_string_pretty(&result).expect("json");
    result_text.push('\n');
    write_bytes(&a.out.join("reconcile.json"), result_text.as_bytes())?;
    let mut sidecar = serde_json::to_string_pretty(&out.sidecar).expect("json");
    sidecar.push('\n');
    write_bytes(&a.out.join("final_key.json"), sidecar.as_bytes())?;
    if let Some(key) = &out.final_key {
        write_bytes(&a.out.join("final_key.bin"), &key.to_packed())?;
    }
    let mut summary = result;
    summary["command"] = json!("reconcile");
    summary["out"] = json!(a.out);
    summary.as_object_mut().unwrap().remove("passes");
    Ok(Outcome { summary, code: if out.verified { EXIT_OK } else { EXIT_VERIFY } })
}

fn cmd_keyrate(a: &KeyrateArgs, file: &FileConfig) -> CmdResult {
    let params = channel(pick(a.theta, file.theta, 0.0), pick(a.q, file.q, 0.0))?;
    let report = evaluate_channel(params, pick(a.f_eff, file.f_eff, 1.0), pick(a.rep_rate, file.rep_rate, 1.0))?;
    Ok(Outcome::ok(json!({
        "command": "keyrate",
        "theta": params.theta,
        "q": params.q,
        "e": report.qber,
        "h_e": report.binary_entropy,
        "f": report.entropy_per_signal,
        "f_prime": report.entropy_per_signal_prime,
        "gap": report.gap,
        "p_pass": report.p_pass,
        "delta_leak": report.delta_leak,
        "rate": report.rate,
        "rate_per_sifted": report.rate_per_sifted,
        "rate_prime": report.rate_prime,
        "repetition_rate": report.repetition_rate,
        "rate_bps": report.rate_bps,
        "gap_bps": report.gap_bps,
    })))
}

fn cmd_bench(a: &BenchArgs, file: &FileConfig) -> CmdResult {
    let sizes = a.sizes.clone().or(file.sizes.clone()).unwrap_or_else(|| vec![10_000, 100_000, 1_000_000]);
    bench::check_sizes(&sizes).map_err(|e| Failure::usage(e.to_string()))?;
    let seed = pick(a.seed, file.seed, 0);
    let model = match &a.model {
        Some(path) => load_model(path)?,
        None => init_model(&[3, 32, 8, 32, 2], seed)?,
    };
    let report = run_bench(&sizes, pick(a.trials, file.trials, 3), &model, seed)?;
    write_bytes(&a.out, bench::to_csv(&report.rows).as_bytes())?;
    let last = report.rows.last().expect("non-empty sizes");
    Ok(Outcome::ok(json!({
        "command": "bench",
        "out": a.out,
        "slopes": report.slopes,
        "cost_model": report.cost_model,
        "traditional_over_inference": last.traditional_model_seconds / last.inference_seconds,
    })))
}

fn cmd_train(a: &TrainArgs, file: &FileConfig, err: &mut dyn Write) -> CmdResult {
    let records = dataset::load(&a.data)?;
    if records.len() < 2 {
        return Err(Failure::usage("train: dataset needs at least 2 records"));
    }
    let seed = pick(a.seed, file.seed, 0);
    let (train_set, test_set) = dataset::split(&records, pick(a.train_fraction, file.train_fraction, 0.8), seed)?;
    let d = TrainConfig::default();
    let config = TrainConfig {
        learning_rate: pick(a.learning_rate, file.learning_rate, d.learning_rate),
        epochs: pick(a.epochs, file.epochs, d.epochs),
        batch_size: pick(a.batch_size, file.batch_size, d.batch_size),
        l1_lambda: pick(a.l1_lambda, file.l1_lambda, d.l1_lambda),
        seed,
        hidden: pick(a.hidden.clone(), file.hidden.clone(), d.hidden),
        pretrain_epochs: pick(a.pretrain_epochs, file.pretrain_epochs, 0),
    };
    let samples: Vec<_> = train_set.iter().map(|r| r.sample()).collect();
    let (model, trace) = predictor::train(&samples, &config)?;
    for r in &trace {
        let mark = if CHECKPOINT_EPOCHS.contains(&r.epoch) { " *" } else { "" };
        let _ = writeln!(err, "epoch {:>4}  loss {:.6}{mark}", r.epoch, r.loss);
    }
    write_bytes(&a.out, model.to_json().as_bytes())?;
    let tests: Vec<_> = test_set.iter().map(|r| r.sample()).collect();
    let eval = predictor::evaluate(&model, &tests, 0.05)?;
    let checkpoints: serde_json::Map<String, Value> = CHECKPOINT_EPOCHS
        .iter()
        .filter_map(|&e| trace.get(e - 1).map(|r| (e.to_string(), json!(r.loss))))
        .collect();
    Ok(Outcome::ok(json!({
        "command": "train",
        "out": a.out,
        "train_records": train_set.len(),
        "test_records": test_set.len(),
        "final_loss": trace.last().map(|r| r.loss),
        "checkpoints": checkpoints,
        "test_accuracy_qber": eval.accuracy[0],
        "test_accuracy_key_len": eval.accuracy.get(1),
        "test_mae": eval.mae,
        "test_mse": eval.mse,
    })))
}

fn cmd_predict(a: &PredictArgs) -> CmdResult {
    if a.features.len() != 3 {
        return Err(Failure::usage("--features takes three values: log10 n_initial, attempt_index, qber_est"));
    }
    let model = load_model(&a.model)?;
    let (qber, frac) = predict_session(&model, &a.features)?;
    let n_initial = 10f64.powf(a.features[0]).round();
    Ok(Outcome::ok(json!({
        "command": "predict",
        "qber_pred": qber,
        "key_len_fraction_pred": frac,
        "key_len_pred": (frac * n_initial).floor(),
    })))
}

fn cmd_gendata(a: &GenDataArgs, file: &FileConfig, jobs: usize) -> CmdResult {
    let d = GenerateConfig::new(dataset::DEFAULT_RECORDS, 0);
    let config = GenerateConfig {
        records: pick(a.records, file.records, d.records),
        rate_min_bps: pick(a.rate_min, file.rate_min, d.rate_min_bps),
        rate_max_bps: pick(a.rate_max, file.rate_max, d.rate_max_bps),
        sampler: ChannelSampler::Uniform {
            q_min: pick(a.q_min, file.q_min, 0.0),
            q_max: pick(a.q_max, file.q_max, 0.16),
            theta: pick(a.theta, file.theta, 0.0),
        },
        master_seed: pick(a.seed, file.seed, 0),
        n_cap: pick(a.cap, file.cap, d.n_cap),
        ..d
    };
    let records = dataset::generate_parallel(&config, jobs)?;
    dataset::save(&records, &a.out)?;
    Ok(Outcome::ok(json!({
        "command": "gen-data",
        "out": a.out,
        "records": records.len(),
        "zero_key_records": records.iter().filter(|r| r.final_key_len == 0).count(),
        "master_seed": config.master_seed,
    })))
}

fn quadratic(x: [f64; 3]) -> f64 {
    -(x[0] - 1.0).powi(2) - (x[1] - 2.0).powi(2) - (x[2] - 3.0).powi(2)
}

fn cmd_tune(a: &TuneArgs, file: &FileConfig) -> CmdResult {
    let init = match a.init.as_deref() {
        Some([p, q, s]) => [*p, *q, *s],
        Some(_) => return Err(Failure::usage("--init takes three values")),
        None => file.init.unwrap_or([0.0, 0.0, 0.0]),
    };
    let config = TuneConfig {
        step: pick(a.step, file.step, 0.1),
        iterations: pick(a.iterations, file.iterations, 500),
        k_max: pick(a.k_max, file.k_max, f64::INFINITY),
    };
    let result = match (&a.model, a.toy_quadratic) {
        (_, true) => tune_parameters(&quadratic, init, &config)?,
        (Some(path), false) => {
            let model = load_model(path)?;
            tune_parameters(&ModelSurrogate(&model), init, &config)?
        }
        (None, false) => return Err(Failure::usage("tune: pass --model or --toy-quadratic")),
    };
    Ok(Outcome::ok(json!({
        "command": "tune",
        "params": result.params,
        "value": result.value,
        "iterations": result.trace.len(),
    })))
}

fn dispatch(cli: &Cli, err: &mut dyn Write) -> CmdResult {
    let file = match &cli.config {
        Some(path) => parse_config(&read_text(path)?).map_err(Failure::usage)?,
        None => FileConfig::default(),
    };
    let jobs = pick(cli.jobs, file.jobs, 1).max(1);
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, &file),
        Command::Reconcile(a) => cmd_reconcile(a, &file),
        Command::Keyrate(a) => cmd_keyrate(a, &file),
        Command::Bench(a) => cmd_bench(a, &file),
        Command::Train(a) => cmd_train(a, &file, err),
        Command::Predict(a) => cmd_predict(a),
        Command::GenData(a) => cmd_gendata(a, &file, jobs),
        Command::Tune(a) => cmd_tune(a, &file),
    }
}

/// Parses `args` (including the program name) and runs the command. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(&cli, err) {
        Ok(o) => {
            let _ = writeln!(out, "{}", o.summary);
            o.code
        }
        Err(f) => {
            let _ = writeln!(err, "{}", json!({ "error": f.message, "exit_code": f.code }));
            f.code
        }
    }
}
