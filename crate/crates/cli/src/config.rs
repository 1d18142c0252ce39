//! Optional JSON config file. Keys mirror the long flag names with `_` for `-`.
//! Precedence is flag, then file, then built-in default.

use serde::Deserialize;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    // simulate
    pub n: Option<usize>,
    pub theta: Option<f64>,
    pub q: Option<f64>,
    pub test_fraction: Option<f64>,
    pub threshold: Option<f64>,
    // reconcile
    pub passes: Option<u32>,
    pub security_margin: Option<f64>,
    pub entropy: Option<String>,
    // keyrate
    pub f_eff: Option<f64>,
    pub rep_rate: Option<f64>,
    // gen-data
    pub records: Option<usize>,
    pub rate_min: Option<f64>,
    pub rate_max: Option<f64>,
    pub q_min: Option<f64>,
    pub q_max: Option<f64>,
    pub cap: Option<usize>,
    // train
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub l1_lambda: Option<f64>,
    pub hidden: Option<Vec<usize>>,
    pub pretrain_epochs: Option<usize>,
    pub train_fraction: Option<f64>,
    // tune
    pub step: Option<f64>,
    pub iterations: Option<usize>,
    pub k_max: Option<f64>,
    pub init: Option<[f64; 3]>,
    // bench
    pub sizes: Option<Vec<usize>>,
    pub trials: Option<usize>,
}

pub fn parse_config(text: &str) -> Result<FileConfig, String> {
    let cfg: FileConfig = serde_json::from_str(text).map_err(|e| format!("config: {e}"))?;
    let finite = [
        cfg.theta, cfg.q, cfg.test_fraction, cfg.threshold, cfg.security_margin, cfg.f_eff, cfg.rep_rate,
        cfg.rate_min, cfg.rate_max, cfg.q_min, cfg.q_max, cfg.learning_rate, cfg.l1_lambda, cfg.train_fraction,
        cfg.step,
    ];
    if finite.iter().flatten().any(|v| !v.is_finite()) {
        return Err("config: numeric values must be finite".into());
    }
    if let Some(e) = &cfg.entropy {
        if e != "channel" && e != "conservative" {
            return Err(format!("config: entropy must be \"channel\" or \"conservative\", not {e:?}"));
        }
    }
    Ok(cfg)
}

/// Flag value, else file value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}
