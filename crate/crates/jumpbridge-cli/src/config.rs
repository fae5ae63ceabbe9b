//! Run configuration with a four-layer override chain: built-in defaults,
//! then a JSON config file, then `JUMPBRIDGE_*` environment variables, then
//! command-line flags. Every command serializes its fully resolved
//! configuration into `manifest.json` next to its outputs; a manifest is
//! itself accepted by `--config`, so any run is reproducible from its
//! manifest alone.

use std::path::Path;

use jumpbridge::calibrate::{Budgets, CalibrationGrid};
use jumpbridge::error::{Error, Result};
use jumpbridge::simulate::Scheme;
use jumpbridge::synthdata::{MertonConfig, OuConfig};
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "JUMPBRIDGE_";

/// Every knob of every subcommand, fully resolved. Fields irrelevant to a
/// command are carried through untouched (and recorded in the manifest).
/// `n = 0` means "use the command's own default batch size"; `substeps`,
/// `bandwidth` and `markov_order` always come from here.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub n: usize,
    pub scheme: String,
    pub substeps: usize,
    pub bandwidth: f64,
    pub markov_order: usize,
    pub workers: usize,
    /// input CSV (raw long layout for `ingest`, interchange otherwise)
    pub input: String,
    pub real: String,
    pub synth: String,
    pub metrics: String,
    /// reference dynamics for `generate`
    pub sigma: Vec<f64>,
    pub lambda0: f64,
    pub c: Vec<f64>,
    pub gamma: Vec<f64>,
    /// jump-count truncation of the increment density; 0 = automatic
    pub n_jumps_trunc: usize,
    pub merton: MertonConfig,
    pub ou: OuConfig,
    pub grid: CalibrationGrid,
    pub budgets: Budgets,
    /// `ingest` windowing
    pub window_len: usize,
    pub stride: usize,
    pub dt: f64,
    pub normalize: Vec<String>,
    /// learned metrics in `evaluate`
    pub with_scores: bool,
    pub score_runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            n: 0,
            scheme: "jump-adapted".into(),
            substeps: 100,
            bandwidth: 0.3,
            markov_order: 1,
            workers: 0,
            input: String::new(),
            real: String::new(),
            synth: String::new(),
            metrics: String::new(),
            sigma: vec![1.0],
            lambda0: 70.0,
            c: vec![0.0],
            gamma: vec![1.0],
            n_jumps_trunc: 0,
            merton: MertonConfig::default(),
            ou: OuConfig::default(),
            grid: CalibrationGrid {
                h_values: vec![0.3, 0.5, 1.0],
                k_values: vec![1, 2],
                sigma_values: vec![0.5, 1.0, 2.0, 3.0],
                gamma_values: vec![0.5, 0.8, 1.0, 1.5, 2.0, 3.0],
                lambda0_values: vec![1.0, 5.0, 10.0, 35.0, 70.0, 140.0],
                c: 0.0,
            },
            budgets: Budgets::default(),
            window_len: 24,
            stride: 1,
            dt: 1.0 / 252.0,
            normalize: vec!["base-one".into()],
            with_scores: false,
            score_runs: 10,
        }
    }
}

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
}

/// Load a config file: either a plain `RunConfig` JSON object or a manifest
/// from a previous run (its inner `config` is used).
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let inner = match &value {
        serde_json::Value::Object(map) if map.contains_key("command") && map.contains_key("config") => {
            map["config"].clone()
        }
        _ => value,
    };
    Ok(serde_json::from_value(inner)?)
}

pub fn write_manifest(out_dir: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    let manifest = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
    };
    let path = out_dir.join("manifest.json");
    std::fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

fn env_parse<T: std::str::FromStr>(name: &str) -> Result<Option<T>> {
    match std::env::var(format!("{ENV_PREFIX}{name}")) {
        Ok(raw) => raw
            .trim()
            .parse::<T>()
            .map(Some)
            .map_err(|_| Error::Config(format!("invalid {ENV_PREFIX}{name}='{raw}'"))),
        Err(_) => Ok(None),
    }
}

/// Apply `JUMPBRIDGE_*` overrides for the global scalar flags.
pub fn apply_env(cfg: &mut RunConfig) -> Result<()> {
    if let Some(v) = env_parse::<u64>("SEED")? {
        cfg.seed = v;
    }
    if let Some(v) = env_parse::<usize>("N")? {
        cfg.n = v;
    }
    if let Some(v) = env_parse::<String>("SCHEME")? {
        cfg.scheme = v;
    }
    if let Some(v) = env_parse::<usize>("SUBSTEPS")? {
        cfg.substeps = v;
    }
    if let Some(v) = env_parse::<f64>("BANDWIDTH")? {
        cfg.bandwidth = v;
    }
    if let Some(v) = env_parse::<usize>("MARKOV_ORDER")? {
        cfg.markov_order = v;
    }
    if let Some(v) = env_parse::<usize>("WORKERS")? {
        cfg.workers = v;
    }
    Ok(())
}

/// Map the scheme name onto the stepping scheme and the pure-jump switch:
/// `pure-jump` runs the jump-adapted stepper on a driftless reference.
pub fn parse_scheme(name: &str) -> Result<(Scheme, bool)> {
    match name {
        "euler" => Ok((Scheme::Euler, false)),
        "jump-adapted" | "jump_adapted" => Ok((Scheme::JumpAdapted, false)),
        "pure-jump" | "pure_jump" => Ok((Scheme::JumpAdapted, true)),
        other => Err(Error::Config(format!(
            "unknown scheme '{other}' (expected euler, jump-adapted or pure-jump)"
        ))),
    }
}
