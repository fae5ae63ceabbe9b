//! Command-line pipeline around the jump-diffusion bridge generator:
//! synthetic data generation, ingestion, calibration, generation,
//! evaluation, and report rendering. Configuration resolves as
//! defaults < config file < JUMPBRIDGE_* environment < flags, every command
//! writes a manifest sufficient to reproduce its outputs byte for byte, and
//! exit codes distinguish usage (1), data (2) and numerical (3) failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jumpbridge::error::{Error, Result};

use crate::config::{apply_env, load_config, parse_scheme, RunConfig};

#[derive(Parser)]
#[command(
    name = "jumpbridge",
    version,
    about = "Jump-diffusion bridge generator for financial time series"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// JSON config file (a manifest from a previous run also works)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// master seed for all derived random streams
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// batch size (series to simulate or generate)
    #[arg(long, global = true)]
    n: Option<usize>,
    /// stepping scheme: euler, jump-adapted or pure-jump
    #[arg(long, global = true)]
    scheme: Option<String>,
    /// Euler substeps per grid interval
    #[arg(long, global = true)]
    substeps: Option<usize>,
    /// kernel bandwidth h
    #[arg(long, global = true)]
    bandwidth: Option<f64>,
    /// conditioning window length k (grid dates of memory)
    #[arg(long, global = true)]
    markov_order: Option<usize>,
    /// output directory (default "out")
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// worker threads (0 = all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a Merton-style jump-diffusion training panel
    SimulateMerton(CommonArgs),
    /// Simulate an Ornstein-Uhlenbeck training panel
    SimulateOu(CommonArgs),
    /// Cut a raw long CSV into normalized training windows
    Ingest {
        #[command(flatten)]
        common: CommonArgs,
        /// raw CSV (rows = dates, columns = features)
        #[arg(long)]
        input: Option<PathBuf>,
        /// window length in grid intervals
        #[arg(long)]
        window_len: Option<usize>,
        /// rows to advance between windows
        #[arg(long)]
        stride: Option<usize>,
        /// grid spacing in years
        #[arg(long)]
        dt: Option<f64>,
        /// normalization layers, in order (base-one, standard, increments-rescale)
        #[arg(long, value_delimiter = ',')]
        normalize: Option<Vec<String>>,
    },
    /// Calibrate hyperparameters on a training panel
    Calibrate {
        #[command(flatten)]
        common: CommonArgs,
        /// training panel (interchange CSV)
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Generate synthetic trajectories conditioned on a training panel
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        /// training panel (interchange CSV)
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Compare a synthetic panel against a real one
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// real panel (interchange CSV)
        #[arg(long)]
        real: Option<PathBuf>,
        /// synthetic panel (interchange CSV)
        #[arg(long)]
        synth: Option<PathBuf>,
        /// also train the discriminative/predictive score networks
        #[arg(long)]
        scores: bool,
        /// scoring repetitions
        #[arg(long)]
        score_runs: Option<usize>,
    },
    /// Render SVG plots and CSV tables from an evaluation
    Report {
        #[command(flatten)]
        common: CommonArgs,
        /// metrics.json from `evaluate`
        #[arg(long)]
        metrics: Option<PathBuf>,
        /// real panel, for ECDF/QV/fan/correlation plots
        #[arg(long)]
        real: Option<PathBuf>,
        /// synthetic panel, for ECDF/QV/fan/correlation plots
        #[arg(long)]
        synth: Option<PathBuf>,
    },
}

fn path_string(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.to_string_lossy().into_owned())
}

/// defaults < config file < environment < flags
fn resolve(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    apply_env(&mut cfg)?;
    if let Some(v) = common.seed {
        cfg.seed = v;
    }
    if let Some(v) = common.n {
        cfg.n = v;
    }
    if let Some(v) = &common.scheme {
        cfg.scheme = v.clone();
    }
    if let Some(v) = common.substeps {
        cfg.substeps = v;
    }
    if let Some(v) = common.bandwidth {
        cfg.bandwidth = v;
    }
    if let Some(v) = common.markov_order {
        cfg.markov_order = v;
    }
    if let Some(v) = common.workers {
        cfg.workers = v;
    }
    parse_scheme(&cfg.scheme)?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let (common, apply): (CommonArgs, Box<dyn FnOnce(&mut RunConfig)>) = match &cli.cmd {
        Cmd::SimulateMerton(c) | Cmd::SimulateOu(c) => (c.clone(), Box::new(|_| {})),
        Cmd::Ingest {
            common,
            input,
            window_len,
            stride,
            dt,
            normalize,
        } => {
            let (input, window_len, stride, dt, normalize) = (
                path_string(input),
                *window_len,
                *stride,
                *dt,
                normalize.clone(),
            );
            (
                common.clone(),
                Box::new(move |cfg: &mut RunConfig| {
                    if let Some(v) = input {
                        cfg.input = v;
                    }
                    if let Some(v) = window_len {
                        cfg.window_len = v;
                    }
                    if let Some(v) = stride {
                        cfg.stride = v;
                    }
                    if let Some(v) = dt {
                        cfg.dt = v;
                    }
                    if let Some(v) = normalize {
                        cfg.normalize = v;
                    }
                }),
            )
        }
        Cmd::Calibrate { common, input } | Cmd::Generate { common, input } => {
            let input = path_string(input);
            (
                common.clone(),
                Box::new(move |cfg: &mut RunConfig| {
                    if let Some(v) = input {
                        cfg.input = v;
                    }
                }),
            )
        }
        Cmd::Evaluate {
            common,
            real,
            synth,
            scores,
            score_runs,
        } => {
            let (real, synth, scores, score_runs) =
                (path_string(real), path_string(synth), *scores, *score_runs);
            (
                common.clone(),
                Box::new(move |cfg: &mut RunConfig| {
                    if let Some(v) = real {
                        cfg.real = v;
                    }
                    if let Some(v) = synth {
                        cfg.synth = v;
                    }
                    if scores {
                        cfg.with_scores = true;
                    }
                    if let Some(v) = score_runs {
                        cfg.score_runs = v;
                    }
                }),
            )
        }
        Cmd::Report {
            common,
            metrics,
            real,
            synth,
        } => {
            let (metrics, real, synth) = (path_string(metrics), path_string(real), path_string(synth));
            (
                common.clone(),
                Box::new(move |cfg: &mut RunConfig| {
                    if let Some(v) = metrics {
                        cfg.metrics = v;
                    }
                    if let Some(v) = real {
                        cfg.real = v;
                    }
                    if let Some(v) = synth {
                        cfg.synth = v;
                    }
                }),
            )
        }
    };
    let mut cfg = resolve(&common)?;
    apply(&mut cfg);
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out)?;
    match cli.cmd {
        Cmd::SimulateMerton(_) => commands::simulate_merton(&cfg, &out),
        Cmd::SimulateOu(_) => commands::simulate_ou(&cfg, &out),
        Cmd::Ingest { .. } => commands::ingest(&cfg, &out),
        Cmd::Calibrate { .. } => commands::calibrate(&cfg, &out),
        Cmd::Generate { .. } => commands::generate(&cfg, &out),
        Cmd::Evaluate { .. } => commands::evaluate(&cfg, &out),
        Cmd::Report { .. } => commands::report_cmd(&cfg, &out),
    }
}

fn error_kind(code: i32) -> &'static str {
    match code {
        1 => "usage",
        2 => "data",
        _ => "numerical",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error exit=1 kind=usage msg={first:?}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = e.exit_code();
            eprintln!("error exit={code} kind={} msg={:?}", error_kind(code), e.to_string());
            ExitCode::from(code as u8)
        }
    }
}
