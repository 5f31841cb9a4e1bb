//! `modeseek` command line.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 configuration error,
//! 3 divergence during `train`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::config::{ConfigError, TrainConfig};
use crate::data::{self, Batch, Point};
use crate::metrics::{self, MetricsReport};
use crate::rng::{Purpose, Stream};
use crate::svg;
use crate::trainer::{self, TrainError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "modeseek", version, about = "Mode-seeking conditional GANs on Gaussian mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
struct Common {
    /// Configuration file (`section.key = value` lines)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set loss.lambda_ms=0.5`
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed (train.seed)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write real samples as CSV
    GenData {
        #[command(flatten)]
        common: Common,
        /// Only this category
        #[arg(long)]
        category: Option<usize>,
        /// Output file (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model, writing a checkpoint and a JSON-lines log
    Train {
        #[command(flatten)]
        common: Common,
        /// Generator updates (train.steps); with --resume, additional steps
        #[arg(long)]
        steps: Option<u64>,
        /// Output directory
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Continue from a checkpoint
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Compare generated samples against training samples
    Eval {
        #[command(flatten)]
        common: Common,
        /// CSV of training samples
        train: PathBuf,
        /// CSV of generated samples
        generated: PathBuf,
        #[arg(long)]
        category: Option<usize>,
        #[arg(long = "k-bins")]
        k_bins: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Output file (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate once per (lambda, seed)
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated mode-seeking weights
        #[arg(long, value_delimiter = ',', required = true)]
        lambdas: Vec<f64>,
        /// Number of seeds, counting up from the master seed
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate along a straight line between two latent codes
    Interpolate {
        /// Checkpoint file
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        category: usize,
        /// Number of points including both endpoints
        #[arg(long, default_value_t = 11)]
        steps: usize,
        /// Seed for drawing the two endpoint codes
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SVG scatter of real (gray) and generated (colored) samples
    Render {
        #[command(flatten)]
        common: Common,
        real: PathBuf,
        generated: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Config(String),
    Diverged(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(c) => CliError::Config(c.to_string()),
            TrainError::Diverged(_) => CliError::Diverged(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Config(m)) => {
            eprintln!("configuration error: {m}");
            EXIT_CONFIG
        }
        Err(CliError::Diverged(m)) => {
            eprintln!("{m}");
            EXIT_DIVERGED
        }
    }
}

fn resolve_config(common: &Common) -> Result<TrainConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            TrainConfig::from_text(&text)?
        }
        None => TrainConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn validated(cfg: TrainConfig) -> Result<TrainConfig, CliError> {
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

/// `# `-prefixed copy of the resolved configuration.
fn comment_header(cfg: &TrainConfig) -> String {
    let mut out = String::new();
    for line in cfg.to_text().lines() {
        writeln!(out, "# {line}").unwrap();
    }
    out
}

fn read_batch(path: &Path) -> Result<Batch, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Batch::from_csv(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenData {
            common,
            category,
            out,
        } => {
            let cfg = validated(resolve_config(&common)?)?;
            let mixture = cfg.mixture().map_err(ConfigError::from)?;
            let cats: Vec<usize> = match category {
                Some(c) if c >= mixture.n_categories() => {
                    return Err(CliError::Usage(format!("category {c} out of range")))
                }
                Some(c) => vec![c],
                None => (0..mixture.n_categories()).collect(),
            };
            let mut batch = Batch::default();
            for c in cats {
                let seed = Stream::from_parts(&[cfg.seed, Purpose::RealData.tag(), c as u64]).next_u64();
                let b = data::sample_real(&mixture, c, cfg.eval.n_samples, seed)
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                batch.conditions.extend(b.conditions);
                batch.samples.extend(b.samples);
            }
            emit(&out, &(comment_header(&cfg) + &batch.to_csv()))
        }
        Command::Train {
            common,
            steps,
            out,
            resume,
        } => {
            let (ckpt, log, cfg, result) = match resume {
                Some(path) => {
                    let ck = Checkpoint::load(&path).map_err(|e| CliError::Usage(e.to_string()))?;
                    let target = ck.state.step + steps.unwrap_or(ck.config.steps);
                    let mut t = trainer::Trainer::from_checkpoint(ck)?;
                    let r = t.run_until(target);
                    (t.checkpoint(), t.log.clone(), t.config.clone(), r)
                }
                None => {
                    let mut cfg = resolve_config(&common)?;
                    if let Some(s) = steps {
                        cfg.steps = s;
                    }
                    let cfg = validated(cfg)?;
                    let mut t = trainer::Trainer::new(cfg.clone())?;
                    let r = t.run_until(cfg.steps);
                    (t.checkpoint(), t.log.clone(), t.config.clone(), r)
                }
            };
            fs::create_dir_all(&out)?;
            let (ckpt, log) = match &result {
                Err(TrainError::Diverged(d)) => (d.checkpoint.clone(), d.log.clone()),
                _ => (ckpt, log),
            };
            ckpt.save(&out.join("checkpoint.txt"))
                .map_err(|e| CliError::Usage(e.to_string()))?;
            fs::write(out.join("train_log.jsonl"), log.to_jsonl(&cfg))?;
            fs::write(out.join("timing.jsonl"), log.timing_jsonl())?;
            result.map_err(CliError::from)
        }
        Command::Eval {
            common,
            train,
            generated,
            category,
            k_bins,
            alpha,
            out,
        } => {
            let mut cfg = resolve_config(&common)?;
            if let Some(k) = k_bins {
                cfg.eval.k_bins = Some(k);
            }
            if let Some(a) = alpha {
                cfg.eval.alpha = a;
            }
            if !(cfg.eval.alpha > 0.0 && cfg.eval.alpha < 1.0) {
                return Err(CliError::Config(format!("alpha must lie in (0, 1), got {}", cfg.eval.alpha)));
            }
            let mixture = cfg.mixture().map_err(ConfigError::from)?;
            let mut real = read_batch(&train)?;
            let mut gen = read_batch(&generated)?;
            let centers: Vec<Point> = match category {
                Some(c) => {
                    real = real.filter_category(c);
                    gen = gen.filter_category(c);
                    mixture
                        .centers_of(c)
                        .map_err(|e| CliError::Usage(e.to_string()))?
                }
                None => mixture.centers.clone(),
            };
            let report: MetricsReport = metrics::evaluate(
                &real.samples,
                &gen.samples,
                &centers,
                mixture.sigma,
                &cfg.eval,
                cfg.seed,
            )
            .map_err(|e| CliError::Usage(e.to_string()))?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            emit(&out, &(json + "\n"))
        }
        Command::Sweep {
            common,
            lambdas,
            seeds,
            steps,
            out,
        } => {
            let mut cfg = resolve_config(&common)?;
            if let Some(s) = steps {
                cfg.steps = s;
            }
            let cfg = validated(cfg)?;
            if seeds == 0 {
                return Err(CliError::Usage("--seeds must be at least 1".into()));
            }
            let seed_list: Vec<u64> = (0..seeds).map(|i| cfg.seed + i).collect();
            let rows = trainer::sweep(&cfg, &lambdas, &seed_list).map_err(|e| match e {
                TrainError::Invalid(m) => CliError::Usage(m),
                other => other.into(),
            })?;
            emit(&out, &(comment_header(&cfg) + &trainer::sweep_csv(&rows)))
        }
        Command::Interpolate {
            checkpoint,
            category,
            steps,
            seed,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint).map_err(|e| CliError::Usage(e.to_string()))?;
            let model = &ck.state.model;
            let mut rng = Stream::new(seed, Purpose::Custom(0xA11));
            let z_a = rng.normals(model.latent_dim);
            let z_b = rng.normals(model.latent_dim);
            let path = trainer::interpolate(model, category, &z_a, &z_b, steps)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let batch = Batch {
                conditions: vec![category; path.len()],
                samples: path,
            };
            let mut text = comment_header(&ck.config);
            writeln!(text, "# checkpoint.step = {}", ck.state.step).unwrap();
            writeln!(text, "# interpolate.seed = {seed}").unwrap();
            emit(&out, &(text + &batch.to_csv()))
        }
        Command::Render {
            common,
            real,
            generated,
            out,
        } => {
            let cfg = validated(resolve_config(&common)?)?;
            let r = read_batch(&real)?;
            let g = read_batch(&generated)?;
            let gen: Vec<(usize, Point)> = g.conditions.iter().copied().zip(g.samples).collect();
            let svg = svg::scatter(&r.samples, &gen, &cfg.to_text());
            emit(&out, &svg)
        }
    }
}
