//! Experiment configuration.
//!
//! The textual form is one `section.key = value` assignment per line; `#`
//! starts a comment. Unknown keys are rejected. Every key has a default, and
//! [`TrainConfig::to_text`] writes the fully resolved set in a fixed order so
//! the output can be embedded in artifacts and parsed back.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `data.kind` | `grid` | `grid` or `ring` |
//! | `data.rows`, `data.cols` | `5`, `5` | grid shape; one category per row |
//! | `data.spacing` | `2` | grid spacing |
//! | `data.modes`, `data.radius`, `data.categories` | `8`, `2`, `2` | ring layout |
//! | `data.sigma` | `0.05` grid, `0.02` ring | mode standard deviation |
//! | `latent.dim` | `2` | latent dimension |
//! | `model.g_hidden`, `model.d_hidden` | `128,128` | hidden widths |
//! | `model.slope` | `0.2` | leaky ReLU slope |
//! | `loss.lambda_ms` | `1` | mode-seeking weight |
//! | `loss.ms_form` | `inverse-ratio` | or `direct-ratio` |
//! | `loss.distance` | `raw-l1` | or `discriminator-feature` |
//! | `loss.eps_ms` | `1e-5` | ratio regularizer |
//! | `loss.g_adv` | `non-saturating` | or `minimax` |
//! | `train.lr`, `train.beta1`, `train.beta2` | `0.0002`, `0.5`, `0.999` | Adam |
//! | `train.batch` | `32` | batch size |
//! | `train.steps` | `20000` | generator updates |
//! | `train.d_steps` | `1` | discriminator updates per generator update |
//! | `train.seed` | `0` | master seed |
//! | `train.eval_every` | `5000` | evaluation interval (0 = final only) |
//! | `eval.samples` | `2000` | samples per category for evaluation |
//! | `eval.k_bins` | `auto` | NDB bins (`auto` = about samples / 20) |
//! | `eval.alpha` | `0.05` | NDB significance level |
//! | `eval.pairs` | `1000` | random pairs for diversity |
//! | `eval.t_sigma` | `3` | high-quality radius in units of sigma |

use std::fmt::Write as _;

use thiserror::Error;

use crate::data::{self, DataError, LatentSpec, MixtureSpec};
use crate::gan::{LossConfig, ModelConfig};
use crate::metrics::EvalConfig;
use crate::nn::AdamConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `section.key = value`")]
    Syntax { line: usize },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataConfig {
    Grid {
        rows: usize,
        cols: usize,
        spacing: f64,
        sigma: f64,
    },
    Ring {
        modes: usize,
        radius: f64,
        categories: usize,
        sigma: f64,
    },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Grid {
            rows: 5,
            cols: 5,
            spacing: 2.0,
            sigma: 0.05,
        }
    }
}

impl DataConfig {
    pub fn default_ring() -> Self {
        DataConfig::Ring {
            modes: 8,
            radius: 2.0,
            categories: 2,
            sigma: 0.02,
        }
    }

    pub fn mixture(&self) -> Result<MixtureSpec, DataError> {
        match *self {
            DataConfig::Grid {
                rows,
                cols,
                spacing,
                sigma,
            } => data::make_grid(rows, cols, spacing, sigma),
            DataConfig::Ring {
                modes,
                radius,
                categories,
                sigma,
            } => data::make_ring(modes, radius, sigma, categories),
        }
    }
}

/// Everything one training run depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub data: DataConfig,
    pub latent: LatentSpec,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub batch: usize,
    pub steps: u64,
    pub d_steps: usize,
    pub seed: u64,
    pub eval_every: u64,
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            data: DataConfig::default(),
            latent: LatentSpec::default(),
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            batch: 32,
            steps: 20_000,
            d_steps: 1,
            seed: 0,
            eval_every: 5000,
            eval: EvalConfig::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_widths(key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    value
        .split(',')
        .map(|w| parse_num::<usize>(key, w.trim()))
        .collect()
}

fn join_widths(w: &[usize]) -> String {
    w.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    /// Parses configuration text on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = TrainConfig::default();
        let mut sigma: Option<f64> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (key, value) = (key.trim(), value.trim());
            if !key.contains('.') || value.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1 });
            }
            if key == "data.sigma" {
                sigma = Some(parse_num(key, value)?);
                continue;
            }
            cfg.set(key, value)?;
        }
        if let Some(s) = sigma {
            cfg.set("data.sigma", &s.to_string())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Assigns one key. `data.kind` resets the dataset fields to that kind's defaults.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: String| ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
            reason,
        };
        match key {
            "data.kind" => {
                self.data = match value {
                    "grid" => DataConfig::default(),
                    "ring" => DataConfig::default_ring(),
                    _ => return Err(bad("expected `grid` or `ring`".into())),
                }
            }
            "data.rows" | "data.cols" | "data.spacing" => match &mut self.data {
                DataConfig::Grid {
                    rows,
                    cols,
                    spacing,
                    ..
                } => match key {
                    "data.rows" => *rows = parse_num(key, value)?,
                    "data.cols" => *cols = parse_num(key, value)?,
                    _ => *spacing = parse_num(key, value)?,
                },
                DataConfig::Ring { .. } => return Err(bad("only valid for data.kind = grid".into())),
            },
            "data.modes" | "data.radius" | "data.categories" => match &mut self.data {
                DataConfig::Ring {
                    modes,
                    radius,
                    categories,
                    ..
                } => match key {
                    "data.modes" => *modes = parse_num(key, value)?,
                    "data.radius" => *radius = parse_num(key, value)?,
                    _ => *categories = parse_num(key, value)?,
                },
                DataConfig::Grid { .. } => return Err(bad("only valid for data.kind = ring".into())),
            },
            "data.sigma" => {
                let s = parse_num(key, value)?;
                match &mut self.data {
                    DataConfig::Grid { sigma, .. } | DataConfig::Ring { sigma, .. } => *sigma = s,
                }
            }
            "latent.dim" => self.latent.dim = parse_num(key, value)?,
            "model.g_hidden" => self.model.g_hidden = parse_widths(key, value)?,
            "model.d_hidden" => self.model.d_hidden = parse_widths(key, value)?,
            "model.slope" => self.model.slope = parse_num(key, value)?,
            "loss.lambda_ms" => self.loss.lambda_ms = parse_num(key, value)?,
            "loss.ms_form" => self.loss.ms_form = value.parse().map_err(bad)?,
            "loss.distance" => self.loss.distance_mode = value.parse().map_err(bad)?,
            "loss.eps_ms" => self.loss.eps_ms = parse_num(key, value)?,
            "loss.g_adv" => self.loss.g_adv_form = value.parse().map_err(bad)?,
            "train.lr" => self.adam.lr = parse_num(key, value)?,
            "train.beta1" => self.adam.beta1 = parse_num(key, value)?,
            "train.beta2" => self.adam.beta2 = parse_num(key, value)?,
            "train.batch" => self.batch = parse_num(key, value)?,
            "train.steps" => self.steps = parse_num(key, value)?,
            "train.d_steps" => self.d_steps = parse_num(key, value)?,
            "train.seed" => self.seed = parse_num(key, value)?,
            "train.eval_every" => self.eval_every = parse_num(key, value)?,
            "eval.samples" => self.eval.n_samples = parse_num(key, value)?,
            "eval.k_bins" => {
                self.eval.k_bins = match value {
                    "auto" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "eval.alpha" => self.eval.alpha = parse_num(key, value)?,
            "eval.pairs" => self.eval.n_pairs = parse_num(key, value)?,
            "eval.t_sigma" => self.eval.t_sigma = parse_num(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.into()));
        self.data.mixture()?;
        if self.latent.dim == 0 {
            return invalid("latent.dim must be >= 1");
        }
        if self.model.g_hidden.is_empty()
            || self.model.d_hidden.is_empty()
            || self.model.g_hidden.contains(&0)
            || self.model.d_hidden.contains(&0)
        {
            return invalid("hidden widths must be a non-empty list of positive integers");
        }
        self.loss
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.steps == 0 {
            return invalid("train.steps must be >= 1");
        }
        if self.batch < 2 {
            return invalid("train.batch must be >= 2");
        }
        if self.d_steps == 0 {
            return invalid("train.d_steps must be >= 1");
        }
        if !(self.adam.lr > 0.0) || !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return invalid("Adam hyperparameters out of range");
        }
        if !(self.eval.alpha > 0.0 && self.eval.alpha < 1.0) {
            return invalid("eval.alpha must lie in (0, 1)");
        }
        if self.eval.n_samples < 2 || !(self.eval.t_sigma > 0.0) {
            return invalid("eval.samples must be >= 2 and eval.t_sigma > 0");
        }
        if matches!(self.eval.k_bins, Some(k) if k == 0 || k > self.eval.n_samples) {
            return invalid("eval.k_bins must lie in 1..=eval.samples");
        }
        Ok(())
    }

    /// Resolved configuration, one assignment per line, in a fixed order.
    /// Reals are written with shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").unwrap();
        match self.data {
            DataConfig::Grid {
                rows,
                cols,
                spacing,
                sigma,
            } => {
                kv("data.kind", "grid".into());
                kv("data.rows", rows.to_string());
                kv("data.cols", cols.to_string());
                kv("data.spacing", format!("{spacing:?}"));
                kv("data.sigma", format!("{sigma:?}"));
            }
            DataConfig::Ring {
                modes,
                radius,
                categories,
                sigma,
            } => {
                kv("data.kind", "ring".into());
                kv("data.modes", modes.to_string());
                kv("data.radius", format!("{radius:?}"));
                kv("data.categories", categories.to_string());
                kv("data.sigma", format!("{sigma:?}"));
            }
        }
        kv("latent.dim", self.latent.dim.to_string());
        kv("model.g_hidden", join_widths(&self.model.g_hidden));
        kv("model.d_hidden", join_widths(&self.model.d_hidden));
        kv("model.slope", format!("{:?}", self.model.slope));
        kv("loss.lambda_ms", format!("{:?}", self.loss.lambda_ms));
        kv("loss.ms_form", self.loss.ms_form.keyword().into());
        kv("loss.distance", self.loss.distance_mode.keyword().into());
        kv("loss.eps_ms", format!("{:?}", self.loss.eps_ms));
        kv("loss.g_adv", self.loss.g_adv_form.keyword().into());
        kv("train.lr", format!("{:?}", self.adam.lr));
        kv("train.beta1", format!("{:?}", self.adam.beta1));
        kv("train.beta2", format!("{:?}", self.adam.beta2));
        kv("train.batch", self.batch.to_string());
        kv("train.steps", self.steps.to_string());
        kv("train.d_steps", self.d_steps.to_string());
        kv("train.seed", self.seed.to_string());
        kv("train.eval_every", self.eval_every.to_string());
        kv("eval.samples", self.eval.n_samples.to_string());
        kv(
            "eval.k_bins",
            self.eval.k_bins.map_or("auto".into(), |k| k.to_string()),
        );
        kv("eval.alpha", format!("{:?}", self.eval.alpha));
        kv("eval.pairs", self.eval.n_pairs.to_string());
        kv("eval.t_sigma", format!("{:?}", self.eval.t_sigma));
        out
    }

    /// Resolved configuration as a flat JSON object keyed like the text form.
    pub fn to_json(&self) -> serde_json::Value {
        let map = self
            .to_text()
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v.to_string())))
            .collect();
        serde_json::Value::Object(map)
    }

    pub fn mixture(&self) -> Result<MixtureSpec, DataError> {
        self.data.mixture()
    }
}
