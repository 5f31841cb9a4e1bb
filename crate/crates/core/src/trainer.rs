//! Alternating conditional-GAN training, sweeps over the mode-seeking weight,
//! and latent interpolation.
//!
//! Each step draws one batch of conditions (uniform over categories), real
//! samples, and two latent batches `z1`, `z2`. The discriminator is updated
//! first on `G(c, z1)` held constant, then the generator on both latent
//! batches. Training streams live in [`TrainState`] and are checkpointed, so
//! a resumed run replays the same draws as an uninterrupted one. Evaluation
//! draws from streams keyed by `(seed, step, category)` and never touches the
//! training streams.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tape;
use crate::checkpoint::Checkpoint;
use crate::config::{ConfigError, TrainConfig};
use crate::data::{self, DataError, MixtureSpec, Point};
use crate::gan::{self, GanError, GanModel};
use crate::metrics::{self, MetricsError, MetricsReport};
use crate::nn::{self, AdamState, NnError};
use crate::rng::{Purpose, Stream};
use crate::tensor::Tensor;

/// Losses beyond this magnitude count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Gan(#[from] GanError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(
        "training diverged at step {}: last finite losses d={:?} g={:?}",
        .0.step, .0.last_d_loss, .0.last_g_loss
    )]
    Diverged(Box<Divergence>),
    #[error("{0}")]
    Invalid(String),
}

impl From<NnError> for TrainError {
    fn from(e: NnError) -> Self {
        TrainError::Gan(e.into())
    }
}

#[derive(Debug, Clone)]
pub struct Divergence {
    pub step: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub last_d_loss: Option<f64>,
    pub last_g_loss: Option<f64>,
    /// State when training stopped, before the offending update was applied.
    pub checkpoint: Checkpoint,
    pub log: TrainLog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainStreams {
    pub conditions: Stream,
    pub real: Stream,
    pub latent: Stream,
}

impl TrainStreams {
    pub fn new(seed: u64) -> Self {
        TrainStreams {
            conditions: Stream::new(seed, Purpose::Conditions),
            real: Stream::new(seed, Purpose::RealData),
            latent: Stream::new(seed, Purpose::Latent),
        }
    }
}

/// Everything that evolves during training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model: GanModel,
    pub g_adam: AdamState,
    pub d_adam: AdamState,
    pub step: u64,
    pub streams: TrainStreams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Weighted mode-seeking term; absent when `lambda_ms == 0`.
    pub ms_term: Option<f64>,
    pub ratio: Option<f64>,
    /// Mean seconds per iteration since the previous record. Not part of the
    /// deterministic log output.
    #[serde(skip)]
    pub iter_seconds: f64,
    pub metrics: Vec<MetricsReport>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
    /// Wall time of every iteration, in seconds.
    pub iter_seconds: Vec<f64>,
}

impl TrainLog {
    /// JSON lines: a header with the resolved configuration, then one record
    /// per evaluation. Timing is excluded so reruns are byte-identical.
    pub fn to_jsonl(&self, config: &TrainConfig) -> String {
        let mut out = String::new();
        let header = serde_json::json!({ "config": config.to_json(), "seed": config.seed });
        out.push_str(&header.to_string());
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Per-record wall-time lines.
    pub fn timing_jsonl(&self) -> String {
        self.records
            .iter()
            .map(|r| serde_json::json!({ "step": r.step, "iter_seconds": r.iter_seconds }).to_string() + "\n")
            .collect()
    }

    pub fn final_metrics(&self) -> Option<&[MetricsReport]> {
        self.records.last().map(|r| r.metrics.as_slice())
    }

    pub fn median_iter_seconds(&self) -> Option<f64> {
        median(&self.iter_seconds)
    }
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub d_loss: f64,
    pub g_loss: f64,
    pub ms_term: Option<f64>,
    pub ratio: Option<f64>,
}

fn diverged(x: f64) -> bool {
    !x.is_finite() || x.abs() > DIVERGENCE_LIMIT
}

pub struct Trainer {
    pub config: TrainConfig,
    pub mixture: MixtureSpec,
    pub state: TrainState,
    pub log: TrainLog,
    last: Option<StepLosses>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let mixture = config.mixture()?;
        let model = GanModel::init(&config.model, 2, mixture.n_categories(), config.seed)?;
        let g_adam = AdamState::new(&model.g_params, config.adam);
        let d_adam = AdamState::new(&model.d_params, config.adam);
        let streams = TrainStreams::new(config.seed);
        Ok(Trainer {
            mixture,
            state: TrainState {
                model,
                g_adam,
                d_adam,
                step: 0,
                streams,
            },
            log: TrainLog::default(),
            last: None,
            config,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self, TrainError> {
        ckpt.config.validate()?;
        let mixture = ckpt.config.mixture()?;
        Ok(Trainer {
            mixture,
            state: ckpt.state,
            log: TrainLog::default(),
            last: None,
            config: ckpt.config,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            state: self.state.clone(),
        }
    }

    /// One discriminator/generator round. Nothing is updated when a loss diverges.
    pub fn step(&mut self) -> Result<StepLosses, TrainError> {
        let cfg = &self.config;
        let st = &mut self.state;
        let n_cat = self.mixture.n_categories();
        let mut d_loss = 0.0;
        let mut batch_draws = None;

        for _ in 0..cfg.d_steps {
            let conds = data::sample_conditions(n_cat, cfg.batch, &mut st.streams.conditions);
            let real = data::sample_for_conditions(&self.mixture, &conds, &mut st.streams.real)?;
            let z1 = data::draw_latent(cfg.latent, cfg.batch, &mut st.streams.latent);
            let z2 = data::draw_latent(cfg.latent, cfg.batch, &mut st.streams.latent);
            let fake = st.model.generate(&conds, &z1)?;

            let mut tape = Tape::new();
            let d = st.model.d_params.bind(&mut tape, true);
            let r = tape.constant(real.samples_tensor());
            let f = tape.constant(fake);
            let loss = gan::discriminator_loss_on_tape(&st.model, &mut tape, &d, &conds, r, f)?;
            d_loss = tape.value(loss).item();
            if diverged(d_loss) {
                return Ok(StepLosses {
                    d_loss,
                    g_loss: f64::NAN,
                    ms_term: None,
                    ratio: None,
                });
            }
            let grads = tape.backward(loss).map_err(GanError::from)?;
            let named = st.model.d_params.named_grads(&d, &grads);
            if named.values().any(|g| !g.all_finite()) {
                return Ok(StepLosses {
                    d_loss: f64::NAN,
                    g_loss: f64::NAN,
                    ms_term: None,
                    ratio: None,
                });
            }
            nn::adam_step(&mut st.model.d_params, &named, &mut st.d_adam)?;
            batch_draws = Some((conds, z1, z2));
        }

        let (conds, z1, z2) = batch_draws.expect("d_steps >= 1");
        let mut tape = Tape::new();
        let g = st.model.g_params.bind(&mut tape, true);
        let d = st.model.d_params.bind(&mut tape, false);
        let a = tape.constant(z1);
        let b = tape.constant(z2);
        let out = gan::generator_loss_on_tape(&st.model, &mut tape, &g, &d, &conds, a, b, &cfg.loss)?;
        let g_loss = tape.value(out.total).item();
        let losses = StepLosses {
            d_loss,
            g_loss,
            ms_term: out.ms_term.map(|v| tape.value(v).item()),
            ratio: out.ratio.map(|v| tape.value(v).item()),
        };
        if diverged(g_loss) {
            return Ok(losses);
        }
        let grads = tape.backward(out.total).map_err(GanError::from)?;
        let named = st.model.g_params.named_grads(&g, &grads);
        if named.values().any(|g| !g.all_finite()) {
            return Ok(StepLosses {
                g_loss: f64::NAN,
                ..losses
            });
        }
        nn::adam_step(&mut st.model.g_params, &named, &mut st.g_adam)?;
        st.step += 1;
        Ok(losses)
    }

    /// Trains until `total_steps` generator updates have been made, recording
    /// an evaluation every `eval_every` steps and at the end.
    pub fn run_until(&mut self, total_steps: u64) -> Result<(), TrainError> {
        self.config.steps = total_steps;
        let mut since_record = Vec::new();
        while self.state.step < total_steps {
            let started = Instant::now();
            let before = self.state.step;
            let losses = self.step()?;
            if self.state.step == before || diverged(losses.d_loss) || diverged(losses.g_loss) {
                return Err(self.divergence(before + 1, losses));
            }
            let dt = started.elapsed().as_secs_f64();
            self.log.iter_seconds.push(dt);
            since_record.push(dt);
            self.last = Some(losses);
            let s = self.state.step;
            let due = self.config.eval_every > 0 && s.is_multiple_of(self.config.eval_every);
            if due || s == total_steps {
                let metrics = evaluate_model(&self.state.model, &self.mixture, &self.config, s)?;
                self.log.records.push(TrainRecord {
                    step: s,
                    d_loss: losses.d_loss,
                    g_loss: losses.g_loss,
                    ms_term: losses.ms_term,
                    ratio: losses.ratio,
                    iter_seconds: since_record.iter().sum::<f64>() / since_record.len() as f64,
                    metrics,
                });
                since_record.clear();
            }
        }
        Ok(())
    }

    fn divergence(&self, step: u64, losses: StepLosses) -> TrainError {
        TrainError::Diverged(Box::new(Divergence {
            step,
            d_loss: losses.d_loss,
            g_loss: losses.g_loss,
            last_d_loss: self.last.map(|l| l.d_loss),
            last_g_loss: self.last.map(|l| l.g_loss),
            checkpoint: self.checkpoint(),
            log: self.log.clone(),
        }))
    }
}

/// Trains from scratch for `config.steps` steps.
pub fn train(config: &TrainConfig) -> Result<(Checkpoint, TrainLog), TrainError> {
    let mut t = Trainer::new(config.clone())?;
    t.run_until(config.steps)?;
    Ok((t.checkpoint(), t.log))
}

/// Continues a checkpointed run for `more_steps` further steps.
pub fn resume(ckpt: Checkpoint, more_steps: u64) -> Result<(Checkpoint, TrainLog), TrainError> {
    let target = ckpt.state.step + more_steps;
    let mut t = Trainer::from_checkpoint(ckpt)?;
    t.run_until(target)?;
    Ok((t.checkpoint(), t.log))
}

/// Seeds for one evaluation of one category at one step.
fn eval_seed(config: &TrainConfig, step: u64, category: usize) -> u64 {
    Stream::from_parts(&[config.seed, Purpose::Eval.tag(), step, category as u64]).next_u64()
}

/// Generates `n` samples of `category` from latents drawn with `seed`.
pub fn generate_samples(
    model: &GanModel,
    category: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<Point>, TrainError> {
    if category >= model.n_categories {
        return Err(GanError::BadCondition {
            condition: category,
            count: model.n_categories,
        }
        .into());
    }
    let mut rng = Stream::from_parts(&[seed, Purpose::Latent.tag()]);
    let z = data::draw_latent(data::LatentSpec { dim: model.latent_dim }, n, &mut rng);
    let out = model.generate(&vec![category; n], &z)?;
    Ok(out.rows().map(|r| [r[0], r[1]]).collect())
}

/// Metrics for every category, using fresh real and generated samples.
pub fn evaluate_model(
    model: &GanModel,
    mixture: &MixtureSpec,
    config: &TrainConfig,
    step: u64,
) -> Result<Vec<MetricsReport>, TrainError> {
    let n = config.eval.n_samples;
    (0..mixture.n_categories())
        .map(|c| {
            let seed = eval_seed(config, step, c);
            let real = data::sample_real(mixture, c, n, seed)?;
            let fake = generate_samples(model, c, n, seed)?;
            let centers = mixture.centers_of(c)?;
            Ok(metrics::evaluate(
                &real.samples,
                &fake,
                &centers,
                mixture.sigma,
                &config.eval,
                seed,
            )?)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub lambda: f64,
    pub seed: u64,
    /// Final evaluation pooled over categories.
    pub report: MetricsReport,
    pub per_category: Vec<MetricsReport>,
    pub diverged: bool,
    pub median_iter_seconds: f64,
}

/// One training run per `(lambda, seed)`; rows ordered by lambda index, then
/// seed index. Divergence is recorded and the state at that point evaluated.
pub fn sweep(base: &TrainConfig, lambdas: &[f64], seeds: &[u64]) -> Result<Vec<SweepRow>, TrainError> {
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
        return Err(TrainError::Invalid(format!("lambda {l} must be >= 0")));
    }
    let cells: Vec<(f64, u64)> = lambdas
        .iter()
        .flat_map(|&l| seeds.iter().map(move |&s| (l, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(lambda, seed)| run_cell(base, lambda, seed))
        .collect()
}

fn run_cell(base: &TrainConfig, lambda: f64, seed: u64) -> Result<SweepRow, TrainError> {
    let mut cfg = base.clone();
    cfg.loss.lambda_ms = lambda;
    cfg.seed = seed;
    let (per_category, diverged, log) = match train(&cfg) {
        Ok((_, log)) => (log.final_metrics().unwrap().to_vec(), false, log),
        Err(TrainError::Diverged(d)) => {
            let mixture = cfg.mixture()?;
            let step = d.checkpoint.state.step;
            let m = evaluate_model(&d.checkpoint.state.model, &mixture, &cfg, step)?;
            (m, true, d.log)
        }
        Err(e) => return Err(e),
    };
    Ok(SweepRow {
        lambda,
        seed,
        report: MetricsReport::pooled(&per_category).expect("at least one category"),
        per_category,
        diverged,
        median_iter_seconds: log.median_iter_seconds().unwrap_or(f64::NAN),
    })
}

pub const SWEEP_CSV_HEADER: &str = "lambda,seed,ndb,jsd,diversity,modes_covered,hq_fraction,diverged";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{:?},{},{},{:?},{:?},{},{:?},{}\n",
            r.lambda,
            r.seed,
            r.report.ndb,
            r.report.jsd,
            r.report.pairwise_diversity,
            r.report.modes_covered,
            r.report.hq_fraction,
            r.diverged
        ));
    }
    out
}

/// `G(c, (1 - t) z_a + t z_b)` for `t = i / (steps - 1)`. Each point is a
/// separate single-row forward pass, so the endpoints are bit-identical to
/// generating `z_a` and `z_b` directly.
pub fn interpolate(
    model: &GanModel,
    category: usize,
    z_a: &[f64],
    z_b: &[f64],
    steps: usize,
) -> Result<Vec<Point>, TrainError> {
    if steps < 2 {
        return Err(TrainError::Invalid("interpolation needs at least 2 steps".into()));
    }
    if z_a.len() != model.latent_dim || z_b.len() != model.latent_dim {
        return Err(TrainError::Invalid(format!(
            "latent codes must have dimension {}",
            model.latent_dim
        )));
    }
    (0..steps)
        .map(|i| {
            let t = i as f64 / (steps - 1) as f64;
            let z: Vec<f64> = z_a.iter().zip(z_b).map(|(a, b)| (1.0 - t) * a + t * b).collect();
            let out = model.generate(&[category], &Tensor::new(vec![1, z.len()], z).unwrap())?;
            Ok([out.data()[0], out.data()[1]])
        })
        .collect()
}
