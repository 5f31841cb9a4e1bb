//! Conditional GAN objectives and the mode-seeking regularizer.
//!
//! The regularizer rewards a generator for mapping two latent codes to
//! outputs that are far apart relative to the codes' own distance:
//!
//! ```text
//! ratio = meanAbs(G(c, z1) - G(c, z2)) / (meanAbs(z1 - z2) + eps)
//! ```
//!
//! Minimizing a loss cannot maximize `ratio` directly, so [`MsForm`] selects
//! how it enters the generator objective: `InverseRatio` adds
//! `lambda / (ratio + eps)`, `DirectRatio` adds `-lambda * ratio`.

use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::nn::{self, BoundParams, MlpSpec, NnError, ParamSet};
use crate::rng::{Purpose, Stream};
use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GanError {
    #[error("lambda_ms must be a finite value >= 0, got {0}")]
    NegativeLambda(f64),
    #[error("eps_ms must lie in (0, 1e-2], got {0}")]
    BadEpsilon(f64),
    #[error("batch size mismatch: {real} real vs {fake} fake")]
    BatchMismatch { real: usize, fake: usize },
    #[error("condition {condition} out of range for {count} categories")]
    BadCondition { condition: usize, count: usize },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsForm {
    InverseRatio,
    DirectRatio,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceMode {
    RawL1,
    DiscriminatorFeature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GAdvForm {
    NonSaturating,
    Minimax,
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $kw:literal),+ $(,)? }) => {
        impl $ty {
            pub fn keyword(self) -> &'static str {
                match self { $($ty::$variant => $kw),+ }
            }
        }
        impl std::str::FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($kw => Ok($ty::$variant),)+
                    _ => Err(format!("unknown value `{s}`, expected one of: {}", [$($kw),+].join(", "))),
                }
            }
        }
    };
}

keyword_enum!(MsForm { InverseRatio => "inverse-ratio", DirectRatio => "direct-ratio" });
keyword_enum!(DistanceMode { RawL1 => "raw-l1", DiscriminatorFeature => "discriminator-feature" });
keyword_enum!(GAdvForm { NonSaturating => "non-saturating", Minimax => "minimax" });

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub lambda_ms: f64,
    pub ms_form: MsForm,
    pub distance_mode: DistanceMode,
    pub eps_ms: f64,
    pub g_adv_form: GAdvForm,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_ms: 1.0,
            ms_form: MsForm::InverseRatio,
            distance_mode: DistanceMode::RawL1,
            eps_ms: 1e-5,
            g_adv_form: GAdvForm::NonSaturating,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        if !(self.lambda_ms >= 0.0 && self.lambda_ms.is_finite()) {
            return Err(GanError::NegativeLambda(self.lambda_ms));
        }
        if !(self.eps_ms > 0.0 && self.eps_ms <= 1e-2) {
            return Err(GanError::BadEpsilon(self.eps_ms));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub g_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    pub slope: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            latent_dim: 2,
            g_hidden: vec![128, 128],
            d_hidden: vec![128, 128],
            slope: crate::autodiff::DEFAULT_LEAKY_SLOPE,
        }
    }
}

/// Generator and discriminator, both conditioned on a one-hot category.
#[derive(Debug, Clone, PartialEq)]
pub struct GanModel {
    pub g_spec: MlpSpec,
    pub g_params: ParamSet,
    pub d_spec: MlpSpec,
    pub d_params: ParamSet,
    pub n_categories: usize,
    pub latent_dim: usize,
    pub data_dim: usize,
}

impl GanModel {
    pub fn init(
        cfg: &ModelConfig,
        data_dim: usize,
        n_categories: usize,
        seed: u64,
    ) -> Result<Self, GanError> {
        if cfg.latent_dim == 0 || n_categories == 0 {
            return Err(GanError::Config("latent dim and category count must be >= 1".into()));
        }
        let mut g_spec = MlpSpec::new(cfg.latent_dim + n_categories, &cfg.g_hidden, data_dim)?;
        g_spec.slope = cfg.slope;
        let mut d_spec = MlpSpec::new(data_dim + n_categories, &cfg.d_hidden, 1)?;
        d_spec.slope = cfg.slope;
        let g_params = nn::init_params(&g_spec, "g", &mut Stream::new(seed, Purpose::GeneratorInit))?;
        let d_params =
            nn::init_params(&d_spec, "d", &mut Stream::new(seed, Purpose::DiscriminatorInit))?;
        Ok(GanModel {
            g_spec,
            g_params,
            d_spec,
            d_params,
            n_categories,
            latent_dim: cfg.latent_dim,
            data_dim,
        })
    }

    pub fn one_hot(&self, conditions: &[usize]) -> Result<Tensor, GanError> {
        one_hot(conditions, self.n_categories)
    }

    /// `G(c, z)` on the tape.
    pub fn generate_on_tape(
        &self,
        tape: &mut Tape,
        g: &BoundParams,
        onehot: Var,
        z: Var,
    ) -> Result<Var, GanError> {
        let input = tape.concat(z, onehot)?;
        Ok(nn::forward_on_tape(&self.g_spec, g, tape, input)?.output)
    }

    /// `D(c, x)` logits and hidden features on the tape.
    pub fn discriminate_on_tape(
        &self,
        tape: &mut Tape,
        d: &BoundParams,
        onehot: Var,
        x: Var,
    ) -> Result<nn::MlpOutput, GanError> {
        let input = tape.concat(x, onehot)?;
        Ok(nn::forward_on_tape(&self.d_spec, d, tape, input)?)
    }

    /// Value-only generation, one row per condition.
    pub fn generate(&self, conditions: &[usize], z: &Tensor) -> Result<Tensor, GanError> {
        let mut tape = Tape::new();
        let g = self.g_params.bind(&mut tape, false);
        let c = tape.constant(self.one_hot(conditions)?);
        let zv = tape.constant(z.clone());
        let out = self.generate_on_tape(&mut tape, &g, c, zv)?;
        Ok(tape.value(out).clone())
    }

    /// Value-only discriminator logits.
    pub fn discriminate(&self, conditions: &[usize], x: &Tensor) -> Result<Tensor, GanError> {
        let mut tape = Tape::new();
        let d = self.d_params.bind(&mut tape, false);
        let c = tape.constant(self.one_hot(conditions)?);
        let xv = tape.constant(x.clone());
        let out = self.discriminate_on_tape(&mut tape, &d, c, xv)?;
        Ok(tape.value(out.output).clone())
    }
}

pub fn one_hot(conditions: &[usize], n_categories: usize) -> Result<Tensor, GanError> {
    let mut data = vec![0.0; conditions.len() * n_categories];
    for (i, &c) in conditions.iter().enumerate() {
        if c >= n_categories {
            return Err(GanError::BadCondition {
                condition: c,
                count: n_categories,
            });
        }
        data[i * n_categories + c] = 1.0;
    }
    Ok(Tensor::new(vec![conditions.len(), n_categories], data)?)
}

/// `meanAbs(i1 - i2) / (meanAbs(z1 - z2) + eps)`.
pub fn mode_seeking_ratio(
    tape: &mut Tape,
    i1: Var,
    i2: Var,
    z1: Var,
    z2: Var,
    eps: f64,
) -> Result<Var, GanError> {
    let num = tape.mean_abs_diff(i1, i2)?;
    ratio_over_latent(tape, num, z1, z2, eps)
}

fn ratio_over_latent(tape: &mut Tape, num: Var, z1: Var, z2: Var, eps: f64) -> Result<Var, GanError> {
    let den = tape.mean_abs_diff(z1, z2)?;
    let inv = tape.reciprocal(den, eps)?;
    Ok(tape.mul(num, inv)?)
}

#[derive(Debug, Clone, Copy)]
pub struct GeneratorLoss {
    pub total: Var,
    pub adversarial: Var,
    /// Absent when `lambda_ms == 0`.
    pub ratio: Option<Var>,
    pub ms_term: Option<Var>,
}

/// Generator objective for one batch: the adversarial part averaged over both
/// latent batches, plus the weighted mode-seeking term built from the same pair.
///
/// `d` should be bound as constants; only the generator is updated from this loss.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss_on_tape(
    model: &GanModel,
    tape: &mut Tape,
    g: &BoundParams,
    d: &BoundParams,
    conditions: &[usize],
    z1: Var,
    z2: Var,
    cfg: &LossConfig,
) -> Result<GeneratorLoss, GanError> {
    if !(cfg.lambda_ms >= 0.0 && cfg.lambda_ms.is_finite()) {
        return Err(GanError::NegativeLambda(cfg.lambda_ms));
    }
    let c = tape.constant(model.one_hot(conditions)?);
    let i1 = model.generate_on_tape(tape, g, c, z1)?;
    let i2 = model.generate_on_tape(tape, g, c, z2)?;
    let d1 = model.discriminate_on_tape(tape, d, c, i1)?;
    let d2 = model.discriminate_on_tape(tape, d, c, i2)?;

    let (target, sign) = match cfg.g_adv_form {
        // -log σ(l)
        GAdvForm::NonSaturating => (1.0, 0.5),
        // log(1 - σ(l)) = -softplus(l)
        GAdvForm::Minimax => (0.0, -0.5),
    };
    let b1 = tape.bce_with_logits(d1.output, target)?;
    let b1 = tape.mean(b1)?;
    let b2 = tape.bce_with_logits(d2.output, target)?;
    let b2 = tape.mean(b2)?;
    let sum = tape.add(b1, b2)?;
    let adversarial = tape.scalar_mul(sum, sign)?;

    if cfg.lambda_ms == 0.0 {
        return Ok(GeneratorLoss {
            total: adversarial,
            adversarial,
            ratio: None,
            ms_term: None,
        });
    }

    let ratio = match cfg.distance_mode {
        DistanceMode::RawL1 => mode_seeking_ratio(tape, i1, i2, z1, z2, cfg.eps_ms)?,
        DistanceMode::DiscriminatorFeature => {
            let n_layers = d1.features.len();
            let mut acc: Option<Var> = None;
            for (f1, f2) in d1.features.iter().zip(&d2.features) {
                let dist = tape.mean_abs_diff(*f2, *f1)?;
                acc = Some(match acc {
                    None => dist,
                    Some(a) => tape.add(a, dist)?,
                });
            }
            let num = tape.scalar_mul(acc.expect("discriminator has hidden layers"), 1.0 / n_layers as f64)?;
            ratio_over_latent(tape, num, z1, z2, cfg.eps_ms)?
        }
    };
    let ms_term = match cfg.ms_form {
        MsForm::InverseRatio => {
            let inv = tape.reciprocal(ratio, cfg.eps_ms)?;
            tape.scalar_mul(inv, cfg.lambda_ms)?
        }
        MsForm::DirectRatio => tape.scalar_mul(ratio, -cfg.lambda_ms)?,
    };
    let total = tape.add(adversarial, ms_term)?;
    Ok(GeneratorLoss {
        total,
        adversarial,
        ratio: Some(ratio),
        ms_term: Some(ms_term),
    })
}

/// `-mean log σ(D(c, real)) - mean log(1 - σ(D(c, fake)))`.
///
/// `fake` should be a constant on the tape (detached from the generator).
pub fn discriminator_loss_on_tape(
    model: &GanModel,
    tape: &mut Tape,
    d: &BoundParams,
    conditions: &[usize],
    real: Var,
    fake: Var,
) -> Result<Var, GanError> {
    let (nr, nf) = (tape.value(real).leading(), tape.value(fake).leading());
    if nr != nf || nr != conditions.len() {
        return Err(GanError::BatchMismatch { real: nr, fake: nf });
    }
    let c = tape.constant(model.one_hot(conditions)?);
    let dr = model.discriminate_on_tape(tape, d, c, real)?;
    let df = model.discriminate_on_tape(tape, d, c, fake)?;
    let lr = tape.bce_with_logits(dr.output, 1.0)?;
    let lr = tape.mean(lr)?;
    let lf = tape.bce_with_logits(df.output, 0.0)?;
    let lf = tape.mean(lf)?;
    Ok(tape.add(lr, lf)?)
}

/// Value of the discriminator loss on fixed batches.
pub fn discriminator_loss(
    model: &GanModel,
    conditions: &[usize],
    real: &Tensor,
    fake: &Tensor,
) -> Result<f64, GanError> {
    let mut tape = Tape::new();
    let d = model.d_params.bind(&mut tape, false);
    let r = tape.constant(real.clone());
    let f = tape.constant(fake.clone());
    let loss = discriminator_loss_on_tape(model, &mut tape, &d, conditions, r, f)?;
    Ok(tape.value(loss).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use std::f64::consts::LN_2;

    fn v(tape: &mut Tape, data: &[f64]) -> Var {
        tape.constant(Tensor::vector(data.to_vec()))
    }

    #[test]
    fn ratio_direct_evaluation() {
        let mut tape = Tape::new();
        let (i1, i2) = (v(&mut tape, &[0.0, 0.0]), v(&mut tape, &[2.0, 2.0]));
        let (z1, z2) = (v(&mut tape, &[0.0]), v(&mut tape, &[1.0]));
        let r = mode_seeking_ratio(&mut tape, i1, i2, z1, z2, 0.0).unwrap();
        assert_eq!(tape.value(r).item(), 2.0);
        let r = mode_seeking_ratio(&mut tape, i2, i1, z2, z1, 0.0).unwrap();
        assert_eq!(tape.value(r).item(), 2.0);
    }

    #[test]
    fn ratio_with_equal_latents_is_bounded() {
        let mut tape = Tape::new();
        let (i1, i2) = (v(&mut tape, &[0.0, 1.0]), v(&mut tape, &[0.5, -1.0]));
        let z = v(&mut tape, &[0.3, 0.3]);
        let r = mode_seeking_ratio(&mut tape, i1, i2, z, z, 1e-5).unwrap();
        let val = tape.value(r).item();
        assert!(val.is_finite());
        assert!(val <= 1.25 / 1e-5 * (1.0 + 1e-12));
    }

    #[test]
    fn ratio_shape_mismatch() {
        let mut tape = Tape::new();
        let (i1, i2) = (v(&mut tape, &[0.0, 1.0]), v(&mut tape, &[0.5]));
        let z = v(&mut tape, &[0.3]);
        assert!(mode_seeking_ratio(&mut tape, i1, i2, z, z, 1e-5).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = LossConfig::default();
        assert!(c.validate().is_ok());
        c.lambda_ms = -0.1;
        assert_eq!(c.validate(), Err(GanError::NegativeLambda(-0.1)));
        c.lambda_ms = 1.0;
        c.eps_ms = 0.5;
        assert!(c.validate().is_err());
        assert_eq!("minimax".parse::<GAdvForm>(), Ok(GAdvForm::Minimax));
        assert!("l2".parse::<DistanceMode>().is_err());
    }

    fn small_model(seed: u64) -> GanModel {
        let cfg = ModelConfig {
            latent_dim: 2,
            g_hidden: vec![8, 8],
            d_hidden: vec![8, 8],
            ..ModelConfig::default()
        };
        GanModel::init(&cfg, 2, 3, seed).unwrap()
    }

    fn zero_discriminator(model: &mut GanModel) {
        for p in &mut model.d_params.params {
            p.value = Tensor::zeros(p.value.shape());
        }
    }

    fn latents(seed: u64, n: usize) -> (Tensor, Tensor) {
        let mut s = Stream::new(seed, Purpose::Latent);
        let z1 = Tensor::new(vec![n, 2], s.normals(2 * n)).unwrap();
        let z2 = Tensor::new(vec![n, 2], s.normals(2 * n)).unwrap();
        (z1, z2)
    }

    fn g_loss(model: &GanModel, conds: &[usize], z1: &Tensor, z2: &Tensor, cfg: &LossConfig) -> (Tape, GeneratorLoss) {
        let mut tape = Tape::new();
        let g = model.g_params.bind(&mut tape, true);
        let d = model.d_params.bind(&mut tape, false);
        let a = tape.constant(z1.clone());
        let b = tape.constant(z2.clone());
        let loss = generator_loss_on_tape(model, &mut tape, &g, &d, conds, a, b, cfg).unwrap();
        (tape, loss)
    }

    #[test]
    fn zero_logits_give_ln2() {
        let mut m = small_model(1);
        zero_discriminator(&mut m);
        let (z1, z2) = latents(3, 4);
        let conds = [0, 1, 2, 0];
        let cfg = LossConfig {
            lambda_ms: 0.0,
            ..LossConfig::default()
        };
        let (tape, l) = g_loss(&m, &conds, &z1, &z2, &cfg);
        assert!((tape.value(l.total).item() - LN_2).abs() < 1e-15);
        assert!(l.ms_term.is_none());

        let real = Tensor::zeros(&[4, 2]);
        let fake = Tensor::filled(&[4, 2], 1.0);
        let dl = discriminator_loss(&m, &conds, &real, &fake).unwrap();
        assert!((dl - 2.0 * LN_2).abs() <= 1e-12);
    }

    #[test]
    fn saturated_discriminator_loss() {
        let mut m = small_model(2);
        zero_discriminator(&mut m);
        // a single path x0 -> h0 -> h0 -> logit with gain 30
        let hidden = m.d_spec.widths[2];
        let mut w0 = vec![0.0; m.d_spec.widths[0] * m.d_spec.widths[1]];
        w0[0] = 1.0; // x0 -> hidden unit 0
        m.d_params.params[0].value = Tensor::new(vec![m.d_spec.widths[0], m.d_spec.widths[1]], w0).unwrap();
        let mut w1 = vec![0.0; m.d_spec.widths[1] * hidden];
        w1[0] = 1.0;
        m.d_params.params[2].value = Tensor::new(vec![m.d_spec.widths[1], hidden], w1).unwrap();
        let mut w2 = vec![0.0; hidden];
        w2[0] = 30.0;
        m.d_params.params[4].value = Tensor::new(vec![hidden, 1], w2).unwrap();
        // real x0 = 1 -> logit 30; fake x0 = -25 -> 0.2 * 0.2 * -25 * 30 = -30
        let conds = [0, 1];
        let real = Tensor::new(vec![2, 2], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let fake = Tensor::new(vec![2, 2], vec![-25.0, 0.0, -25.0, 0.0]).unwrap();
        let logits = m.discriminate(&conds, &fake).unwrap();
        assert!((logits.data()[0] + 30.0).abs() < 1e-12);
        let dl = discriminator_loss(&m, &conds, &real, &fake).unwrap();
        assert!(dl < 1e-12, "{dl}");
    }

    #[test]
    fn discriminator_batch_mismatch() {
        let m = small_model(0);
        let real = Tensor::zeros(&[3, 2]);
        let fake = Tensor::zeros(&[2, 2]);
        assert_eq!(
            discriminator_loss(&m, &[0, 1, 2], &real, &fake),
            Err(GanError::BatchMismatch { real: 3, fake: 2 })
        );
    }

    #[test]
    fn inverse_ratio_adds_reciprocal() {
        let mut tape = Tape::new();
        let (i1, i2) = (v(&mut tape, &[0.0, 0.0]), v(&mut tape, &[2.0, 2.0]));
        let (z1, z2) = (v(&mut tape, &[0.0]), v(&mut tape, &[1.0]));
        let r = mode_seeking_ratio(&mut tape, i1, i2, z1, z2, 0.0).unwrap();
        let inv = tape.reciprocal(r, 1e-5).unwrap();
        assert!((tape.value(inv).item() - 0.5).abs() < 1e-5);
        assert_eq!(tape.value(inv).item(), 1.0 / (2.0 + 1e-5));
    }

    #[test]
    fn lambda_zero_matches_baseline_bit_exactly() {
        let m = small_model(4);
        let (z1, z2) = latents(5, 6);
        let conds = [0, 1, 2, 2, 1, 0];
        let base = LossConfig {
            lambda_ms: 0.0,
            ..LossConfig::default()
        };
        let (t0, l0) = g_loss(&m, &conds, &z1, &z2, &base);
        let with_form = LossConfig {
            lambda_ms: 0.0,
            ms_form: MsForm::DirectRatio,
            distance_mode: DistanceMode::DiscriminatorFeature,
            ..LossConfig::default()
        };
        let (t1, l1) = g_loss(&m, &conds, &z1, &z2, &with_form);
        assert_eq!(t0.len(), t1.len());
        assert_eq!(
            t0.value(l0.total).item().to_bits(),
            t1.value(l1.total).item().to_bits()
        );
        let (t2, l2) = g_loss(&m, &conds, &z1, &z2, &LossConfig::default());
        assert!(t2.len() > t0.len());
        assert_eq!(
            t2.value(l2.adversarial).item().to_bits(),
            t0.value(l0.total).item().to_bits()
        );
    }

    #[test]
    fn negative_lambda_rejected() {
        let m = small_model(4);
        let (z1, z2) = latents(5, 2);
        let mut tape = Tape::new();
        let g = m.g_params.bind(&mut tape, true);
        let d = m.d_params.bind(&mut tape, false);
        let a = tape.constant(z1);
        let b = tape.constant(z2);
        let cfg = LossConfig {
            lambda_ms: -1.0,
            ..LossConfig::default()
        };
        assert!(matches!(
            generator_loss_on_tape(&m, &mut tape, &g, &d, &[0, 1], a, b, &cfg),
            Err(GanError::NegativeLambda(_))
        ));
    }

    #[test]
    fn inverse_ratio_pushes_collapsed_outputs_apart() {
        // shrink the generator's latent weights so G nearly ignores z and the
        // two generated batches almost coincide
        let cfg = ModelConfig {
            latent_dim: 2,
            g_hidden: vec![4, 4],
            d_hidden: vec![4, 4],
            ..ModelConfig::default()
        };
        let mut m = GanModel::init(&cfg, 2, 2, 8).unwrap();
        {
            let w = &mut m.g_params.params[0].value;
            let cols = w.shape()[1];
            for x in &mut w.data_mut()[..2 * cols] {
                *x *= 1e-2;
            }
        }
        let (z1, z2) = latents(9, 3);
        let conds = [0, 1, 1];
        let loss_cfg = LossConfig {
            lambda_ms: 1.0,
            eps_ms: 1e-2,
            ..LossConfig::default()
        };
        let (tape, l) = g_loss(&m, &conds, &z1, &z2, &loss_cfg);
        assert!(tape.value(l.ratio.unwrap()).item() < 0.05, "{}", tape.value(l.ratio.unwrap()).item());

        let mut tape = Tape::new();
        let g = m.g_params.bind(&mut tape, true);
        let d = m.d_params.bind(&mut tape, false);
        let a = tape.constant(z1.clone());
        let b = tape.constant(z2.clone());
        let l = generator_loss_on_tape(&m, &mut tape, &g, &d, &conds, a, b, &loss_cfg).unwrap();
        let grads = tape.backward(l.ms_term.unwrap()).unwrap();
        assert!(grads.get(g.vars[0]).unwrap().max_abs() > 0.0);

        // one small step against the gradient raises the ratio
        let mut stepped = m.clone();
        let nudge = 1e-6 / grads.get(g.vars[0]).unwrap().max_abs();
        for (x, gx) in stepped.g_params.params[0]
            .value
            .data_mut()
            .iter_mut()
            .zip(grads.get(g.vars[0]).unwrap().data())
        {
            *x -= nudge * gx;
        }
        let (t2, l2) = g_loss(&stepped, &conds, &z1, &z2, &loss_cfg);
        assert!(t2.value(l2.ratio.unwrap()).item() > tape.value(l.ratio.unwrap()).item());

        // checked on the total: the output bias gets no gradient from the ratio
        // alone, and a zero gradient leaves only rounding noise in the difference
        let params: Vec<Tensor> = m.g_params.iter().map(|p| p.value.clone()).collect();
        let err = grad_check(
            |tape, vars| {
                let g = BoundParams { vars: vars.to_vec() };
                let d = m.d_params.bind(tape, false);
                let a = tape.constant(z1.clone());
                let b = tape.constant(z2.clone());
                let l = generator_loss_on_tape(&m, tape, &g, &d, &conds, a, b, &loss_cfg)
                    .map_err(|e| match e {
                        GanError::Autodiff(a) => a,
                        other => panic!("{other}"),
                    })?;
                Ok(l.total)
            },
            &params,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn one_hot_rejects_out_of_range() {
        assert!(one_hot(&[0, 3], 3).is_err());
        let t = one_hot(&[2, 0], 3).unwrap();
        assert_eq!(t.data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }
}
