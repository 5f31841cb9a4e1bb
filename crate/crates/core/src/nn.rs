//! Multilayer perceptrons and the Adam optimizer.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::autodiff::{AutodiffError, GradMap, Tape, Var, DEFAULT_LEAKY_SLOPE};
use crate::rng::Stream;
use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("invalid network: {0}")]
    InvalidSpec(String),
    #[error("no gradient for parameter `{0}`")]
    MissingGradient(String),
    #[error("input width {got} does not match network input width {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Tanh,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    /// Input, hidden..., output.
    pub widths: Vec<usize>,
    pub slope: f64,
    pub output: OutputActivation,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize) -> Result<Self, NnError> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let spec = MlpSpec {
            widths,
            slope: DEFAULT_LEAKY_SLOPE,
            output: OutputActivation::Identity,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.widths.len() < 3 {
            return Err(NnError::InvalidSpec(
                "at least one hidden layer is required".into(),
            ));
        }
        if self.widths.contains(&0) {
            return Err(NnError::InvalidSpec("widths must be at least 1".into()));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn n_hidden(&self) -> usize {
        self.widths.len() - 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Named parameters in a fixed order: `{prefix}.{layer}.weight` (`[fan_in, fan_out]`)
/// then `{prefix}.{layer}.bias` (`[1, fan_out]`) for each layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub params: Vec<Param>,
}

impl ParamSet {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Records every parameter on `tape`, as trainable leaves or as constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundParams {
        let vars = self
            .params
            .iter()
            .map(|p| {
                if trainable {
                    tape.leaf(p.value.clone())
                } else {
                    tape.constant(p.value.clone())
                }
            })
            .collect();
        BoundParams { vars }
    }

    /// Pulls each parameter's gradient out of `grads`, keyed by name.
    pub fn named_grads(&self, bound: &BoundParams, grads: &GradMap) -> NamedGrads {
        self.params
            .iter()
            .zip(&bound.vars)
            .filter_map(|(p, v)| grads.get(*v).map(|g| (p.name.clone(), g.clone())))
            .collect()
    }
}

pub type NamedGrads = BTreeMap<String, Tensor>;

/// Tape handles for a [`ParamSet`], in the same order.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub vars: Vec<Var>,
}

pub fn init_params(spec: &MlpSpec, prefix: &str, rng: &mut Stream) -> Result<ParamSet, NnError> {
    spec.validate()?;
    let gain = 2.0 / (1.0 + spec.slope * spec.slope);
    let mut params = Vec::with_capacity(2 * spec.n_layers());
    for (l, w) in spec.widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let std = (gain / fan_in as f64).sqrt();
        let weights: Vec<f64> = (0..fan_in * fan_out).map(|_| std * rng.normal()).collect();
        params.push(Param {
            name: format!("{prefix}.{l}.weight"),
            value: Tensor::new(vec![fan_in, fan_out], weights)?,
        });
        params.push(Param {
            name: format!("{prefix}.{l}.bias"),
            value: Tensor::zeros(&[1, fan_out]),
        });
    }
    Ok(ParamSet { params })
}

/// Output and per-hidden-layer post-activation features of one forward pass.
#[derive(Debug, Clone)]
pub struct MlpOutput {
    pub output: Var,
    pub features: Vec<Var>,
}

/// Forward pass recorded on `tape`. `input` is `[batch, input_width]`.
pub fn forward_on_tape(
    spec: &MlpSpec,
    bound: &BoundParams,
    tape: &mut Tape,
    input: Var,
) -> Result<MlpOutput, NnError> {
    let shape = tape.value(input).shape().to_vec();
    let got = *shape.last().unwrap();
    if shape.len() != 2 || got != spec.input_width() {
        return Err(NnError::InputWidth {
            expected: spec.input_width(),
            got,
        });
    }
    let ones = tape.constant(Tensor::filled(&[shape[0], 1], 1.0));
    let mut h = input;
    let mut features = Vec::with_capacity(spec.n_hidden());
    for l in 0..spec.n_layers() {
        let (w, b) = (bound.vars[2 * l], bound.vars[2 * l + 1]);
        let xw = tape.matmul(h, w)?;
        let bias = tape.matmul(ones, b)?;
        let pre = tape.add(xw, bias)?;
        if l + 1 < spec.n_layers() {
            h = tape.leaky_relu(pre, spec.slope)?;
            features.push(h);
        } else {
            h = match spec.output {
                OutputActivation::Identity => pre,
                OutputActivation::Tanh => tape.tanh(pre)?,
            };
        }
    }
    Ok(MlpOutput {
        output: h,
        features,
    })
}

/// Value-only forward pass on a throwaway tape.
pub fn forward(
    spec: &MlpSpec,
    params: &ParamSet,
    input: &Tensor,
) -> Result<(Tensor, Vec<Tensor>), NnError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let x = tape.constant(input.clone());
    let out = forward_on_tape(spec, &bound, &mut tape, x)?;
    let features = out.features.iter().map(|f| tape.value(*f).clone()).collect();
    Ok((tape.value(out.output).clone(), features))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub name: String,
    pub m: Tensor,
    pub v: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    /// Aligned with the owning [`ParamSet`].
    pub moments: Vec<Moments>,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let moments = params
            .iter()
            .map(|p| Moments {
                name: p.name.clone(),
                m: Tensor::zeros(p.value.shape()),
                v: Tensor::zeros(p.value.shape()),
            })
            .collect();
        AdamState {
            config,
            t: 0,
            moments,
        }
    }
}

/// One bias-corrected Adam update. Every parameter must have a gradient;
/// nothing is modified if one is missing.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &NamedGrads,
    state: &mut AdamState,
) -> Result<(), NnError> {
    for p in &params.params {
        match grads.get(&p.name) {
            None => return Err(NnError::MissingGradient(p.name.clone())),
            Some(g) if g.shape() != p.value.shape() => {
                return Err(AutodiffError::ShapeMismatch {
                    op: "adam_step",
                    shapes: vec![p.value.shape().to_vec(), g.shape().to_vec()],
                }
                .into())
            }
            Some(_) => {}
        }
    }
    state.t += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for (p, mom) in params.params.iter_mut().zip(state.moments.iter_mut()) {
        debug_assert_eq!(p.name, mom.name);
        let g = &grads[&p.name];
        let (m, v) = (mom.m.data_mut(), mom.v.data_mut());
        for (i, (w, &gi)) in p.value.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
