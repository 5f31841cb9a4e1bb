//! Helpers shared by the integration tests and the acceptance binary.
#![allow(dead_code)]

use modeseek::autodiff::{grad_check, AutodiffError, Tape, Var};
use modeseek::gan::{
    discriminator_loss_on_tape, generator_loss_on_tape, DistanceMode, GAdvForm, GanError, GanModel,
    LossConfig, ModelConfig, MsForm,
};
use modeseek::nn::BoundParams;
use modeseek::rng::{Purpose, Stream};
use modeseek::tensor::Tensor;

pub const GRAD_EPS: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-4;

/// Everything the suite differentiates: each tape op and both full losses.
pub const GRAD_KINDS: [&str; 16] = [
    "add",
    "sub",
    "mul",
    "matmul",
    "concat",
    "mean",
    "abs",
    "leaky_relu",
    "tanh",
    "sigmoid",
    "bce_with_logits",
    "scalar_mul",
    "reciprocal",
    "mean_abs_diff",
    "generator_loss",
    "discriminator_loss",
];

pub fn random_tensor(rng: &mut Stream, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), rng.normals(n).into_iter().map(|x| x * scale).collect()).unwrap()
}

fn positive_tensor(rng: &mut Stream, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| 0.5 + 1.5 * rng.uniform()).collect()).unwrap()
}

fn unwrap_gan(e: GanError) -> AutodiffError {
    match e {
        GanError::Autodiff(a) => a,
        other => panic!("{other}"),
    }
}

/// `mean(y * w)` for a fixed random `w`, so every output element gets a
/// distinct upstream gradient.
fn weighted(tape: &mut Tape, y: Var, w: &Tensor) -> Result<Var, AutodiffError> {
    let wv = tape.constant(w.clone());
    let p = tape.mul(y, wv)?;
    tape.mean(p)
}

/// Worst relative error of one random case. `case` selects the kind
/// (`case % 16`) and seeds the inputs.
pub fn grad_case(case: u64) -> Result<(&'static str, f64), AutodiffError> {
    let kind = GRAD_KINDS[case as usize % GRAD_KINDS.len()];
    let mut rng = Stream::new(case, Purpose::Custom(0x6ad));
    let r = 1 + rng.below(4);
    let c = 1 + rng.below(4);
    let shape = [r, c];
    let w = random_tensor(&mut rng, &shape, 1.0);
    let err = match kind {
        "add" | "sub" | "mul" => {
            let a = random_tensor(&mut rng, &shape, 1.0);
            let b = random_tensor(&mut rng, &shape, 1.0);
            grad_check(
                |t, v| {
                    let y = match kind {
                        "add" => t.add(v[0], v[1])?,
                        "sub" => t.sub(v[0], v[1])?,
                        _ => t.mul(v[0], v[1])?,
                    };
                    weighted(t, y, &w)
                },
                &[a, b],
                GRAD_EPS,
            )?
        }
        "matmul" => {
            let k = 1 + rng.below(4);
            let a = random_tensor(&mut rng, &[r, k], 1.0);
            let b = random_tensor(&mut rng, &[k, c], 1.0);
            grad_check(
                |t, v| {
                    let y = t.matmul(v[0], v[1])?;
                    weighted(t, y, &w)
                },
                &[a, b],
                GRAD_EPS,
            )?
        }
        "concat" => {
            let k = 1 + rng.below(3);
            let a = random_tensor(&mut rng, &[r, k], 1.0);
            let b = random_tensor(&mut rng, &[r, c], 1.0);
            let w = random_tensor(&mut rng, &[r, k + c], 1.0);
            grad_check(
                |t, v| {
                    let y = t.concat(v[0], v[1])?;
                    weighted(t, y, &w)
                },
                &[a, b],
                GRAD_EPS,
            )?
        }
        "mean" => {
            let a = random_tensor(&mut rng, &shape, 1.0);
            let s = 0.5 + rng.uniform();
            grad_check(
                |t, v| {
                    let y = t.mean(v[0])?;
                    // square it so the gradient depends on the input
                    let y2 = t.mul(y, y)?;
                    t.scalar_mul(y2, s)
                },
                &[a],
                GRAD_EPS,
            )?
        }
        "abs" | "leaky_relu" | "tanh" | "sigmoid" => {
            let a = random_tensor(&mut rng, &shape, 1.5);
            let slope = 0.05 + 0.4 * rng.uniform();
            grad_check(
                |t, v| {
                    let y = match kind {
                        "abs" => t.abs(v[0])?,
                        "leaky_relu" => t.leaky_relu(v[0], slope)?,
                        "tanh" => t.tanh(v[0])?,
                        _ => t.sigmoid(v[0])?,
                    };
                    weighted(t, y, &w)
                },
                &[a],
                GRAD_EPS,
            )?
        }
        "bce_with_logits" => {
            let a = random_tensor(&mut rng, &shape, 3.0);
            let target = [0.0, 1.0, rng.uniform()][rng.below(3)];
            grad_check(
                |t, v| {
                    let y = t.bce_with_logits(v[0], target)?;
                    weighted(t, y, &w)
                },
                &[a],
                GRAD_EPS,
            )?
        }
        "scalar_mul" => {
            let a = random_tensor(&mut rng, &shape, 1.0);
            let s = 4.0 * rng.normal();
            grad_check(
                |t, v| {
                    let y = t.scalar_mul(v[0], s)?;
                    let y = t.mul(y, v[0])?;
                    weighted(t, y, &w)
                },
                &[a],
                GRAD_EPS,
            )?
        }
        "reciprocal" => {
            let a = positive_tensor(&mut rng, &shape);
            let eps = [0.0, 1e-5, 0.1][rng.below(3)];
            grad_check(
                |t, v| {
                    let y = t.reciprocal(v[0], eps)?;
                    weighted(t, y, &w)
                },
                &[a],
                GRAD_EPS,
            )?
        }
        "mean_abs_diff" => {
            let a = random_tensor(&mut rng, &shape, 1.0);
            let b = random_tensor(&mut rng, &shape, 1.0);
            grad_check(
                |t, v| {
                    let y = t.mean_abs_diff(v[0], v[1])?;
                    t.mul(y, y)
                },
                &[a, b],
                GRAD_EPS,
            )?
        }
        "generator_loss" => generator_case(&mut rng, case)?,
        "discriminator_loss" => discriminator_case(&mut rng, case)?,
        _ => unreachable!(),
    };
    Ok((kind, err))
}

fn small_model(rng: &mut Stream, seed: u64) -> (GanModel, usize) {
    let ncat = 1 + rng.below(3);
    let cfg = ModelConfig {
        latent_dim: 2,
        g_hidden: vec![3 + rng.below(4), 3 + rng.below(4)],
        d_hidden: vec![3 + rng.below(4), 3 + rng.below(4)],
        ..ModelConfig::default()
    };
    (GanModel::init(&cfg, 2, ncat, seed).unwrap(), ncat)
}

fn generator_case(rng: &mut Stream, seed: u64) -> Result<f64, AutodiffError> {
    let (model, ncat) = small_model(rng, seed);
    let n = 2 + rng.below(4);
    let conds: Vec<usize> = (0..n).map(|_| rng.below(ncat)).collect();
    let z1 = random_tensor(rng, &[n, 2], 1.0);
    let z2 = random_tensor(rng, &[n, 2], 1.0);
    let cfg = LossConfig {
        lambda_ms: [0.0, 0.5, 1.0][rng.below(3)],
        ms_form: [MsForm::InverseRatio, MsForm::DirectRatio][rng.below(2)],
        distance_mode: [DistanceMode::RawL1, DistanceMode::DiscriminatorFeature][rng.below(2)],
        g_adv_form: [GAdvForm::NonSaturating, GAdvForm::Minimax][rng.below(2)],
        eps_ms: 1e-5,
    };
    let params: Vec<Tensor> = model.g_params.iter().map(|p| p.value.clone()).collect();
    grad_check(
        |tape, vars| {
            let g = BoundParams { vars: vars.to_vec() };
            let d = model.d_params.bind(tape, false);
            let a = tape.constant(z1.clone());
            let b = tape.constant(z2.clone());
            let l = generator_loss_on_tape(&model, tape, &g, &d, &conds, a, b, &cfg).map_err(unwrap_gan)?;
            Ok(l.total)
        },
        &params,
        GRAD_EPS,
    )
}

fn discriminator_case(rng: &mut Stream, seed: u64) -> Result<f64, AutodiffError> {
    let (model, ncat) = small_model(rng, seed);
    let n = 2 + rng.below(4);
    let conds: Vec<usize> = (0..n).map(|_| rng.below(ncat)).collect();
    let real = random_tensor(rng, &[n, 2], 2.0);
    let fake = random_tensor(rng, &[n, 2], 2.0);
    let params: Vec<Tensor> = model.d_params.iter().map(|p| p.value.clone()).collect();
    grad_check(
        |tape, vars| {
            let d = BoundParams { vars: vars.to_vec() };
            let r = tape.constant(real.clone());
            let f = tape.constant(fake.clone());
            discriminator_loss_on_tape(&model, tape, &d, &conds, r, f).map_err(unwrap_gan)
        },
        &params,
        GRAD_EPS,
    )
}
