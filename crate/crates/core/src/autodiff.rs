//! Define-by-run reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation as a [`Node`] in topological order.
//! Leaves are either trainable (`leaf`) or constants (`constant`); a node
//! requires a gradient iff one of its inputs does, and [`Tape::backward`]
//! only propagates through those nodes. Build a fresh tape per step.
//!
//! ```
//! use modeseek::autodiff::Tape;
//! use modeseek::tensor::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::vector(vec![-3.0, 4.0]));
//! let a = tape.abs(x).unwrap();
//! let loss = tape.mean(a).unwrap();
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[-0.5, 0.5]);
//! ```

use thiserror::Error;

use crate::tensor::{gemm, Tensor};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {shapes:?}")]
    ShapeMismatch {
        op: &'static str,
        shapes: Vec<Vec<usize>>,
    },
    #[error("{op}: expected {expected} inputs, got {got}")]
    Arity {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} does not match data length {len}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("reciprocal: shifted value {0:e} underflows")]
    ReciprocalUnderflow(f64),
    #[error("non-finite forward value")]
    NonFinite,
    #[error("variable {0} is not on this tape")]
    UnknownVar(usize),
}

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    /// Elementwise product.
    Mul,
    MatMul,
    /// Concatenation along the last axis.
    Concat,
    /// Mean over all elements, producing shape `[1]`.
    Mean,
    Abs,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
    /// Elementwise `-[t log σ(x) + (1-t) log(1-σ(x))]` in log-space.
    BceWithLogits(f64),
    ScalarMul(f64),
    /// `1 / (x + eps)`.
    Reciprocal(f64),
}

impl OpKind {
    fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::MatMul => "matmul",
            OpKind::Concat => "concat",
            OpKind::Mean => "mean",
            OpKind::Abs => "abs",
            OpKind::LeakyRelu(_) => "leaky_relu",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::BceWithLogits(_) => "bce_with_logits",
            OpKind::ScalarMul(_) => "scalar_mul",
            OpKind::Reciprocal(_) => "reciprocal",
        }
    }

    fn arity(self) -> usize {
        match self {
            OpKind::Leaf => 0,
            OpKind::Add | OpKind::Sub | OpKind::Mul | OpKind::MatMul | OpKind::Concat => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: usize,
    pub op: OpKind,
    pub inputs: Vec<Var>,
    pub value: Tensor,
    pub requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of one scalar with respect to every node that required one.
#[derive(Debug, Clone)]
pub struct GradMap {
    grads: Vec<Option<Tensor>>,
}

impl GradMap {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn bce_with_logits(x: f64, target: f64) -> f64 {
    x.max(0.0) - x * target + (-x.abs()).exp().ln_1p()
}

fn mismatch(op: OpKind, vals: &[&Tensor]) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op: op.name(),
        shapes: vals.iter().map(|t| t.shape().to_vec()).collect(),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        let id = self.nodes.len();
        self.nodes.push(Node {
            id,
            op: OpKind::Leaf,
            inputs: Vec::new(),
            value,
            requires_grad,
        });
        Var(id)
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, true)
    }

    /// Input treated as a constant; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_leaf(value, false)
    }

    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var, AutodiffError> {
        if kind == OpKind::Leaf || inputs.len() != kind.arity() {
            return Err(AutodiffError::Arity {
                op: kind.name(),
                expected: kind.arity(),
                got: inputs.len(),
            });
        }
        for v in inputs {
            if v.0 >= self.nodes.len() {
                return Err(AutodiffError::UnknownVar(v.0));
            }
        }
        let value = self.forward(kind, inputs)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let id = self.nodes.len();
        self.nodes.push(Node {
            id,
            op: kind,
            inputs: inputs.to_vec(),
            value,
            requires_grad,
        });
        Ok(Var(id))
    }

    fn forward(&self, kind: OpKind, inputs: &[Var]) -> Result<Tensor, AutodiffError> {
        let a = &self.nodes[inputs[0].0].value;
        let out = match kind {
            OpKind::Leaf => unreachable!(),
            OpKind::Add | OpKind::Sub | OpKind::Mul => {
                let b = &self.nodes[inputs[1].0].value;
                if a.shape() != b.shape() {
                    return Err(mismatch(kind, &[a, b]));
                }
                match kind {
                    OpKind::Add => a.zip_map(b, |x, y| x + y),
                    OpKind::Sub => a.zip_map(b, |x, y| x - y),
                    _ => a.zip_map(b, |x, y| x * y),
                }
            }
            OpKind::MatMul => {
                let b = &self.nodes[inputs[1].0].value;
                if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
                    return Err(mismatch(kind, &[a, b]));
                }
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                let mut c = vec![0.0; m * n];
                gemm(m, k, n, a.data(), (k as isize, 1), b.data(), (n as isize, 1), &mut c);
                Tensor::new(vec![m, n], c)?
            }
            OpKind::Concat => {
                let b = &self.nodes[inputs[1].0].value;
                let (sa, sb) = (a.shape(), b.shape());
                if sa.len() != sb.len() || sa[..sa.len() - 1] != sb[..sb.len() - 1] {
                    return Err(mismatch(kind, &[a, b]));
                }
                let (wa, wb) = (a.last_dim(), b.last_dim());
                let mut data = Vec::with_capacity(a.len() + b.len());
                for (ra, rb) in a.rows().zip(b.rows()) {
                    data.extend_from_slice(ra);
                    data.extend_from_slice(rb);
                }
                let mut shape = sa.to_vec();
                *shape.last_mut().unwrap() = wa + wb;
                Tensor::new(shape, data)?
            }
            OpKind::Mean => Tensor::scalar(a.data().iter().sum::<f64>() / a.len() as f64),
            OpKind::Abs => a.map(f64::abs),
            OpKind::LeakyRelu(s) => a.map(|x| if x > 0.0 { x } else { s * x }),
            OpKind::Tanh => a.map(f64::tanh),
            OpKind::Sigmoid => a.map(sigmoid),
            OpKind::BceWithLogits(t) => a.map(|x| bce_with_logits(x, t)),
            OpKind::ScalarMul(c) => a.map(|x| c * x),
            OpKind::Reciprocal(eps) => {
                let mut out = Vec::with_capacity(a.len());
                for &x in a.data() {
                    let s = x + eps;
                    let r = 1.0 / s;
                    if s.abs() < f64::MIN_POSITIVE || !r.is_finite() {
                        return Err(AutodiffError::ReciprocalUnderflow(s));
                    }
                    out.push(r);
                }
                Tensor::new(a.shape().to_vec(), out)?
            }
        };
        Ok(out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::MatMul, &[a, b])
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Concat, &[a, b])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Mean, &[a])
    }

    pub fn abs(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Abs, &[a])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var, AutodiffError> {
        self.apply(OpKind::LeakyRelu(slope), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Tanh, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Sigmoid, &[a])
    }

    pub fn bce_with_logits(&mut self, a: Var, target: f64) -> Result<Var, AutodiffError> {
        self.apply(OpKind::BceWithLogits(target), &[a])
    }

    pub fn scalar_mul(&mut self, a: Var, c: f64) -> Result<Var, AutodiffError> {
        self.apply(OpKind::ScalarMul(c), &[a])
    }

    pub fn reciprocal(&mut self, a: Var, eps: f64) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Reciprocal(eps), &[a])
    }

    /// `mean(|a - b|)`.
    pub fn mean_abs_diff(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let d = self.sub(a, b)?;
        let d = self.abs(d)?;
        self.mean(d)
    }

    /// Reverse sweep from a scalar `loss`, seeded with 1.
    pub fn backward(&self, loss: Var) -> Result<GradMap, AutodiffError> {
        let root = self.nodes.get(loss.0).ok_or(AutodiffError::UnknownVar(loss.0))?;
        if !root.value.is_scalar() {
            return Err(AutodiffError::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(root.value.shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad || node.op == OpKind::Leaf {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let contributions = self.local_grads(node, &g);
            for (input, contrib) in node.inputs.iter().zip(contributions) {
                if let Some(c) = contrib {
                    match &mut grads[input.0] {
                        Some(acc) => acc.add_assign(&c),
                        slot @ None => *slot = Some(c),
                    }
                }
            }
            grads[id] = Some(g);
        }
        for (i, slot) in grads.iter_mut().enumerate() {
            if !self.nodes[i].requires_grad {
                *slot = None;
            }
        }
        Ok(GradMap { grads })
    }

    fn local_grads(&self, node: &Node, g: &Tensor) -> Vec<Option<Tensor>> {
        let want = |v: Var| self.nodes[v.0].requires_grad;
        let val = |v: Var| &self.nodes[v.0].value;
        let ins = &node.inputs;
        match node.op {
            OpKind::Leaf => Vec::new(),
            OpKind::Add => vec![
                want(ins[0]).then(|| g.clone()),
                want(ins[1]).then(|| g.clone()),
            ],
            OpKind::Sub => vec![
                want(ins[0]).then(|| g.clone()),
                want(ins[1]).then(|| g.map(|x| -x)),
            ],
            OpKind::Mul => vec![
                want(ins[0]).then(|| g.zip_map(val(ins[1]), |g, b| g * b)),
                want(ins[1]).then(|| g.zip_map(val(ins[0]), |g, a| g * a)),
            ],
            OpKind::MatMul => {
                let (a, b) = (val(ins[0]), val(ins[1]));
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                let ga = want(ins[0]).then(|| {
                    let mut out = vec![0.0; m * k];
                    // g[m,n] · bᵀ[n,k]
                    gemm(m, n, k, g.data(), (n as isize, 1), b.data(), (1, n as isize), &mut out);
                    Tensor::new(vec![m, k], out).unwrap()
                });
                let gb = want(ins[1]).then(|| {
                    let mut out = vec![0.0; k * n];
                    // aᵀ[k,m] · g[m,n]
                    gemm(k, m, n, a.data(), (1, k as isize), g.data(), (n as isize, 1), &mut out);
                    Tensor::new(vec![k, n], out).unwrap()
                });
                vec![ga, gb]
            }
            OpKind::Concat => {
                let (a, b) = (val(ins[0]), val(ins[1]));
                let (wa, wb) = (a.last_dim(), b.last_dim());
                let split = |first: bool, src: &Tensor| {
                    let mut out = Vec::with_capacity(src.len());
                    for row in g.rows() {
                        out.extend_from_slice(if first { &row[..wa] } else { &row[wa..wa + wb] });
                    }
                    Tensor::new(src.shape().to_vec(), out).unwrap()
                };
                vec![
                    want(ins[0]).then(|| split(true, a)),
                    want(ins[1]).then(|| split(false, b)),
                ]
            }
            OpKind::Mean => {
                let a = val(ins[0]);
                vec![Some(Tensor::filled(a.shape(), g.item() / a.len() as f64))]
            }
            OpKind::Abs => vec![Some(g.zip_map(val(ins[0]), |g, x| {
                if x > 0.0 {
                    g
                } else if x < 0.0 {
                    -g
                } else {
                    0.0
                }
            }))],
            OpKind::LeakyRelu(s) => {
                vec![Some(g.zip_map(val(ins[0]), |g, x| if x > 0.0 { g } else { s * g }))]
            }
            OpKind::Tanh => vec![Some(g.zip_map(&node.value, |g, y| g * (1.0 - y * y)))],
            OpKind::Sigmoid => vec![Some(g.zip_map(&node.value, |g, y| g * y * (1.0 - y)))],
            OpKind::BceWithLogits(t) => {
                vec![Some(g.zip_map(val(ins[0]), |g, x| g * (sigmoid(x) - t)))]
            }
            OpKind::ScalarMul(c) => vec![Some(g.map(|g| g * c))],
            OpKind::Reciprocal(_) => vec![Some(g.zip_map(&node.value, |g, y| -g * y * y))],
        }
    }
}

/// Compares reverse-mode gradients of `program` at `point` against central
/// finite differences and returns the largest relative error.
///
/// Input elements with magnitude below `1e-3` are shifted by `+1e-3` first so
/// kinks at zero (abs, leaky_relu) are not straddled by the difference stencil.
/// Relative error is `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn grad_check<F>(program: F, point: &[Tensor], eps: f64) -> Result<f64, AutodiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, AutodiffError>,
{
    assert!(eps > 0.0, "eps must be positive");
    let point: Vec<Tensor> = point
        .iter()
        .map(|t| t.map(|x| if x.abs() < 1e-3 { x + 1e-3 } else { x }))
        .collect();

    let eval = |inputs: &[Tensor]| -> Result<f64, AutodiffError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = program(&mut tape, &vars)?;
        let v = tape.value(out);
        if !v.is_scalar() {
            return Err(AutodiffError::NonScalarLoss(v.shape().to_vec()));
        }
        let v = v.item();
        if !v.is_finite() {
            return Err(AutodiffError::NonFinite);
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = point.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = program(&mut tape, &vars)?;
    if !tape.value(loss).all_finite() {
        return Err(AutodiffError::NonFinite);
    }
    let grads = tape.backward(loss)?;

    let mut worst = 0.0f64;
    let mut probe = point.clone();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads
            .get(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(point[i].shape()));
        for j in 0..point[i].len() {
            let x = point[i].data()[j];
            probe[i].data_mut()[j] = x + eps;
            let fp = eval(&probe)?;
            probe[i].data_mut()[j] = x - eps;
            let fm = eval(&probe)?;
            probe[i].data_mut()[j] = x;
            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic.data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
