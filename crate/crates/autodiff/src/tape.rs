use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::kernels::{self, ConvGeom};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Train/infer switch for ops whose behaviour differs between the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BatchNormMode {
    /// Normalize with statistics of the current batch.
    Train,
    /// Normalize with stored per-channel statistics.
    Infer { mean: Vec<f64>, var: Vec<f64> },
}

/// Per-channel statistics of a training-mode batchnorm call.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Unbiased (n−1) variance, for running-average updates.
    pub var: Vec<f64>,
}

/// Differentiable operations together with their static attributes.
#[derive(Debug, Clone, PartialEq)]
pub enum OpKind {
    /// `[.., m, k] x [k, n]` or batched `[.., m, k] x [.., k, n]` with equal leading dims.
    Matmul,
    /// `[n, c_in, h, w] * [c_out, c_in, k, k]` (+ optional `[c_out]` bias), zero padded.
    Conv2d { stride: usize, pad: usize },
    Add,
    Sub,
    Mul,
    Scale(f64),
    Concat { axis: usize },
    Reshape { shape: Vec<usize> },
    Transpose { perm: Vec<usize> },
    SoftmaxLastAxis,
    Relu,
    Sigmoid,
    Tanh,
    Log,
    Mean,
    Sum,
    /// Inputs: `x [n, c, ..]`, `gamma [c]`, `beta [c]`.
    BatchNorm { eps: f64, mode: BatchNormMode },
    /// Inverted dropout; the mask comes from a generator seeded with `seed`.
    Dropout { rate: f64, mode: Mode, seed: u64 },
    Slice { axis: usize, start: usize, len: usize },
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Matmul => "matmul",
            OpKind::Conv2d { .. } => "conv2d",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Scale(_) => "scale",
            OpKind::Concat { .. } => "concat",
            OpKind::Reshape { .. } => "reshape",
            OpKind::Transpose { .. } => "transpose",
            OpKind::SoftmaxLastAxis => "softmax-last-axis",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::Log => "log",
            OpKind::Mean => "mean",
            OpKind::Sum => "sum",
            OpKind::BatchNorm { .. } => "batchnorm",
            OpKind::Dropout { .. } => "dropout",
            OpKind::Slice { .. } => "slice",
        }
    }
}

type CustomBackward = Box<dyn Fn(&Tensor, &[&Tensor]) -> Vec<Tensor>>;

enum Rule {
    Leaf,
    Constant,
    Op { op: OpKind, saved: Saved },
    Custom { name: String, backward: CustomBackward },
}

enum Saved {
    None,
    Mask(Vec<f64>),
    BatchNorm {
        x_hat: Vec<f64>,
        inv_std: Vec<f64>,
        train: bool,
        stats: Option<BatchStats>,
    },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    inputs: Vec<Var>,
    rule: Rule,
}

/// How the right operand of an elementwise binary op lines up with the left.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    Scalar,
    /// Right shape equals a trailing suffix of the left shape.
    Suffix,
}

fn broadcast_kind(op: &'static str, a: &[usize], b: &[usize]) -> Result<Broadcast> {
    if a == b {
        return Ok(Broadcast::Same);
    }
    if b.iter().product::<usize>() == 1 {
        return Ok(Broadcast::Scalar);
    }
    if b.len() < a.len() && a[a.len() - b.len()..] == *b {
        return Ok(Broadcast::Suffix);
    }
    Err(TensorError::dim(
        op,
        format!("right operand {b:?} does not broadcast against {a:?}"),
    ))
}

/// Sums `g` (shaped like the left operand) down to the right operand's layout.
fn reduce_broadcast(g: &[f64], kind: Broadcast, b_len: usize) -> Vec<f64> {
    match kind {
        Broadcast::Same => g.to_vec(),
        Broadcast::Scalar => vec![g.iter().sum()],
        Broadcast::Suffix => {
            let mut out = vec![0.0; b_len];
            for chunk in g.chunks(b_len) {
                for (o, v) in out.iter_mut().zip(chunk) {
                    *o += v;
                }
            }
            out
        }
    }
}

fn rhs_at(b: &[f64], kind: Broadcast, i: usize) -> f64 {
    match kind {
        Broadcast::Same => b[i],
        Broadcast::Scalar => b[0],
        Broadcast::Suffix => b[i % b.len()],
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Resolved batching layout of a matmul.
struct MatmulLayout {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    rhs_batched: bool,
    out_shape: Vec<usize>,
}

fn matmul_layout(a: &[usize], b: &[usize]) -> Result<MatmulLayout> {
    if a.len() < 2 || b.len() < 2 {
        return Err(TensorError::dim(
            "matmul",
            format!("operands must have rank >= 2, got {a:?} and {b:?}"),
        ));
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (kb, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != kb {
        return Err(TensorError::dim(
            "matmul",
            format!("inner axes differ: lhs axis {} = {k}, rhs axis {} = {kb}", a.len() - 1, b.len() - 2),
        ));
    }
    let batch_a: usize = a[..a.len() - 2].iter().product();
    let mut out_shape = a[..a.len() - 2].to_vec();
    out_shape.extend([m, n]);
    if b.len() == 2 {
        return Ok(MatmulLayout {
            batch: batch_a,
            m,
            k,
            n,
            rhs_batched: false,
            out_shape,
        });
    }
    if a.len() != b.len() || a[..a.len() - 2] != b[..b.len() - 2] {
        return Err(TensorError::dim(
            "matmul",
            format!("batched operands need equal leading axes, got {a:?} and {b:?}"),
        ));
    }
    Ok(MatmulLayout {
        batch: batch_a,
        m,
        k,
        n,
        rhs_batched: true,
        out_shape,
    })
}

/// Gradients of a scalar output with respect to every grad-requiring leaf.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    grads: BTreeMap<Var, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(&var)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.remove(&var)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Tensor)> {
        self.grads.iter().map(|(v, t)| (*v, t))
    }
}

/// Ordered record of a forward computation, replayed in reverse by [`Tape::backward`].
///
/// Nodes are appended in execution order, so every node's inputs precede it and
/// the reverse sweep is a valid topological order. A tape is single-use: after
/// one backward pass it is consumed.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape")
            .field("nodes", &self.nodes.len())
            .field("consumed", &self.consumed)
            .finish()
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

    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, inputs: Vec<Var>, rule: Rule) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            inputs,
            rule,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a trainable input whose gradient will be reported.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, true, Vec::new(), Rule::Leaf)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Vec::new(), Rule::Constant)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Batch statistics recorded by a training-mode batchnorm node.
    pub fn batch_stats(&self, var: Var) -> Option<&BatchStats> {
        match &self.nodes[var.0].rule {
            Rule::Op {
                saved: Saved::BatchNorm { stats, .. },
                ..
            } => stats.as_ref(),
            _ => None,
        }
    }

    /// Records an op with a caller-supplied backward rule.
    ///
    /// `backward` receives the output gradient and the input values and must
    /// return one gradient per input, each shaped like that input.
    pub fn custom(
        &mut self,
        name: impl Into<String>,
        inputs: &[Var],
        value: Tensor,
        backward: impl Fn(&Tensor, &[&Tensor]) -> Vec<Tensor> + 'static,
    ) -> Var {
        let requires_grad = inputs.iter().any(|&v| self.requires_grad(v));
        self.push(
            value,
            requires_grad,
            inputs.to_vec(),
            Rule::Custom {
                name: name.into(),
                backward: Box::new(backward),
            },
        )
    }

    /// Executes `op` on `inputs` and records it.
    pub fn apply(&mut self, op: OpKind, inputs: &[Var]) -> Result<Var> {
        let (value, saved) = self.forward(&op, inputs)?;
        let requires_grad = inputs.iter().any(|&v| self.requires_grad(v));
        Ok(self.push(value, requires_grad, inputs.to_vec(), Rule::Op { op, saved }))
    }

    fn expect_arity(op: &OpKind, inputs: &[Var], n: usize) -> Result<()> {
        if inputs.len() != n {
            return Err(TensorError::Contract(format!(
                "{} takes {n} inputs, got {}",
                op.name(),
                inputs.len()
            )));
        }
        Ok(())
    }

    fn forward(&self, op: &OpKind, inputs: &[Var]) -> Result<(Tensor, Saved)> {
        let val = |i: usize| &self.nodes[inputs[i].0].value;
        let unary = |f: &dyn Fn(f64) -> f64| -> Result<(Tensor, Saved)> {
            Self::expect_arity(op, inputs, 1)?;
            Ok((val(0).map(f), Saved::None))
        };
        match op {
            OpKind::Matmul => {
                Self::expect_arity(op, inputs, 2)?;
                let (a, b) = (val(0), val(1));
                let lay = matmul_layout(a.shape(), b.shape())?;
                let mut out = vec![0.0; lay.batch * lay.m * lay.n];
                if lay.rhs_batched {
                    for bi in 0..lay.batch {
                        kernels::gemm_acc(
                            lay.m,
                            lay.k,
                            lay.n,
                            &a.data()[bi * lay.m * lay.k..(bi + 1) * lay.m * lay.k],
                            false,
                            &b.data()[bi * lay.k * lay.n..(bi + 1) * lay.k * lay.n],
                            false,
                            &mut out[bi * lay.m * lay.n..(bi + 1) * lay.m * lay.n],
                        );
                    }
                } else {
                    kernels::gemm_acc(lay.batch * lay.m, lay.k, lay.n, a.data(), false, b.data(), false, &mut out);
                }
                Ok((Tensor::from_parts(lay.out_shape, out), Saved::None))
            }
            OpKind::Conv2d { stride, pad } => {
                if inputs.len() != 2 && inputs.len() != 3 {
                    return Err(TensorError::Contract(format!(
                        "conv2d takes 2 or 3 inputs, got {}",
                        inputs.len()
                    )));
                }
                let (x, w) = (val(0), val(1));
                let (xs, ws) = (x.shape(), w.shape());
                if xs.len() != 4 || ws.len() != 4 {
                    return Err(TensorError::dim(
                        "conv2d",
                        format!("input {xs:?} and kernel {ws:?} must both be rank 4"),
                    ));
                }
                if xs[1] != ws[1] {
                    return Err(TensorError::dim(
                        "conv2d",
                        format!("input axis 1 = {} but kernel axis 1 = {}", xs[1], ws[1]),
                    ));
                }
                if ws[2] != ws[3] {
                    return Err(TensorError::dim(
                        "conv2d",
                        format!("kernel axes 2 and 3 must match, got {ws:?}"),
                    ));
                }
                let (n, c_out) = (xs[0], ws[0]);
                let g = ConvGeom::new(xs[1], xs[2], xs[3], ws[2], *stride, *pad).ok_or_else(|| {
                    TensorError::dim(
                        "conv2d",
                        format!("kernel {} stride {stride} pad {pad} does not fit input axes 2,3 {xs:?}", ws[2]),
                    )
                })?;
                let bias = if inputs.len() == 3 {
                    let b = val(2);
                    if b.shape() != [c_out] {
                        return Err(TensorError::dim(
                            "conv2d",
                            format!("bias {:?} must be [{c_out}]", b.shape()),
                        ));
                    }
                    Some(b.data())
                } else {
                    None
                };
                let (rows, cols) = (g.col_rows(), g.col_cols());
                let mut col_buf = vec![0.0; rows * cols];
                let img_len = g.c_in * g.h * g.w;
                let out_len = c_out * cols;
                let mut out = vec![0.0; n * out_len];
                for s in 0..n {
                    kernels::im2col(&x.data()[s * img_len..(s + 1) * img_len], &g, &mut col_buf);
                    let dst = &mut out[s * out_len..(s + 1) * out_len];
                    if let Some(b) = bias {
                        for (co, chunk) in dst.chunks_mut(cols).enumerate() {
                            chunk.fill(b[co]);
                        }
                    }
                    kernels::gemm_acc(c_out, rows, cols, w.data(), false, &col_buf, false, dst);
                }
                Ok((
                    Tensor::from_parts(vec![n, c_out, g.h_out, g.w_out], out),
                    Saved::None,
                ))
            }
            OpKind::Add | OpKind::Sub | OpKind::Mul => {
                Self::expect_arity(op, inputs, 2)?;
                let (a, b) = (val(0), val(1));
                let kind = broadcast_kind(op.name(), a.shape(), b.shape())?;
                let f: fn(f64, f64) -> f64 = match op {
                    OpKind::Add => |x, y| x + y,
                    OpKind::Sub => |x, y| x - y,
                    _ => |x, y| x * y,
                };
                let data = a
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| f(x, rhs_at(b.data(), kind, i)))
                    .collect();
                Ok((Tensor::from_parts(a.shape().to_vec(), data), Saved::None))
            }
            OpKind::Scale(c) => {
                let c = *c;
                unary(&move |x| c * x)
            }
            OpKind::Concat { axis } => {
                if inputs.is_empty() {
                    return Err(TensorError::Contract("concat needs at least one input".into()));
                }
                let first = val(0).shape().to_vec();
                if *axis >= first.len() {
                    return Err(TensorError::dim(
                        "concat",
                        format!("axis {axis} out of range for rank {}", first.len()),
                    ));
                }
                let mut total = 0;
                for i in 0..inputs.len() {
                    let s = val(i).shape();
                    let compatible = s.len() == first.len()
                        && s.iter().zip(&first).enumerate().all(|(ax, (x, y))| ax == *axis || x == y);
                    if !compatible {
                        return Err(TensorError::dim(
                            "concat",
                            format!("input {i} shape {s:?} incompatible with {first:?} off axis {axis}"),
                        ));
                    }
                    total += s[*axis];
                }
                let (outer, _, inner) = kernels::axis_split(&first, *axis);
                let mut out = Vec::with_capacity(outer * total * inner);
                for o in 0..outer {
                    for i in 0..inputs.len() {
                        let t = val(i);
                        let block = t.shape()[*axis] * inner;
                        out.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
                    }
                }
                let mut shape = first;
                shape[*axis] = total;
                Ok((Tensor::from_parts(shape, out), Saved::None))
            }
            OpKind::Reshape { shape } => {
                Self::expect_arity(op, inputs, 1)?;
                Ok((val(0).reshape(shape.clone())?, Saved::None))
            }
            OpKind::Transpose { perm } => {
                Self::expect_arity(op, inputs, 1)?;
                let x = val(0);
                let mut seen = vec![false; x.rank()];
                let valid = perm.len() == x.rank()
                    && perm.iter().all(|&p| p < x.rank() && !std::mem::replace(&mut seen[p], true));
                if !valid {
                    return Err(TensorError::dim(
                        "transpose",
                        format!("{perm:?} is not a permutation of the axes of {:?}", x.shape()),
                    ));
                }
                let (shape, data) = kernels::permute(x.data(), x.shape(), perm);
                Ok((Tensor::from_parts(shape, data), Saved::None))
            }
            OpKind::SoftmaxLastAxis => {
                Self::expect_arity(op, inputs, 1)?;
                let x = val(0);
                let n = *x.shape().last().unwrap();
                let mut out = x.data().to_vec();
                for row in out.chunks_mut(n) {
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mut z = 0.0;
                    for v in row.iter_mut() {
                        *v = (*v - max).exp();
                        z += *v;
                    }
                    for v in row.iter_mut() {
                        *v /= z;
                    }
                }
                Ok((Tensor::from_parts(x.shape().to_vec(), out), Saved::None))
            }
            OpKind::Relu => unary(&|x| x.max(0.0)),
            OpKind::Sigmoid => unary(&sigmoid),
            OpKind::Tanh => unary(&f64::tanh),
            OpKind::Log => {
                Self::expect_arity(op, inputs, 1)?;
                if let Some(bad) = val(0).data().iter().find(|&&v| v <= 0.0) {
                    return Err(TensorError::Contract(format!(
                        "log of non-positive value {bad}"
                    )));
                }
                unary(&f64::ln)
            }
            OpKind::Mean | OpKind::Sum => {
                Self::expect_arity(op, inputs, 1)?;
                let x = val(0);
                let s = x.sum();
                let v = if matches!(op, OpKind::Mean) {
                    s / x.numel() as f64
                } else {
                    s
                };
                Ok((Tensor::scalar(v), Saved::None))
            }
            OpKind::BatchNorm { eps, mode } => {
                Self::expect_arity(op, inputs, 3)?;
                let (x, gamma, beta) = (val(0), val(1), val(2));
                let xs = x.shape();
                if xs.len() < 2 {
                    return Err(TensorError::dim(
                        "batchnorm",
                        format!("input {xs:?} needs a batch and a channel axis"),
                    ));
                }
                let c = xs[1];
                if gamma.shape() != [c] || beta.shape() != [c] {
                    return Err(TensorError::dim(
                        "batchnorm",
                        format!(
                            "scale {:?} / shift {:?} must match channel axis 1 = {c}",
                            gamma.shape(),
                            beta.shape()
                        ),
                    ));
                }
                let n = xs[0];
                let spatial: usize = xs[2..].iter().product();
                let count = n * spatial;
                let (mean, var, stats) = match mode {
                    BatchNormMode::Train => {
                        let mut mean = vec![0.0; c];
                        let mut var = vec![0.0; c];
                        for s in 0..n {
                            for ch in 0..c {
                                let base = (s * c + ch) * spatial;
                                mean[ch] += x.data()[base..base + spatial].iter().sum::<f64>();
                            }
                        }
                        mean.iter_mut().for_each(|m| *m /= count as f64);
                        for s in 0..n {
                            for ch in 0..c {
                                let base = (s * c + ch) * spatial;
                                var[ch] += x.data()[base..base + spatial]
                                    .iter()
                                    .map(|v| (v - mean[ch]).powi(2))
                                    .sum::<f64>();
                            }
                        }
                        let unbiased: Vec<f64> = var
                            .iter()
                            .map(|v| if count > 1 { v / (count - 1) as f64 } else { 0.0 })
                            .collect();
                        var.iter_mut().for_each(|v| *v /= count as f64);
                        let stats = BatchStats {
                            mean: mean.clone(),
                            var: unbiased,
                        };
                        (mean, var, Some(stats))
                    }
                    BatchNormMode::Infer { mean, var } => {
                        if mean.len() != c || var.len() != c {
                            return Err(TensorError::dim(
                                "batchnorm",
                                format!("stored statistics must have {c} channels"),
                            ));
                        }
                        (mean.clone(), var.clone(), None)
                    }
                };
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
                let mut x_hat = vec![0.0; x.numel()];
                let mut out = vec![0.0; x.numel()];
                for s in 0..n {
                    for ch in 0..c {
                        let base = (s * c + ch) * spatial;
                        for i in base..base + spatial {
                            let h = (x.data()[i] - mean[ch]) * inv_std[ch];
                            x_hat[i] = h;
                            out[i] = gamma.data()[ch] * h + beta.data()[ch];
                        }
                    }
                }
                Ok((
                    Tensor::from_parts(xs.to_vec(), out),
                    Saved::BatchNorm {
                        x_hat,
                        inv_std,
                        train: matches!(mode, BatchNormMode::Train),
                        stats,
                    },
                ))
            }
            OpKind::Dropout { rate, mode, seed } => {
                Self::expect_arity(op, inputs, 1)?;
                if !(0.0..1.0).contains(rate) {
                    return Err(TensorError::Contract(format!("dropout rate {rate} outside [0, 1)")));
                }
                let x = val(0);
                if *mode == Mode::Infer || *rate == 0.0 {
                    return Ok((x.clone(), Saved::None));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let keep = 1.0 / (1.0 - rate);
                let mask: Vec<f64> = (0..x.numel())
                    .map(|_| if rng.gen::<f64>() >= *rate { keep } else { 0.0 })
                    .collect();
                let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
                Ok((Tensor::from_parts(x.shape().to_vec(), data), Saved::Mask(mask)))
            }
            OpKind::Slice { axis, start, len } => {
                Self::expect_arity(op, inputs, 1)?;
                let x = val(0);
                if *axis >= x.rank() || *len == 0 || start + len > x.shape()[*axis] {
                    return Err(TensorError::dim(
                        "slice",
                        format!("[{start}, {}) on axis {axis} of {:?}", start + len, x.shape()),
                    ));
                }
                let (outer, alen, inner) = kernels::axis_split(x.shape(), *axis);
                let mut out = Vec::with_capacity(outer * len * inner);
                for o in 0..outer {
                    let base = (o * alen + start) * inner;
                    out.extend_from_slice(&x.data()[base..base + len * inner]);
                }
                let mut shape = x.shape().to_vec();
                shape[*axis] = *len;
                Ok((Tensor::from_parts(shape, out), Saved::None))
            }
        }
    }

    /// Reverse sweep from a scalar `output`.
    ///
    /// Returns the gradient of `output` for every leaf on the tape (zeros for
    /// leaves it does not depend on). Consumes the tape.
    pub fn backward(&mut self, output: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(TensorError::State("backward called on a consumed tape".into()));
        }
        if output.0 >= self.nodes.len() {
            return Err(TensorError::Contract(format!("{output:?} is not on this tape")));
        }
        if !self.nodes[output.0].value.is_scalar() {
            return Err(TensorError::Contract(format!(
                "backward needs a scalar output, got shape {:?}",
                self.nodes[output.0].value.shape()
            )));
        }
        self.consumed = true;
        if !self.nodes[output.0].requires_grad {
            return Ok(Gradients::default());
        }

        let mut grads: Vec<Option<Tensor>> = (0..=output.0).map(|_| None).collect();
        grads[output.0] = Some(Tensor::from_parts(
            self.nodes[output.0].value.shape().to_vec(),
            vec![1.0],
        ));
        let mut result = Gradients::default();

        for idx in (0..=output.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                if matches!(node.rule, Rule::Leaf) {
                    result.grads.insert(Var(idx), Tensor::zeros(node.value.shape().to_vec()));
                }
                continue;
            };
            let input_grads = match &node.rule {
                Rule::Leaf => {
                    result.grads.insert(Var(idx), g);
                    continue;
                }
                Rule::Constant => continue,
                Rule::Op { op, saved } => self.backward_op(node, op, saved, &g),
                Rule::Custom { name, backward } => {
                    let vals: Vec<&Tensor> = node.inputs.iter().map(|v| &self.nodes[v.0].value).collect();
                    let gs = backward(&g, &vals);
                    if gs.len() != vals.len()
                        || gs.iter().zip(&vals).any(|(gi, vi)| gi.shape() != vi.shape())
                    {
                        return Err(TensorError::Contract(format!(
                            "custom op '{name}' returned gradients not shaped like its inputs"
                        )));
                    }
                    gs.into_iter().map(Some).collect()
                }
            };
            for (&input, ig) in node.inputs.iter().zip(input_grads) {
                let Some(ig) = ig else { continue };
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.add_assign(&ig),
                    slot @ None => *slot = Some(ig),
                }
            }
        }
        // leaves created after the output still get an entry
        for (idx, node) in self.nodes.iter().enumerate().skip(output.0 + 1) {
            if matches!(node.rule, Rule::Leaf) {
                result.grads.insert(Var(idx), Tensor::zeros(node.value.shape().to_vec()));
            }
        }
        Ok(result)
    }

    fn backward_op(&self, node: &Node, op: &OpKind, saved: &Saved, g: &Tensor) -> Vec<Option<Tensor>> {
        let input = |i: usize| &self.nodes[node.inputs[i].0].value;
        let wants = |i: usize| self.nodes[node.inputs[i].0].requires_grad;
        let like = |i: usize, data: Vec<f64>| Some(Tensor::from_parts(input(i).shape().to_vec(), data));
        let gd = g.data();
        match op {
            OpKind::Matmul => {
                let (a, b) = (input(0), input(1));
                let lay = matmul_layout(a.shape(), b.shape()).expect("validated in forward");
                let (m, k, n) = (lay.m, lay.k, lay.n);
                let mut da = wants(0).then(|| vec![0.0; a.numel()]);
                let mut db = wants(1).then(|| vec![0.0; b.numel()]);
                if lay.rhs_batched {
                    for bi in 0..lay.batch {
                        let gs = &gd[bi * m * n..(bi + 1) * m * n];
                        let asl = &a.data()[bi * m * k..(bi + 1) * m * k];
                        let bsl = &b.data()[bi * k * n..(bi + 1) * k * n];
                        if let Some(da) = da.as_mut() {
                            kernels::gemm_acc(m, n, k, gs, false, bsl, true, &mut da[bi * m * k..(bi + 1) * m * k]);
                        }
                        if let Some(db) = db.as_mut() {
                            kernels::gemm_acc(k, m, n, asl, true, gs, false, &mut db[bi * k * n..(bi + 1) * k * n]);
                        }
                    }
                } else {
                    let rows = lay.batch * m;
                    if let Some(da) = da.as_mut() {
                        kernels::gemm_acc(rows, n, k, gd, false, b.data(), true, da);
                    }
                    if let Some(db) = db.as_mut() {
                        kernels::gemm_acc(k, rows, n, a.data(), true, gd, false, db);
                    }
                }
                vec![da.and_then(|d| like(0, d)), db.and_then(|d| like(1, d))]
            }
            OpKind::Conv2d { stride, pad } => {
                let (x, w) = (input(0), input(1));
                let (xs, ws) = (x.shape(), w.shape());
                let g_geom = ConvGeom::new(xs[1], xs[2], xs[3], ws[2], *stride, *pad).expect("validated");
                let (rows, cols) = (g_geom.col_rows(), g_geom.col_cols());
                let c_out = ws[0];
                let img_len = g_geom.c_in * g_geom.h * g_geom.w;
                let out_len = c_out * cols;
                let mut dx = wants(0).then(|| vec![0.0; x.numel()]);
                let mut dw = wants(1).then(|| vec![0.0; w.numel()]);
                let mut col_buf = vec![0.0; rows * cols];
                let mut dcol = vec![0.0; rows * cols];
                for s in 0..xs[0] {
                    let gs = &gd[s * out_len..(s + 1) * out_len];
                    if let Some(dw) = dw.as_mut() {
                        kernels::im2col(&x.data()[s * img_len..(s + 1) * img_len], &g_geom, &mut col_buf);
                        kernels::gemm_acc(c_out, cols, rows, gs, false, &col_buf, true, dw);
                    }
                    if let Some(dx) = dx.as_mut() {
                        dcol.fill(0.0);
                        kernels::gemm_acc(rows, c_out, cols, w.data(), true, gs, false, &mut dcol);
                        kernels::col2im_acc(&dcol, &g_geom, &mut dx[s * img_len..(s + 1) * img_len]);
                    }
                }
                let mut out = vec![dx.and_then(|d| like(0, d)), dw.and_then(|d| like(1, d))];
                if node.inputs.len() == 3 {
                    let db = wants(2).then(|| {
                        let mut db = vec![0.0; c_out];
                        for s in 0..xs[0] {
                            for (co, chunk) in gd[s * out_len..(s + 1) * out_len].chunks(cols).enumerate() {
                                db[co] += chunk.iter().sum::<f64>();
                            }
                        }
                        db
                    });
                    out.push(db.and_then(|d| like(2, d)));
                }
                out
            }
            OpKind::Add | OpKind::Sub | OpKind::Mul => {
                let (a, b) = (input(0), input(1));
                let kind = broadcast_kind(op.name(), a.shape(), b.shape()).expect("validated");
                let (ga, gb_full): (Vec<f64>, Vec<f64>) = match op {
                    OpKind::Add => (gd.to_vec(), gd.to_vec()),
                    OpKind::Sub => (gd.to_vec(), gd.iter().map(|v| -v).collect()),
                    _ => (
                        gd.iter()
                            .enumerate()
                            .map(|(i, gv)| gv * rhs_at(b.data(), kind, i))
                            .collect(),
                        gd.iter().zip(a.data()).map(|(gv, av)| gv * av).collect(),
                    ),
                };
                vec![
                    wants(0).then(|| like(0, ga)).flatten(),
                    wants(1)
                        .then(|| like(1, reduce_broadcast(&gb_full, kind, b.numel())))
                        .flatten(),
                ]
            }
            OpKind::Scale(c) => vec![like(0, gd.iter().map(|v| c * v).collect())],
            OpKind::Concat { axis } => {
                let shape = node.value.shape();
                let (outer, total, inner) = kernels::axis_split(shape, *axis);
                let mut offset = 0;
                let mut out = Vec::with_capacity(node.inputs.len());
                for i in 0..node.inputs.len() {
                    let len = input(i).shape()[*axis];
                    if wants(i) {
                        let mut d = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let base = (o * total + offset) * inner;
                            d.extend_from_slice(&gd[base..base + len * inner]);
                        }
                        out.push(like(i, d));
                    } else {
                        out.push(None);
                    }
                    offset += len;
                }
                out
            }
            OpKind::Reshape { .. } => vec![like(0, gd.to_vec())],
            OpKind::Transpose { perm } => {
                let (_, d) = kernels::permute(gd, g.shape(), &kernels::inverse_perm(perm));
                vec![like(0, d)]
            }
            OpKind::SoftmaxLastAxis => {
                let y = node.value.data();
                let n = *node.value.shape().last().unwrap();
                let mut d = vec![0.0; y.len()];
                for ((drow, yrow), grow) in d.chunks_mut(n).zip(y.chunks(n)).zip(gd.chunks(n)) {
                    let dot: f64 = yrow.iter().zip(grow).map(|(a, b)| a * b).sum();
                    for ((dv, yv), gv) in drow.iter_mut().zip(yrow).zip(grow) {
                        *dv = yv * (gv - dot);
                    }
                }
                vec![like(0, d)]
            }
            OpKind::Relu => {
                let x = input(0).data();
                vec![like(0, gd.iter().zip(x).map(|(g, &x)| if x > 0.0 { *g } else { 0.0 }).collect())]
            }
            OpKind::Sigmoid => {
                let y = node.value.data();
                vec![like(0, gd.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect())]
            }
            OpKind::Tanh => {
                let y = node.value.data();
                vec![like(0, gd.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect())]
            }
            OpKind::Log => {
                let x = input(0).data();
                vec![like(0, gd.iter().zip(x).map(|(g, x)| g / x).collect())]
            }
            OpKind::Mean | OpKind::Sum => {
                let n = input(0).numel();
                let scale = if matches!(op, OpKind::Mean) { 1.0 / n as f64 } else { 1.0 };
                vec![like(0, vec![gd[0] * scale; n])]
            }
            OpKind::BatchNorm { .. } => {
                let Saved::BatchNorm {
                    x_hat,
                    inv_std,
                    train,
                    ..
                } = saved
                else {
                    unreachable!("batchnorm node without saved state")
                };
                let x = input(0);
                let gamma = input(1).data();
                let xs = x.shape();
                let (n, c) = (xs[0], xs[1]);
                let spatial: usize = xs[2..].iter().product();
                let count = (n * spatial) as f64;
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for s in 0..n {
                    for ch in 0..c {
                        let base = (s * c + ch) * spatial;
                        for i in base..base + spatial {
                            dbeta[ch] += gd[i];
                            dgamma[ch] += gd[i] * x_hat[i];
                        }
                    }
                }
                let dx = wants(0).then(|| {
                    let mut dx = vec![0.0; x.numel()];
                    for s in 0..n {
                        for ch in 0..c {
                            let base = (s * c + ch) * spatial;
                            for i in base..base + spatial {
                                dx[i] = if *train {
                                    // dbeta/dgamma already hold the per-channel sums of g and g·x̂
                                    gamma[ch] * inv_std[ch] / count
                                        * (count * gd[i] - dbeta[ch] - x_hat[i] * dgamma[ch])
                                } else {
                                    gamma[ch] * inv_std[ch] * gd[i]
                                };
                            }
                        }
                    }
                    dx
                });
                vec![
                    dx.and_then(|d| like(0, d)),
                    wants(1).then(|| like(1, dgamma)).flatten(),
                    wants(2).then(|| like(2, dbeta)).flatten(),
                ]
            }
            OpKind::Dropout { .. } => match saved {
                Saved::Mask(mask) => vec![like(0, gd.iter().zip(mask).map(|(g, m)| g * m).collect())],
                _ => vec![like(0, gd.to_vec())],
            },
            OpKind::Slice { axis, start, len } => {
                let x = input(0);
                let (outer, alen, inner) = kernels::axis_split(x.shape(), *axis);
                let mut d = vec![0.0; x.numel()];
                for o in 0..outer {
                    let dst = (o * alen + start) * inner;
                    let src = o * len * inner;
                    d[dst..dst + len * inner].copy_from_slice(&gd[src..src + len * inner]);
                }
                vec![like(0, d)]
            }
        }
    }
}

/// Convenience constructors, one per op.
impl Tape {
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Matmul, &[a, b])
    }

    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let op = OpKind::Conv2d { stride, pad };
        match bias {
            Some(b) => self.apply(op, &[x, kernel, b]),
            None => self.apply(op, &[x, kernel]),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Result<Var> {
        self.apply(OpKind::Scale(factor), &[x])
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        self.apply(OpKind::Concat { axis }, inputs)
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        self.apply(OpKind::Reshape { shape: shape.into() }, &[x])
    }

    pub fn transpose(&mut self, x: Var, perm: impl Into<Vec<usize>>) -> Result<Var> {
        self.apply(OpKind::Transpose { perm: perm.into() }, &[x])
    }

    /// Swaps the last two axes.
    pub fn transpose_last2(&mut self, x: Var) -> Result<Var> {
        let rank = self.shape(x).len();
        if rank < 2 {
            return Err(TensorError::dim("transpose", format!("rank {rank} < 2")));
        }
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(rank - 2, rank - 1);
        self.transpose(x, perm)
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        self.apply(OpKind::SoftmaxLastAxis, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.apply(OpKind::Relu, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.apply(OpKind::Sigmoid, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.apply(OpKind::Tanh, &[x])
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        self.apply(OpKind::Log, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.apply(OpKind::Mean, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.apply(OpKind::Sum, &[x])
    }

    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64, mode: BatchNormMode) -> Result<Var> {
        self.apply(OpKind::BatchNorm { eps, mode }, &[x, gamma, beta])
    }

    pub fn dropout(&mut self, x: Var, rate: f64, mode: Mode, seed: u64) -> Result<Var> {
        self.apply(OpKind::Dropout { rate, mode, seed }, &[x])
    }

    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        self.apply(OpKind::Slice { axis, start, len }, &[x])
    }
}
