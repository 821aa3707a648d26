use plantar_autodiff::{BatchNormMode, Mode, Tape, Var};

use super::params::Bound;
use crate::error::Result;

/// `y = x·W + b` over the last axis; `W` is in×out.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn bind(p: &Bound, prefix: &str) -> Result<Self> {
        Ok(Linear {
            weight: p.get(&format!("{prefix}.weight"))?,
            bias: p.get(&format!("{prefix}.bias"))?,
        })
    }

    pub fn apply(&self, t: &mut Tape, x: Var) -> Result<Var> {
        let y = t.matmul(x, self.weight)?;
        Ok(t.add(y, self.bias)?)
    }
}

/// Linear → ReLU → Linear.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    pub fn bind(p: &Bound, prefix: &str) -> Result<Self> {
        Ok(Mlp {
            fc1: Linear::bind(p, &format!("{prefix}.fc1"))?,
            fc2: Linear::bind(p, &format!("{prefix}.fc2"))?,
        })
    }

    pub fn apply(&self, t: &mut Tape, x: Var) -> Result<Var> {
        let h = self.fc1.apply(t, x)?;
        let h = t.relu(h)?;
        self.fc2.apply(t, h)
    }
}

#[derive(Debug, Clone, Copy)]
struct LstmDir {
    w_ih: Var,
    w_hh: Var,
    bias: Var,
}

impl LstmDir {
    fn bind(p: &Bound, prefix: &str) -> Result<Self> {
        Ok(LstmDir {
            w_ih: p.get(&format!("{prefix}.w_ih"))?,
            w_hh: p.get(&format!("{prefix}.w_hh"))?,
            bias: p.get(&format!("{prefix}.bias"))?,
        })
    }

    /// Runs over a B×L×in sequence; returns B×L×h outputs in time order.
    fn run(&self, t: &mut Tape, x: Var, reverse: bool) -> Result<Var> {
        let (b, l) = (t.shape(x)[0], t.shape(x)[1]);
        let h = t.shape(self.w_hh)[0];
        // input contributions for every step at once: B×L×4h
        let xw = t.matmul(x, self.w_ih)?;
        let xw = t.add(xw, self.bias)?;
        let mut state: Option<(Var, Var)> = None;
        let mut outs = vec![None; l];
        let order: Vec<usize> = if reverse { (0..l).rev().collect() } else { (0..l).collect() };
        for step in order {
            let g = t.slice(xw, 1, step, 1)?;
            let mut g = t.reshape(g, [b, 4 * h])?;
            if let Some((hp, _)) = state {
                let r = t.matmul(hp, self.w_hh)?;
                g = t.add(g, r)?;
            }
            let i = t.slice(g, 1, 0, h)?;
            let i = t.sigmoid(i)?;
            let f = t.slice(g, 1, h, h)?;
            let f = t.sigmoid(f)?;
            let gg = t.slice(g, 1, 2 * h, h)?;
            let gg = t.tanh(gg)?;
            let o = t.slice(g, 1, 3 * h, h)?;
            let o = t.sigmoid(o)?;
            let ig = t.mul(i, gg)?;
            let c = match state {
                Some((_, cp)) => {
                    let fc = t.mul(f, cp)?;
                    t.add(fc, ig)?
                }
                None => ig,
            };
            let tc = t.tanh(c)?;
            let hn = t.mul(o, tc)?;
            state = Some((hn, c));
            outs[step] = Some(t.reshape(hn, [b, 1, h])?);
        }
        let outs: Vec<Var> = outs.into_iter().map(|v| v.expect("every step visited")).collect();
        Ok(t.concat(&outs, 1)?)
    }
}

/// Stacked bidirectional LSTM; each layer concatenates forward and backward
/// states, giving B×L×2h.
#[derive(Debug, Clone)]
pub struct BiLstm {
    layers: Vec<(LstmDir, LstmDir)>,
}

impl BiLstm {
    pub fn bind(p: &Bound, prefix: &str, layers: usize) -> Result<Self> {
        let layers = (0..layers)
            .map(|l| {
                Ok((
                    LstmDir::bind(p, &format!("{prefix}.l{l}.fwd"))?,
                    LstmDir::bind(p, &format!("{prefix}.l{l}.bwd"))?,
                ))
            })
            .collect::<Result<_>>()?;
        Ok(BiLstm { layers })
    }

    /// Dropout of `rate` is applied between layers in train mode; `seed` feeds
    /// the masks.
    pub fn apply(&self, t: &mut Tape, x: Var, rate: f64, mode: Mode, seed: &mut impl FnMut() -> u64) -> Result<Var> {
        let mut x = x;
        for (i, (fwd, bwd)) in self.layers.iter().enumerate() {
            if i > 0 {
                x = t.dropout(x, rate, mode, seed())?;
            }
            let a = fwd.run(t, x, false)?;
            let b = bwd.run(t, x, true)?;
            x = t.concat(&[a, b], 2)?;
        }
        Ok(x)
    }
}

/// conv3×3 (no bias) → batch norm → ReLU. Returns the output and the
/// batch-norm node, whose batch statistics update the running buffers.
pub fn conv_block(
    t: &mut Tape,
    x: Var,
    kernel: Var,
    gamma: Var,
    beta: Var,
    stride: usize,
    bn: BatchNormMode,
) -> Result<(Var, Var)> {
    let y = t.conv2d(x, kernel, None, stride, 1)?;
    let n = t.batch_norm(y, gamma, beta, BN_EPS, bn)?;
    Ok((t.relu(n)?, n))
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
