//! Regression loss and the temporal-prior attention regularizer.

use plantar_autodiff::{Tape, Tensor, Var};

use crate::error::{contract, Result};
use crate::model::{Batch, ForwardVars};
use crate::priors::{PartitionMap, TemporalPrior, NUM_REGIONS};

/// Mean over all elements of the squared difference.
pub fn mse_loss(t: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    if t.shape(pred) != t.shape(target) {
        return Err(contract(format!(
            "mse shapes differ: {:?} vs {:?}",
            t.shape(pred),
            t.shape(target)
        )));
    }
    let d = t.sub(pred, target)?;
    let sq = t.mul(d, d)?;
    Ok(t.mean(sq)?)
}

/// Mean pressure over the active (non-background) cells of each encoder
/// cell's source block, for every frame: B×L×H×W → B×L×N.
pub fn cell_pressures(pressure: &Tensor, partition: &PartitionMap, block: usize) -> Result<Tensor> {
    let s = pressure.shape();
    if s.len() != 4 || s[2] != partition.h || s[3] != partition.w || s[2] % block != 0 || s[3] % block != 0 {
        return Err(contract(format!(
            "pressure {s:?} incompatible with partition {}×{} and block {block}",
            partition.h, partition.w
        )));
    }
    let (b, l, h, w) = (s[0], s[1], s[2], s[3]);
    let (ch, cw) = (h / block, w / block);
    let area = (block * block) as f64;
    let d = pressure.data();
    let mut out = vec![0.0; b * l * ch * cw];
    for f in 0..b * l {
        let frame = &d[f * h * w..(f + 1) * h * w];
        for r in 0..h {
            for c in 0..w {
                if partition.labels[r * w + c] >= 0 {
                    out[f * ch * cw + (r / block) * cw + c / block] += frame[r * w + c] / area;
                }
            }
        }
    }
    Ok(Tensor::new([b, l, ch * cw], out)?)
}

/// Inputs the regularizer needs besides the attention weights.
#[derive(Debug, Clone, Copy)]
pub struct PriorInputs<'a> {
    pub temporal: &'a TemporalPrior,
    pub partition: &'a PartitionMap,
    /// Source-grid block size per encoder cell.
    pub block: usize,
}

/// Mean over frames of `KL(P_t ‖ â_t)`.
///
/// Prototype activity `a_k` is the attention-weighted cell pressure of
/// region k's weight row; `â = (a + ε) / Σ_j (a_j + ε)` with the prior's ε.
pub fn prior_regularization(t: &mut Tape, attention: Var, pressure: &Tensor, prior: PriorInputs<'_>) -> Result<Var> {
    let s = t.shape(attention).to_vec();
    if s.len() != 4 || s[2] != NUM_REGIONS {
        return Err(contract(format!("attention must be B×L×{NUM_REGIONS}×N, got {s:?}")));
    }
    let (b, l, r, n) = (s[0], s[1], s[2], s[3]);
    if prior.temporal.p.shape() != [l, r] {
        return Err(contract(format!(
            "temporal prior {:?} does not match stance length {l}",
            prior.temporal.p.shape()
        )));
    }
    let cells = cell_pressures(pressure, prior.partition, prior.block)?;
    if cells.shape()[2] != n {
        return Err(contract(format!("attention has {n} cells, pressure blocks give {}", cells.shape()[2])));
    }
    let eps = prior.temporal.epsilon;
    let frames = b * l;

    let w = t.reshape(attention, [frames, r, n])?;
    let p = t.constant(cells.reshape([frames, n, 1])?);
    let a = t.matmul(w, p)?;
    let a = t.reshape(a, [b, l, r])?;
    let eps_v = t.constant(Tensor::scalar(eps));
    let a = t.add(a, eps_v)?;
    let log_a = t.log(a)?;
    let a_flat = t.reshape(a, [frames, r])?;
    let ones = t.constant(Tensor::ones([r, 1]));
    let z = t.matmul(a_flat, ones)?;
    let log_z = t.log(z)?;

    // Σ_t Σ_k P log P is constant per frame
    let neg_entropy: f64 = prior.temporal.p.data().iter().map(|&q| q * q.ln()).sum();
    let pv = t.constant(prior.temporal.p.clone());
    let cross = t.mul(log_a, pv)?;
    let cross = t.sum(cross)?;
    let norm = t.sum(log_z)?;
    let c = t.constant(Tensor::scalar(b as f64 * neg_entropy));
    let kl = t.sub(c, cross)?;
    let kl = t.add(kl, norm)?;
    Ok(t.scale(kl, 1.0 / frames as f64)?)
}

/// `mse + β·prior` (the prior term is skipped when β is 0 or the variant has no attention).
pub fn total_loss(
    t: &mut Tape,
    vars: &ForwardVars,
    batch: &Batch,
    prior: Option<PriorInputs<'_>>,
    beta: f64,
) -> Result<Var> {
    let target = t.constant(batch.targets.clone());
    let mse = mse_loss(t, vars.y_hat, target)?;
    match (vars.attention, prior) {
        (Some(att), Some(prior)) if beta != 0.0 => {
            let reg = prior_regularization(t, att, &batch.pressure, prior)?;
            let reg = t.scale(reg, beta)?;
            Ok(t.add(mse, reg)?)
        }
        _ => Ok(mse),
    }
}

/// KL(p ‖ q) for two discrete distributions.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}
