//! AdamW with decoupled weight decay, and the cosine learning-rate schedule.

use std::collections::BTreeMap;

use plantar_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::model::ParameterStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// First and second moments per parameter plus the step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState {
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn for_store(store: &ParameterStore) -> Self {
        let zeros: BTreeMap<String, Tensor> = store
            .params
            .iter()
            .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape().to_vec())))
            .collect();
        AdamState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One AdamW update of every parameter in `store`.
///
/// Decay `p ← p − lr·wd·p` is applied first, then the bias-corrected adaptive
/// step. Gradients are checked for NaN/∞ before anything is modified.
pub fn adamw_step(
    store: &mut ParameterStore,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    opt: &AdamW,
    lr: f64,
) -> Result<()> {
    for (name, g) in grads {
        if !g.all_finite() {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    state.step += 1;
    let bc1 = 1.0 - opt.beta1.powi(state.step as i32);
    let bc2 = 1.0 - opt.beta2.powi(state.step as i32);
    for (name, p) in store.params.iter_mut() {
        let g = grads
            .get(name)
            .ok_or_else(|| contract(format!("no gradient for parameter `{name}`")))?;
        let m = state.m.get_mut(name).ok_or_else(|| contract(format!("no moment for `{name}`")))?;
        let v = state.v.get_mut(name).ok_or_else(|| contract(format!("no moment for `{name}`")))?;
        let (pd, gd) = (p.data_mut(), g.data());
        for i in 0..pd.len() {
            let gi = gd[i];
            let mi = &mut m.data_mut()[i];
            *mi = opt.beta1 * *mi + (1.0 - opt.beta1) * gi;
            let mhat = *mi / bc1;
            let vi = &mut v.data_mut()[i];
            *vi = opt.beta2 * *vi + (1.0 - opt.beta2) * gi * gi;
            let vhat = *vi / bc2;
            pd[i] -= lr * opt.weight_decay * pd[i];
            pd[i] -= lr * mhat / (vhat.sqrt() + opt.eps);
        }
    }
    Ok(())
}

/// `min + ½(base − min)(1 + cos(π·epoch/max_epochs))` for 0 ≤ epoch < max_epochs.
pub fn cosine_lr(epoch: usize, max_epochs: usize, base_lr: f64, min_lr: f64) -> Result<f64> {
    if epoch >= max_epochs {
        return Err(contract(format!("epoch {epoch} outside [0, {max_epochs})")));
    }
    let c = (std::f64::consts::PI * epoch as f64 / max_epochs as f64).cos();
    Ok(min_lr + 0.5 * (base_lr - min_lr) * (1.0 + c))
}
