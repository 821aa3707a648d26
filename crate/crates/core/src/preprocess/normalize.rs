//! Body-weight / body-weight·height normalization of force and moment targets.

use plantar_autodiff::Tensor;

use super::types::{SubjectMeta, NUM_CHANNELS};
use crate::error::{contract, Result};

pub const GRAVITY: f64 = 9.81;

/// Per-channel divisors: body weight (N) for forces, body weight × height (N·m) for moments.
pub fn channel_scales(subject: &SubjectMeta) -> Result<[f64; NUM_CHANNELS]> {
    subject.validate()?;
    let bw = subject.weight_kg * GRAVITY;
    let bwh = bw * subject.height_mm / 1000.0;
    Ok([bw, bw, bw, bwh, bwh, bwh])
}

/// Joins L×3 forces (N) and L×3 moments (N·m) into normalized L×6 targets.
pub fn normalize_targets(grf: &Tensor, grm: &Tensor, subject: &SubjectMeta) -> Result<Tensor> {
    let (gs, ms) = (grf.shape(), grm.shape());
    if gs.len() != 2 || gs[1] != 3 || gs != ms {
        return Err(contract(format!("expected matching L×3 force and moment arrays, got {gs:?} and {ms:?}")));
    }
    let scale = channel_scales(subject)?;
    let l = gs[0];
    let mut out = Vec::with_capacity(l * NUM_CHANNELS);
    for t in 0..l {
        for c in 0..3 {
            out.push(grf.data()[t * 3 + c] / scale[c]);
        }
        for c in 0..3 {
            out.push(grm.data()[t * 3 + c] / scale[3 + c]);
        }
    }
    Ok(Tensor::new([l, NUM_CHANNELS], out)?)
}

/// Normalizes an already-joined T×6 force/moment array in place of [`normalize_targets`].
pub fn normalize_joined(raw: &Tensor, subject: &SubjectMeta) -> Result<Tensor> {
    let scale = channel_scales(subject)?;
    check_joined(raw)?;
    Ok(Tensor::from_fn(raw.shape().to_vec(), |i| raw.data()[i] / scale[i % NUM_CHANNELS]))
}

/// Inverse of [`normalize_targets`]: returns physical units as one L×6 array.
pub fn denormalize_targets(targets: &Tensor, subject: &SubjectMeta) -> Result<Tensor> {
    let scale = channel_scales(subject)?;
    check_joined(targets)?;
    Ok(Tensor::from_fn(targets.shape().to_vec(), |i| targets.data()[i] * scale[i % NUM_CHANNELS]))
}

fn check_joined(t: &Tensor) -> Result<()> {
    if t.rank() != 2 || t.shape()[1] != NUM_CHANNELS {
        return Err(contract(format!("expected L×6 targets, got {:?}", t.shape())));
    }
    Ok(())
}
