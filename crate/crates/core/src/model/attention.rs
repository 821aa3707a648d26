use plantar_autodiff::{Tape, Tensor, Var};

use super::config::ModelConfig;
use super::layers::Linear;
use crate::error::{contract, Result};
use crate::priors::{PartitionMap, BACKGROUND, NUM_REGIONS};

/// Additive attention bias (R×N) derived from a partition map at encoder resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionPrior {
    pub bias: Tensor,
    pub lambda: f64,
    /// Region label per encoder cell (−1 for background).
    pub cell_labels: Vec<i8>,
}

/// Majority region label of each `block`×`block` source block; ties go to the
/// lowest region index, all-background blocks stay background.
pub fn downsample_labels(partition: &PartitionMap, block: usize) -> Result<Vec<i8>> {
    if block == 0 || partition.h % block != 0 || partition.w % block != 0 {
        return Err(contract(format!(
            "partition {}×{} is not divisible into {block}×{block} blocks",
            partition.h, partition.w
        )));
    }
    let (ch, cw) = (partition.h / block, partition.w / block);
    let mut out = vec![BACKGROUND; ch * cw];
    for cr in 0..ch {
        for cc in 0..cw {
            let mut votes = [0usize; NUM_REGIONS];
            for r in cr * block..(cr + 1) * block {
                for c in cc * block..(cc + 1) * block {
                    let l = partition.label(r, c);
                    if l >= 0 {
                        votes[l as usize] += 1;
                    }
                }
            }
            let best = (0..NUM_REGIONS).fold(0, |b, k| if votes[k] > votes[b] { k } else { b });
            if votes[best] > 0 {
                out[cr * cw + cc] = best as i8;
            }
        }
    }
    Ok(out)
}

impl AttentionPrior {
    pub fn from_partition(partition: &PartitionMap, cfg: &ModelConfig) -> Result<Self> {
        if (partition.h, partition.w) != (cfg.grid_h, cfg.grid_w) {
            return Err(contract(format!(
                "partition {}×{} does not match model grid {}×{}",
                partition.h, partition.w, cfg.grid_h, cfg.grid_w
            )));
        }
        let cell_labels = downsample_labels(partition, cfg.cell_block())?;
        Ok(Self::from_cell_labels(cell_labels, cfg.bias_value, cfg.lambda_bias))
    }

    pub fn from_cell_labels(cell_labels: Vec<i8>, bias_value: f64, lambda: f64) -> Self {
        let n = cell_labels.len();
        let bias = Tensor::from_fn([NUM_REGIONS, n], |i| {
            if cell_labels[i % n] == (i / n) as i8 {
                bias_value
            } else {
                0.0
            }
        });
        AttentionPrior {
            bias,
            lambda,
            cell_labels,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.cell_labels.len()
    }
}

/// Learned pieces of region-guided attention.
#[derive(Debug, Clone, Copy)]
pub struct AttentionParams {
    /// R×d prototype queries.
    pub query: Var,
    pub key: Linear,
    pub value: Linear,
    /// Learnable λ (shape [1]); the prior's fixed λ is used when absent.
    pub lambda: Option<Var>,
}

/// `softmax(Q·Kᵀ/√d + λ·Bias)·V` for a stack of frames.
///
/// `z_feat` is F×N×d; returns the region features F×R×d and the weights F×R×N.
pub fn region_attention(t: &mut Tape, z_feat: Var, p: &AttentionParams, prior: &AttentionPrior) -> Result<(Var, Var)> {
    let d = t.shape(z_feat)[2];
    let k = p.key.apply(t, z_feat)?;
    let v = p.value.apply(t, z_feat)?;
    let qt = t.transpose(p.query, [1, 0])?;
    let kq = t.matmul(k, qt)?;
    let scores = t.transpose_last2(kq)?;
    let scores = t.scale(scores, 1.0 / (d as f64).sqrt())?;
    let bias = t.constant(prior.bias.clone());
    let scaled_bias = match p.lambda {
        Some(l) => t.mul(bias, l)?,
        None => t.scale(bias, prior.lambda)?,
    };
    let logits = t.add(scores, scaled_bias)?;
    let weights = t.softmax(logits)?;
    let z = t.matmul(weights, v)?;
    Ok((z, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::FootSide;
    use crate::priors::PartitionMeta;

    #[test]
    fn majority_vote_with_ties_and_background() {
        // 2×4 partition, blocks of 2: left block tie 0/1, right block all background
        let p = PartitionMap {
            h: 2,
            w: 4,
            labels: vec![1, 0, -1, -1, 0, 1, -1, -1],
            foot_side: FootSide::Right,
            meta: PartitionMeta::default(),
        };
        assert_eq!(downsample_labels(&p, 2).unwrap(), vec![0, -1]);
        let prior = AttentionPrior::from_cell_labels(vec![0, -1, 5], 1.0, 1.0);
        assert_eq!(prior.bias.at(&[0, 0]), 1.0);
        assert_eq!(prior.bias.at(&[5, 2]), 1.0);
        for r in 0..6 {
            assert_eq!(prior.bias.at(&[r, 1]), 0.0);
        }
        let col_nonzero = (0..3).all(|c| (0..6).filter(|&r| prior.bias.at(&[r, c]) != 0.0).count() <= 1);
        assert!(col_nonzero);
    }
}
