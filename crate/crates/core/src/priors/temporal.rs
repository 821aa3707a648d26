use plantar_autodiff::Tensor;

use super::partition::{PartitionMap, NUM_REGIONS};
use crate::error::{contract, Result};
use crate::preprocess::StanceSample;

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// Expected region activation per normalized stance time: `p` is L×6 and row-stochastic.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalPrior {
    pub p: Tensor,
    pub epsilon: f64,
}

impl TemporalPrior {
    pub fn stance_len(&self) -> usize {
        self.p.shape()[0]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.p.data()[t * NUM_REGIONS..(t + 1) * NUM_REGIONS]
    }

    /// Region index with the largest prior mass at each time step.
    pub fn argmax_per_frame(&self) -> Vec<usize> {
        (0..self.stance_len())
            .map(|t| {
                let row = self.row(t);
                (0..NUM_REGIONS).fold(0, |best, k| if row[k] > row[best] { k } else { best })
            })
            .collect()
    }
}

/// Turns region means A (L×6) into `P = (A + ε) / Σ_j (A_j + ε)` per row.
pub fn normalize_activation(a: &Tensor, epsilon: f64) -> Result<TemporalPrior> {
    if !(epsilon > 0.0) {
        return Err(contract("epsilon must be positive"));
    }
    let mut p = a.clone();
    for row in p.data_mut().chunks_mut(NUM_REGIONS) {
        let z: f64 = row.iter().map(|v| v + epsilon).sum();
        for v in row.iter_mut() {
            *v = (*v + epsilon) / z;
        }
    }
    Ok(TemporalPrior { p, epsilon })
}

/// Region mean pressure per frame, averaged over samples (A), normalized to P.
pub fn compute_temporal_prior(samples: &[StanceSample], partition: &PartitionMap, epsilon: f64) -> Result<TemporalPrior> {
    let first = samples.first().ok_or_else(|| contract("temporal prior needs at least one sample"))?;
    let l = first.stance_len();
    let cells: Vec<Vec<usize>> = (0..NUM_REGIONS).map(|k| partition.region_cells(k)).collect();
    if cells.iter().all(|c| c.is_empty()) {
        return Err(contract("every region of the partition is empty"));
    }
    let area = partition.h * partition.w;
    let mut a = vec![0.0; l * NUM_REGIONS];
    for s in samples {
        if s.stance_len() != l || s.grid() != (partition.h, partition.w) {
            return Err(contract("samples must share stance length and the partition grid"));
        }
        let d = s.pressure.data();
        for t in 0..l {
            let frame = &d[t * area..(t + 1) * area];
            for (k, idx) in cells.iter().enumerate() {
                if !idx.is_empty() {
                    a[t * NUM_REGIONS + k] += idx.iter().map(|&i| frame[i]).sum::<f64>() / idx.len() as f64;
                }
            }
        }
    }
    let n = samples.len() as f64;
    let a = Tensor::new([l, NUM_REGIONS], a.into_iter().map(|v| v / n).collect())?;
    normalize_activation(&a, epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_evaluation() {
        let a = Tensor::new([1, 6], vec![2.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let p = normalize_activation(&a, 1e-6).unwrap();
        let z = 4.0 + 6e-6;
        let want = [2.0 + 1e-6, 1.0 + 1e-6, 1.0 + 1e-6, 1e-6, 1e-6, 1e-6].map(|v| v / z);
        for (x, y) in p.row(0).iter().zip(want) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!((p.row(0)[0] - 0.5).abs() < 1e-6 && (p.row(0)[3] - 2.5e-7).abs() < 1e-9);
    }

    #[test]
    fn equal_means_give_uniform_rows() {
        let p = normalize_activation(&Tensor::full([5, 6], 0.7), 1e-6).unwrap();
        assert!(p.p.data().iter().all(|v| (v - 1.0 / 6.0).abs() < 1e-15));
    }
}
