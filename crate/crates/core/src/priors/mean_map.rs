use plantar_autodiff::Tensor;

use crate::error::{contract, Result};
use crate::preprocess::StanceSample;

/// Average pressure per cell over every frame of every training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanPressureMap {
    pub grid: Tensor,
}

impl MeanPressureMap {
    pub fn dims(&self) -> (usize, usize) {
        (self.grid.shape()[0], self.grid.shape()[1])
    }
}

pub fn compute_mean_pressure_map(samples: &[StanceSample]) -> Result<MeanPressureMap> {
    let first = samples.first().ok_or_else(|| contract("mean pressure map needs at least one sample"))?;
    let (h, w) = first.grid();
    let mut acc = vec![0.0; h * w];
    let mut frames = 0usize;
    for s in samples {
        if s.grid() != (h, w) {
            return Err(contract(format!("mixed grid shapes {:?} and {:?}", (h, w), s.grid())));
        }
        for f in s.pressure.data().chunks(h * w) {
            for (a, v) in acc.iter_mut().zip(f) {
                *a += v;
            }
        }
        frames += s.stance_len();
    }
    let n = frames as f64;
    Ok(MeanPressureMap {
        grid: Tensor::new([h, w], acc.into_iter().map(|v| v / n).collect())?,
    })
}
