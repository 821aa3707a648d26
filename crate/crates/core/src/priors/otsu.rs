use super::mean_map::MeanPressureMap;
use crate::error::{contract, Error, Result};

pub const DEFAULT_BINS: usize = 256;

/// Cells whose mean pressure lies above the Otsu threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveMask {
    pub h: usize,
    pub w: usize,
    pub cells: Vec<bool>,
    /// Upper edge of the last background bin.
    pub threshold: f64,
}

impl ActiveMask {
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.cells[r * self.w + c]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }
}

fn bin_of(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    (((v - lo) / (hi - lo) * bins as f64) as usize).min(bins - 1)
}

/// Otsu's method on a `bins`-bin histogram spanning [min, max] of the map.
///
/// The split maximizing between-class variance `w0·w1·(μ0 − μ1)²` is chosen
/// (first maximum on ties); cells in bins above the split are active.
pub fn otsu_threshold(map: &MeanPressureMap, bins: usize) -> Result<ActiveMask> {
    if bins < 16 {
        return Err(contract(format!("histogram needs at least 16 bins, got {bins}")));
    }
    let (h, w) = map.dims();
    let vals = map.grid.data();
    let (lo, hi) = vals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return Err(Error::DegenerateHistogram);
    }
    let mut counts = vec![0.0; bins];
    let mut sums = vec![0.0; bins];
    for &v in vals {
        let b = bin_of(v, lo, hi, bins);
        counts[b] += 1.0;
        sums[b] += v;
    }
    let total = vals.len() as f64;
    let total_sum: f64 = sums.iter().sum();
    let (mut n0, mut s0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for t in 0..bins - 1 {
        n0 += counts[t];
        s0 += sums[t];
        let n1 = total - n0;
        if n0 == 0.0 || n1 == 0.0 {
            continue;
        }
        let mu0 = s0 / n0;
        let mu1 = (total_sum - s0) / n1;
        let var = (n0 / total) * (n1 / total) * (mu0 - mu1).powi(2);
        if var > best.0 {
            best = (var, t);
        }
    }
    let split = best.1;
    Ok(ActiveMask {
        h,
        w,
        cells: vals.iter().map(|&v| bin_of(v, lo, hi, bins) > split).collect(),
        threshold: lo + (split + 1) as f64 * (hi - lo) / bins as f64,
    })
}
