//! Pearson r, RMSE and NRMSE per channel, and their aggregation across folds.

use std::fmt::Write as _;

use plantar_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalizer {
    /// RMSE / (max − min) of the target channel.
    #[default]
    Range,
    /// RMSE / |mean| of the target channel.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Concatenate every frame of every sample, then compute once.
    #[default]
    Concatenated,
    /// Compute per sample, then average.
    PerStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct MetricsOptions {
    pub normalizer: Normalizer,
    pub aggregation: Aggregation,
}

/// One value per channel for each metric; NRMSE in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub r: Vec<f64>,
    pub rmse: Vec<f64>,
    pub nrmse: Vec<f64>,
}

impl ChannelMetrics {
    pub fn mean_nrmse(&self) -> f64 {
        self.nrmse.iter().sum::<f64>() / self.nrmse.len() as f64
    }
}

/// Pearson correlation; 0 when either series has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

pub fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn channel_series(x: &Tensor, c: usize, channels: usize, range: std::ops::Range<usize>) -> Vec<f64> {
    x.data()[range.start * channels..range.end * channels]
        .iter()
        .skip(c)
        .step_by(channels)
        .copied()
        .collect()
}

fn metrics_over(pred: &Tensor, target: &Tensor, frames: std::ops::Range<usize>, opts: MetricsOptions) -> Result<ChannelMetrics> {
    let channels = *target.shape().last().unwrap();
    let mut out = ChannelMetrics {
        r: Vec::with_capacity(channels),
        rmse: Vec::with_capacity(channels),
        nrmse: Vec::with_capacity(channels),
    };
    for c in 0..channels {
        let p = channel_series(pred, c, channels, frames.clone());
        let y = channel_series(target, c, channels, frames.clone());
        let e = rmse(&p, &y);
        let norm = match opts.normalizer {
            Normalizer::Range => {
                let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
                hi - lo
            }
            Normalizer::Mean => (y.iter().sum::<f64>() / y.len() as f64).abs(),
        };
        if !(norm > 0.0) {
            return Err(Error::UndefinedMetric { channel: c });
        }
        out.r.push(pearson(&p, &y));
        out.rmse.push(e);
        out.nrmse.push(e / norm * 100.0);
    }
    Ok(out)
}

/// Metrics of M×L×C predictions against targets.
pub fn compute_metrics(pred: &Tensor, target: &Tensor, opts: MetricsOptions) -> Result<ChannelMetrics> {
    if pred.shape() != target.shape() || target.rank() != 3 {
        return Err(contract(format!(
            "metrics need matching M×L×C arrays, got {:?} and {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let (m, l) = (target.shape()[0], target.shape()[1]);
    if m < 2 {
        return Err(contract("metrics need at least two samples"));
    }
    match opts.aggregation {
        Aggregation::Concatenated => metrics_over(pred, target, 0..m * l, opts),
        Aggregation::PerStep => {
            let per: Vec<ChannelMetrics> = (0..m)
                .map(|i| metrics_over(pred, target, i * l..(i + 1) * l, opts))
                .collect::<Result<_>>()?;
            let avg = |f: fn(&ChannelMetrics) -> &Vec<f64>| -> Vec<f64> {
                let c = f(&per[0]).len();
                (0..c).map(|k| per.iter().map(|x| f(x)[k]).sum::<f64>() / m as f64).collect()
            };
            Ok(ChannelMetrics {
                r: avg(|x| &x.r),
                rmse: avg(|x| &x.rmse),
                nrmse: avg(|x| &x.nrmse),
            })
        }
    }
}

/// Per-fold metrics with their mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub labels: Vec<String>,
    pub per_fold: Vec<ChannelMetrics>,
    pub mean: ChannelMetrics,
    pub sd: ChannelMetrics,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

impl MetricsReport {
    pub fn from_folds(labels: &[&str], per_fold: Vec<ChannelMetrics>) -> Result<Self> {
        if per_fold.is_empty() {
            return Err(contract("report needs at least one fold"));
        }
        let c = labels.len();
        let agg = |f: fn(&ChannelMetrics) -> &Vec<f64>| -> (Vec<f64>, Vec<f64>) {
            (0..c)
                .map(|k| mean_sd(&per_fold.iter().map(|x| f(x)[k]).collect::<Vec<_>>()))
                .unzip()
        };
        let (rm, rs) = agg(|x| &x.r);
        let (em, es) = agg(|x| &x.rmse);
        let (nm, ns) = agg(|x| &x.nrmse);
        Ok(MetricsReport {
            labels: labels.iter().map(|s| s.to_string()).collect(),
            mean: ChannelMetrics {
                r: rm,
                rmse: em,
                nrmse: nm,
            },
            sd: ChannelMetrics {
                r: rs,
                rmse: es,
                nrmse: ns,
            },
            per_fold,
        })
    }

    /// Channel-averaged NRMSE of each fold.
    pub fn fold_mean_nrmse(&self) -> Vec<f64> {
        self.per_fold.iter().map(ChannelMetrics::mean_nrmse).collect()
    }

    /// Mean and SD across folds of the channel-averaged NRMSE.
    pub fn overall_nrmse(&self) -> (f64, f64) {
        mean_sd(&self.fold_mean_nrmse())
    }

    /// Per-fold rows followed by a mean (SD) summary per channel.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<8}", "fold");
        for l in &self.labels {
            let _ = write!(s, " {:>14}", format!("{l} NRMSE%"));
        }
        s.push('\n');
        for (i, f) in self.per_fold.iter().enumerate() {
            let _ = write!(s, "{:<8}", i);
            for v in &f.nrmse {
                let _ = write!(s, " {v:>14.3}");
            }
            s.push('\n');
        }
        s.push('\n');
        let _ = writeln!(s, "{:<8} {:>18} {:>22} {:>22}", "channel", "r", "RMSE", "NRMSE%");
        for (k, l) in self.labels.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:<8} {:>18} {:>22} {:>22}",
                l,
                format!("{:.3} ({:.3})", self.mean.r[k], self.sd.r[k]),
                format!("{:.4} ({:.4})", self.mean.rmse[k], self.sd.rmse[k]),
                format!("{:.2} ({:.2})", self.mean.nrmse[k], self.sd.nrmse[k]),
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(m: usize, l: usize) -> Tensor {
        Tensor::from_fn([m, l, 2], |i| ((i * 7) % 13) as f64 + 0.5 * (i % 2) as f64)
    }

    #[test]
    fn perfect_prediction() {
        let y = ramp(3, 5);
        let m = compute_metrics(&y, &y, MetricsOptions::default()).unwrap();
        assert_eq!(m.r, vec![1.0, 1.0]);
        assert_eq!(m.rmse, vec![0.0, 0.0]);
        assert_eq!(m.nrmse, vec![0.0, 0.0]);
    }

    #[test]
    fn affine_prediction_is_fully_correlated() {
        let y = ramp(3, 5);
        let p = y.map(|v| 2.0 * v + 3.0);
        let m = compute_metrics(&p, &y, MetricsOptions::default()).unwrap();
        assert!(m.r.iter().all(|r| (r - 1.0).abs() < 1e-12));
        assert!(m.rmse.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn zero_range_channel_is_undefined() {
        let y = Tensor::from_fn([2, 3, 2], |i| if i % 2 == 0 { 1.0 } else { i as f64 });
        assert!(matches!(
            compute_metrics(&y, &y, MetricsOptions::default()),
            Err(Error::UndefinedMetric { channel: 0 })
        ));
    }
}
