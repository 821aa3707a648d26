//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use plantar_grf::autodiff::Tensor;
use plantar_grf::io::{generate_synthetic_dataset, DatasetContainer, SynthConfig};

/// Row-major matrix product of an m×k and a k×n slice.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = s;
        }
    }
    out
}

pub fn softmax_rows(x: &mut [f64], cols: usize) {
    for row in x.chunks_mut(cols) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
}

/// Single-frame attention `softmax(Q(XWk+bk)ᵀ/√d + λB)(XWv+bv)` with plain loops.
/// Returns (output R×d, weights R×N).
#[allow(clippy::too_many_arguments)]
pub fn naive_attention(
    x: &[f64],
    q: &[f64],
    wk: &[f64],
    bk: &[f64],
    wv: &[f64],
    bv: &[f64],
    bias: &[f64],
    lambda: f64,
    n: usize,
    d: usize,
    r: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut k = matmul(x, wk, n, d, d);
    let mut v = matmul(x, wv, n, d, d);
    for i in 0..n {
        for j in 0..d {
            k[i * d + j] += bk[j];
            v[i * d + j] += bv[j];
        }
    }
    let mut w = vec![0.0; r * n];
    for a in 0..r {
        for c in 0..n {
            let mut s = 0.0;
            for j in 0..d {
                s += q[a * d + j] * k[c * d + j];
            }
            w[a * n + c] = s / (d as f64).sqrt() + lambda * bias[a * n + c];
        }
    }
    softmax_rows(&mut w, n);
    let out = matmul(&w, &v, r, n, d);
    (out, w)
}

pub fn naive_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub fn naive_rmse(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    (s / a.len() as f64).sqrt()
}

/// NRMSE in percent, normalized by the target range.
pub fn naive_nrmse(pred: &[f64], target: &[f64]) -> f64 {
    let mut lo = target[0];
    let mut hi = target[0];
    for &v in target {
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    100.0 * naive_rmse(pred, target) / (hi - lo)
}

/// Channel `c` of an M×L×C array, all frames concatenated.
pub fn channel(x: &Tensor, c: usize) -> Vec<f64> {
    let ch = *x.shape().last().unwrap();
    x.data().iter().skip(c).step_by(ch).copied().collect()
}

/// Amplitude of the `freq` component over the middle half, by projection onto sin and cos.
pub fn tone_amplitude(x: &[f64], freq: f64, fs: f64) -> f64 {
    let (a, b) = (x.len() / 4, 3 * x.len() / 4);
    let (mut s, mut c) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate().take(b).skip(a) {
        let ph = 2.0 * std::f64::consts::PI * freq * i as f64 / fs;
        s += v * ph.sin();
        c += v * ph.cos();
    }
    2.0 * (s * s + c * c).sqrt() / (b - a) as f64
}

pub fn small_synth(subjects: usize, steps: usize, seed: u64) -> DatasetContainer {
    generate_synthetic_dataset(&SynthConfig {
        num_subjects: subjects,
        steps_per_subject: steps,
        grid_h: 16,
        grid_w: 8,
        stance_len: 8,
        seed,
        ..Default::default()
    })
    .expect("synthetic dataset")
}
