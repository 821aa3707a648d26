//! Natural cubic spline interpolation and stance resampling.

use plantar_autodiff::Tensor;

use crate::error::{contract, Error, Result};

/// Minimum number of input frames accepted by [`resample_stance`].
pub const MIN_SEGMENT_LEN: usize = 4;

/// Interpolant with zero second derivative at both ends.
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(contract(format!("spline needs ≥ 2 matching knots, got {} x and {} y", n, y.len())));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(contract("spline knots must be strictly increasing"));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for interior second derivatives (Thomas algorithm)
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let mut upper = vec![0.0; k];
            for i in 1..n - 1 {
                let h0 = x[i] - x[i - 1];
                let h1 = x[i + 1] - x[i];
                diag[i - 1] = 2.0 * (h0 + h1);
                upper[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            }
            for r in 1..k {
                let lower = x[r + 1] - x[r];
                let w = lower / diag[r - 1];
                diag[r] -= w * upper[r - 1];
                rhs[r] -= w * rhs[r - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for r in (0..k - 1).rev() {
                m[r + 1] = (rhs[r] - upper[r] * m[r + 2]) / diag[r];
            }
        }
        Ok(NaturalCubicSpline { x, y, m })
    }

    /// Evaluates at `t`, clamped to the knot range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let t = t.clamp(self.x[0], self.x[n - 1]);
        let i = match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            p if p >= n => n - 2,
            p => p - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Resamples a T_s×… series along axis 0 to `target_len` frames over normalized
/// time [0, 1]; every trailing element is an independent channel.
pub fn resample_stance(segment: &Tensor, target_len: usize) -> Result<Tensor> {
    let t_s = segment.shape()[0];
    if t_s < MIN_SEGMENT_LEN {
        return Err(Error::SegmentTooShort { len: t_s, min: MIN_SEGMENT_LEN });
    }
    if target_len < 2 {
        return Err(contract("target length must be at least 2"));
    }
    let channels = segment.numel() / t_s;
    let knots: Vec<f64> = (0..t_s).map(|i| i as f64 / (t_s - 1) as f64).collect();
    let query: Vec<f64> = (0..target_len).map(|i| i as f64 / (target_len - 1) as f64).collect();
    let mut shape = segment.shape().to_vec();
    shape[0] = target_len;
    let mut out = vec![0.0; target_len * channels];
    let data = segment.data();
    for c in 0..channels {
        let ys: Vec<f64> = (0..t_s).map(|i| data[i * channels + c]).collect();
        let s = NaturalCubicSpline::new(knots.clone(), ys)?;
        for (i, &q) in query.iter().enumerate() {
            out[i * channels + c] = s.eval(q);
        }
        // endpoints exactly
        out[c] = data[c];
        out[(target_len - 1) * channels + c] = data[(t_s - 1) * channels + c];
    }
    Ok(Tensor::new(shape, out)?)
}
