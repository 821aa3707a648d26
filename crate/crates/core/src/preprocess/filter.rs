//! Second-order Butterworth low-pass filtering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterPhase {
    /// Forward then backward pass; zero phase, squared magnitude response.
    #[default]
    ZeroPhase,
    SinglePass,
}

/// Biquad `b0 + b1 z⁻¹ + b2 z⁻²` over `1 + a1 z⁻¹ + a2 z⁻²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Second-order Butterworth low-pass via the bilinear transform with the
    /// cutoff prewarped so the −3 dB point lands exactly on `cutoff_hz`.
    pub fn butterworth_lowpass(sample_rate_hz: f64, cutoff_hz: f64) -> Result<Self> {
        if !(cutoff_hz > 0.0 && cutoff_hz < sample_rate_hz / 2.0) {
            return Err(Error::Parameter(format!(
                "cutoff {cutoff_hz} Hz must lie in (0, {}) for sample rate {sample_rate_hz} Hz",
                sample_rate_hz / 2.0
            )));
        }
        let k = (std::f64::consts::PI * cutoff_hz / sample_rate_hz).tan();
        let k2 = k * k;
        let norm = 1.0 / (1.0 + std::f64::consts::SQRT_2 * k + k2);
        let b0 = k2 * norm;
        Ok(Biquad {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k2 - 1.0) * norm, (1.0 - std::f64::consts::SQRT_2 * k + k2) * norm],
        })
    }

    /// Transposed direct-form II state that holds the output at `x0` for a
    /// constant input `x0`.
    fn steady_state(&self, x0: f64) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let dc = (b0 + b1 + b2) / (1.0 + a1 + a2);
        let z2 = b2 * x0 - a2 * dc * x0;
        let z1 = b1 * x0 - a1 * dc * x0 + z2;
        [z1, z2]
    }

    /// One causal pass, initialised at steady state for the first sample.
    pub fn run(&self, x: &[f64]) -> Vec<f64> {
        let Some(&x0) = x.first() else { return Vec::new() };
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let [mut z1, mut z2] = self.steady_state(x0);
        x.iter()
            .map(|&v| {
                let y = b0 * v + z1;
                z1 = b1 * v - a1 * y + z2;
                z2 = b2 * v - a2 * y;
                y
            })
            .collect()
    }

    /// Forward-backward filtering with odd-symmetric edge extension.
    pub fn run_zero_phase(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return x.to_vec();
        }
        let pad = 9.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        let mut y = self.run(&ext);
        y.reverse();
        let mut y = self.run(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

/// Zero-phase second-order Butterworth low-pass of `signal`.
pub fn butterworth_lowpass(signal: &[f64], sample_rate_hz: f64, cutoff_hz: f64) -> Result<Vec<f64>> {
    butterworth_lowpass_with(signal, sample_rate_hz, cutoff_hz, FilterPhase::ZeroPhase)
}

pub fn butterworth_lowpass_with(
    signal: &[f64],
    sample_rate_hz: f64,
    cutoff_hz: f64,
    phase: FilterPhase,
) -> Result<Vec<f64>> {
    let f = Biquad::butterworth_lowpass(sample_rate_hz, cutoff_hz)?;
    Ok(match phase {
        FilterPhase::ZeroPhase => f.run_zero_phase(signal),
        FilterPhase::SinglePass => f.run(signal),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * freq * i as f64 / fs).sin()).collect()
    }

    fn peak(x: &[f64]) -> f64 {
        x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn dc_gain_is_one() {
        let x = vec![4.25; 300];
        for phase in [FilterPhase::ZeroPhase, FilterPhase::SinglePass] {
            let y = butterworth_lowpass_with(&x, 100.0, 10.0, phase).unwrap();
            assert!(y.iter().all(|v| (v - 4.25).abs() < 1e-9));
        }
    }

    #[test]
    fn half_power_at_cutoff_single_pass() {
        let fs = 100.0;
        let y = butterworth_lowpass_with(&sine(10.0, fs, 4000), fs, 10.0, FilterPhase::SinglePass).unwrap();
        let ratio = peak(&y[1000..]);
        assert!((ratio - 1.0 / 2f64.sqrt()).abs() / (1.0 / 2f64.sqrt()) < 0.02, "{ratio}");
    }

    #[test]
    fn strong_attenuation_near_nyquist() {
        let fs = 100.0;
        let y = butterworth_lowpass(&sine(45.0, fs, 2000), fs, 10.0).unwrap();
        assert!(peak(&y[200..1800]) < 0.02);
    }

    #[test]
    fn cutoff_at_nyquist_is_rejected() {
        assert!(matches!(butterworth_lowpass(&[1.0; 10], 100.0, 50.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn zero_phase_has_no_lag() {
        let fs = 100.0;
        let x = sine(1.5, fs, 800);
        let y = butterworth_lowpass(&x, fs, 10.0).unwrap();
        let xcorr = |lag: i64| -> f64 {
            (100..700).map(|i| x[i] * y[(i as i64 + lag) as usize]).sum()
        };
        let best = (-10..=10).max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b))).unwrap();
        assert_eq!(best, 0);
    }
}
