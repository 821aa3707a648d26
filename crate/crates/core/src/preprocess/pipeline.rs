//! Raw insole + force-plate trial → stance samples.

use plantar_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use super::events::{detect_gait_events, DEFAULT_THRESHOLD_FRACTION};
use super::filter::{butterworth_lowpass_with, FilterPhase};
use super::segment::{segment_stances, Segmentation, DEFAULT_STANCE_LEN};
use super::spline::NaturalCubicSpline;
use super::sync::{rescale_events, synchronize_streams};
use super::types::{GaitEvents, PressureSequence, GRF_V, NUM_CHANNELS};
use crate::error::{contract, Result};

/// Force-plate recording: T_p×6 forces (N) and moments (N·m) in channel order.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateStream {
    pub data: Tensor,
    pub sample_rate_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTrial {
    pub pressure: PressureSequence,
    pub plate: PlateStream,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub threshold_fraction: f64,
    pub cutoff_hz: f64,
    pub stance_len: usize,
    pub filter_phase: FilterPhase,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            threshold_fraction: DEFAULT_THRESHOLD_FRACTION,
            cutoff_hz: 10.0,
            stance_len: DEFAULT_STANCE_LEN,
            filter_phase: FilterPhase::ZeroPhase,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutput {
    pub segmentation: Segmentation,
    pub insole_events: GaitEvents,
    /// Plate heel strikes/toe-offs expressed on the insole clock, before the offset.
    pub plate_events: GaitEvents,
    /// Insole frames added to plate times to align them.
    pub offset_frames: i64,
}

/// Filters, synchronizes and resamples the plate to the insole clock, then
/// segments stances.
///
/// Events are detected on the insole mean pressure and on the plate's
/// vertical force. Both streams are low-passed before resampling.
pub fn process_trial(trial: &RawTrial, cfg: &PreprocessConfig) -> Result<TrialOutput> {
    let plate = &trial.plate;
    if plate.data.rank() != 2 || plate.data.shape()[1] != NUM_CHANNELS || plate.data.shape()[0] < 2 {
        return Err(contract(format!("plate stream must be T×6, got {:?}", plate.data.shape())));
    }
    let fs_i = trial.pressure.sample_rate_hz;
    let fs_p = plate.sample_rate_hz;
    let t_p = plate.data.shape()[0];

    let insole_events = detect_gait_events(&trial.pressure.mean_pressure(), cfg.threshold_fraction)?;
    let fz: Vec<f64> = (0..t_p).map(|i| plate.data.at(&[i, GRF_V])).collect();
    let plate_events = rescale_events(&detect_gait_events(&fz, cfg.threshold_fraction)?, fs_p, fs_i);
    let offset = synchronize_streams(&insole_events, &plate_events)?;

    // pressure filtered per sensor on its own clock
    let pressure = filter_columns(&trial.pressure.frames, fs_i, cfg)?.map(|v| v.max(0.0));
    let filtered_plate = filter_columns(&plate.data, fs_p, cfg)?;

    let t_i = trial.pressure.len();
    let knots: Vec<f64> = (0..t_p).map(|i| i as f64).collect();
    let mut targets = vec![0.0; t_i * NUM_CHANNELS];
    for c in 0..NUM_CHANNELS {
        let ys: Vec<f64> = (0..t_p).map(|i| filtered_plate.at(&[i, c])).collect();
        let spline = NaturalCubicSpline::new(knots.clone(), ys)?;
        for i in 0..t_i {
            let plate_time = (i as f64 - offset as f64) * fs_p / fs_i;
            targets[i * NUM_CHANNELS + c] = spline.eval(plate_time);
        }
    }
    let targets = Tensor::new([t_i, NUM_CHANNELS], targets)?;
    let seq = PressureSequence {
        frames: pressure,
        ..trial.pressure.clone()
    };
    let segmentation = segment_stances(&seq, &targets, &insole_events, cfg.stance_len)?;
    Ok(TrialOutput {
        segmentation,
        insole_events,
        plate_events,
        offset_frames: offset,
    })
}

/// Low-passes every column of a T×… array along time.
fn filter_columns(x: &Tensor, fs: f64, cfg: &PreprocessConfig) -> Result<Tensor> {
    let t = x.shape()[0];
    let cols = x.numel() / t;
    let mut out = vec![0.0; x.numel()];
    for c in 0..cols {
        let col: Vec<f64> = (0..t).map(|i| x.data()[i * cols + c]).collect();
        let y = butterworth_lowpass_with(&col, fs, cfg.cutoff_hz, cfg.filter_phase)?;
        for (i, v) in y.into_iter().enumerate() {
            out[i * cols + c] = v;
        }
    }
    Ok(Tensor::new(x.shape().to_vec(), out)?)
}
