//! Synthetic walking trials with known ground truth.
//!
//! Each stance is a pressure blob rolling from heel to toes inside a foot-shaped
//! outline. The vertical force follows a double-bump template scaled by body
//! weight; shear forces and moments are functions of the blob's centre of
//! pressure. Trials go through the same preprocessing as recorded data.

use std::f64::consts::PI;

use plantar_autodiff::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dataset::DatasetContainer;
use crate::error::{Error, Result};
use crate::preprocess::{
    process_trial, FootSide, PlateStream, PreprocessConfig, PressureSequence, RawTrial, SubjectMeta, GRAVITY,
    NUM_CHANNELS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_subjects: usize,
    pub steps_per_subject: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub stance_len: usize,
    /// Relative Gaussian noise on pressure cells and plate channels.
    pub noise: f64,
    pub seed: u64,
    /// Adds one sub-threshold-length contact per subject, which preprocessing must skip.
    pub adversarial: bool,
    pub foot_side: FootSide,
    pub insole_hz: f64,
    pub plate_hz: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_subjects: 4,
            steps_per_subject: 50,
            grid_h: 32,
            grid_w: 16,
            stance_len: 20,
            noise: 0.02,
            seed: 0,
            adversarial: false,
            foot_side: FootSide::Right,
            insole_hz: 100.0,
            plate_hz: 300.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_subjects == 0 || self.steps_per_subject == 0 || self.stance_len < 2 {
            return Err(Error::Config("subject, step and stance counts must be positive".into()));
        }
        if self.grid_h < 8 || self.grid_w < 4 {
            return Err(Error::Config(format!("grid {}x{} is too small for a foot", self.grid_h, self.grid_w)));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::Config("noise must be non-negative".into()));
        }
        if !(self.insole_hz > 20.0 && self.plate_hz > 20.0) {
            return Err(Error::Config("sample rates must exceed 20 Hz".into()));
        }
        Ok(())
    }
}

/// What the generator put into one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTruth {
    pub subject: SubjectMeta,
    /// Complete stances, excluding any adversarial blip.
    pub strides: usize,
    /// Contact onsets in seconds, including blips.
    pub contact_onsets_s: Vec<f64>,
    /// Plate delay in insole frames (plate + offset = insole).
    pub offset_frames: i64,
    pub blips: usize,
}

#[derive(Debug, Clone, Copy)]
struct Contact {
    start: f64,
    duration: f64,
    /// Peak vertical force in body weights.
    peak: f64,
    /// Roll-over shape in [0.6, 1]: larger dwells longer at heel and toe.
    dwell: f64,
}

/// Double-bump vertical force shape on [0,1], peak 1.
fn vertical_shape(u: f64) -> f64 {
    // maximum where cos(πu) = 1/√3: √(2/3)·(1 + 0.2/3)
    let norm = (2.0f64 / 3.0).sqrt() * 16.0 / 15.0;
    ((PI * u).sin() + 0.2 * (3.0 * PI * u).sin()) / norm
}

/// Heel-to-toe progress: monotone for `dwell` ≤ 1, slow at both ends.
fn progress(u: f64, dwell: f64) -> f64 {
    u - dwell * (2.0 * PI * u).sin() / (2.0 * PI)
}

/// d progress / du.
fn progress_rate(u: f64, dwell: f64) -> f64 {
    1.0 - dwell * (2.0 * PI * u).cos()
}

#[derive(Debug, Clone, Copy)]
struct Foot {
    h: usize,
    w: usize,
    top: f64,
    length: f64,
    width_scale: f64,
    centre_shift: f64,
    medial_low: bool,
    /// Foot position relative to the plate origin (m): lateral, anterior.
    plate_offset: [f64; 2],
}

impl Foot {
    /// Foot coordinate along the length: 0 at the toe tip, 1 at the heel.
    fn y(&self, r: usize) -> f64 {
        (r as f64 + 0.5 - self.top) / self.length
    }

    fn half_width(&self, y: f64) -> f64 {
        if !(0.0..=1.0).contains(&y) {
            return 0.0;
        }
        let profile = 0.5 + 0.32 * (-((y - 0.3) / 0.2).powi(2)).exp() + 0.12 * (-((y - 0.84) / 0.1).powi(2)).exp();
        let taper = (1.0 - (2.0 * y - 1.0).powi(8)).max(0.0).sqrt();
        self.w as f64 / 2.0 * self.width_scale * profile * taper
    }

    fn centre(&self, y: f64) -> f64 {
        // slight inward curve of the arch
        let bow = 0.06 * self.w as f64 * (-((y - 0.55) / 0.2).powi(2)).exp();
        let bow = if self.medial_low { bow } else { -bow };
        self.w as f64 / 2.0 + self.centre_shift + bow
    }

    fn inside(&self, r: usize, c: usize) -> bool {
        let y = self.y(r);
        let hw = self.half_width(y);
        hw > 0.0 && ((c as f64 + 0.5) - self.centre(y)).abs() <= hw
    }

    /// Lateral direction in columns (+1 towards higher columns).
    fn lateral_sign(&self) -> f64 {
        if self.medial_low {
            1.0
        } else {
            -1.0
        }
    }
}

/// Blob position at stance phase `u`: (foot y, column, signed lateral fraction).
fn blob_position(foot: &Foot, u: f64, dwell: f64) -> (f64, f64, f64) {
    let s = progress(u, dwell);
    let y = 0.86 - 0.64 * s;
    let lat = 0.3 * (1.0 - 2.0 * s);
    let x = foot.centre(y) + foot.lateral_sign() * lat * foot.half_width(y);
    (y, x, lat)
}

fn region_gain(y: f64) -> f64 {
    (0.6 + 0.5 * ((y - 0.55) / 0.3).powi(2)).min(1.1)
}

/// Plate channels in physical units at stance phase `u`.
fn plate_sample(foot: &Foot, subject: &SubjectMeta, c: &Contact, u: f64) -> [f64; NUM_CHANNELS] {
    let bw = subject.weight_kg * GRAVITY;
    let height_m = subject.height_mm / 1000.0;
    let fz = bw * c.peak * vertical_shape(u);
    let (y, _, lat) = blob_position(foot, u, c.dwell);
    // braking then propulsion, plus a term driven by how fast the CoP rolls forward
    let roll = progress_rate(u, c.dwell) - 1.0;
    let fap = fz * (-0.7 * (y - 0.55) + 0.15 * roll);
    let fml = fz * (0.2 * lat + 0.03 * (PI * u).sin() - 0.04 * roll);
    let cop_ap = (0.55 - y) * 0.15 * height_m + foot.plate_offset[1];
    let cop_ml = lat * 0.05 + foot.plate_offset[0];
    let mml = fz * cop_ap;
    let map = -fz * cop_ml;
    let mv = fap * cop_ml - fml * cop_ap + 0.012 * fz * height_m * ((2.0 * PI * u).sin() + 0.5 * roll);
    [fml, fap, fz, mml, map, mv]
}

fn pressure_frame(foot: &Foot, mask: &[bool], c: &Contact, u: f64, out: &mut [f64]) {
    let (yc, xc, _) = blob_position(foot, u, c.dwell);
    let amp = 200.0 * c.peak * vertical_shape(u) * region_gain(yc);
    let sx = 0.6 * foot.half_width(yc).max(1.0);
    for r in 0..foot.h {
        let dy = (foot.y(r) - yc) / 0.13;
        for col in 0..foot.w {
            let i = r * foot.w + col;
            if !mask[i] {
                continue;
            }
            let dx = (col as f64 + 0.5 - xc) / sx;
            out[i] = amp * (-0.5 * (dy * dy + dx * dx)).exp();
        }
    }
}

fn active(contacts: &[Contact], t: f64) -> Option<(&Contact, f64)> {
    contacts
        .iter()
        .find(|c| t >= c.start && t < c.start + c.duration)
        .map(|c| (c, (t - c.start) / c.duration))
}

fn subject_rng(seed: u64, subject: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(subject as u64 + 1);
    rng
}

/// One continuous walking trial for subject `index`.
pub fn synth_trial(cfg: &SynthConfig, index: usize) -> Result<(RawTrial, TrialTruth)> {
    cfg.validate()?;
    let mut rng = subject_rng(cfg.seed, index);
    let subject = SubjectMeta {
        id: format!("S{:02}", index + 1),
        height_mm: rng.gen_range(1600.0..1900.0_f64).round(),
        weight_kg: (rng.gen_range(55.0..95.0_f64) * 10.0).round() / 10.0,
        age_years: rng.gen_range(20.0..35.0_f64).round(),
    };
    let speed = rng.gen_range(1.0..1.5);
    let length = cfg.grid_h as f64 - 2.0;
    let foot = Foot {
        h: cfg.grid_h,
        w: cfg.grid_w,
        top: 1.0,
        length,
        width_scale: rng.gen_range(0.88..0.98),
        centre_shift: rng.gen_range(-0.4..0.4),
        medial_low: cfg.foot_side == FootSide::Right,
        plate_offset: [rng.gen_range(0.02..0.05), rng.gen_range(-0.03..0.03)],
    };
    let mask: Vec<bool> = (0..cfg.grid_h * cfg.grid_w)
        .map(|i| foot.inside(i / cfg.grid_w, i % cfg.grid_w))
        .collect();

    let stance = 0.78 - 0.12 * (speed - 1.0);
    let base_peak = rng.gen_range(1.05..1.15);
    let mut contacts = Vec::with_capacity(cfg.steps_per_subject + 1);
    let mut t = 0.35;
    let blip_after = cfg.adversarial.then_some(cfg.steps_per_subject / 2);
    let mut blips = 0;
    for k in 0..cfg.steps_per_subject {
        let duration = stance * rng.gen_range(0.96..1.04);
        contacts.push(Contact {
            start: t,
            duration,
            peak: base_peak + rng.gen_range(-0.03..0.03),
            dwell: rng.gen_range(0.6..1.0),
        });
        let swing = 0.42 * rng.gen_range(0.95..1.05);
        if blip_after == Some(k) {
            contacts.push(Contact {
                start: t + duration + 0.45 * swing,
                duration: 0.02,
                peak: 0.6,
                dwell: 0.8,
            });
            blips += 1;
        }
        t += duration + swing;
    }
    let total = t + 0.3;

    let fs_i = cfg.insole_hz;
    let n_i = (total * fs_i).ceil() as usize;
    let area = cfg.grid_h * cfg.grid_w;
    let mut frames = vec![0.0; n_i * area];
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    for i in 0..n_i {
        let out = &mut frames[i * area..(i + 1) * area];
        if let Some((c, u)) = active(&contacts, i as f64 / fs_i) {
            pressure_frame(&foot, &mask, c, u, out);
        }
        if cfg.noise > 0.0 {
            for (v, &m) in out.iter_mut().zip(&mask) {
                if m {
                    *v = (*v + cfg.noise * 200.0 * noise.sample(&mut rng)).max(0.0);
                }
            }
        }
    }

    let offset_frames: i64 = rng.gen_range(-8..=8);
    let fs_p = cfg.plate_hz;
    let t0 = offset_frames as f64 / fs_i;
    let n_p = ((total - t0.max(0.0)) * fs_p).floor() as usize;
    let bw = subject.weight_kg * GRAVITY;
    let scales = [0.05 * bw, 0.05 * bw, 0.05 * bw, 0.005 * bw, 0.005 * bw, 0.002 * bw];
    let mut plate = vec![0.0; n_p * NUM_CHANNELS];
    for j in 0..n_p {
        let row = &mut plate[j * NUM_CHANNELS..(j + 1) * NUM_CHANNELS];
        if let Some((c, u)) = active(&contacts, j as f64 / fs_p + t0) {
            row.copy_from_slice(&plate_sample(&foot, &subject, c, u));
        }
        if cfg.noise > 0.0 {
            for (v, s) in row.iter_mut().zip(scales) {
                *v += cfg.noise * s * noise.sample(&mut rng);
            }
        }
    }

    let pressure = PressureSequence::new(
        Tensor::new([n_i, cfg.grid_h, cfg.grid_w], frames)?,
        fs_i,
        subject.clone(),
        cfg.foot_side,
        speed,
    )?;
    let trial = RawTrial {
        pressure,
        plate: PlateStream {
            data: Tensor::new([n_p, NUM_CHANNELS], plate)?,
            sample_rate_hz: fs_p,
        },
    };
    let truth = TrialTruth {
        subject,
        strides: cfg.steps_per_subject,
        contact_onsets_s: contacts.iter().map(|c| c.start).collect(),
        offset_frames,
        blips,
    };
    Ok((trial, truth))
}

/// Generates, preprocesses and packs every subject's trial.
pub fn generate_synthetic_dataset(cfg: &SynthConfig) -> Result<DatasetContainer> {
    Ok(generate_with_truth(cfg)?.0)
}

/// As [`generate_synthetic_dataset`], also returning per-trial ground truth.
pub fn generate_with_truth(cfg: &SynthConfig) -> Result<(DatasetContainer, Vec<TrialTruth>)> {
    cfg.validate()?;
    let pre = PreprocessConfig {
        stance_len: cfg.stance_len,
        ..Default::default()
    };
    let mut samples = Vec::new();
    let mut subjects = Vec::new();
    let mut truths = Vec::new();
    let mut skipped = 0;
    for s in 0..cfg.num_subjects {
        let (trial, truth) = synth_trial(cfg, s)?;
        let out = process_trial(&trial, &pre)?;
        skipped += out.segmentation.skipped;
        samples.extend(out.segmentation.samples);
        subjects.push(truth.subject.clone());
        truths.push(truth);
    }
    Ok((DatasetContainer::new(subjects, cfg.foot_side, samples, skipped)?, truths))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_peak_is_one() {
        let peak = (0..=100_000).map(|i| vertical_shape(i as f64 / 100_000.0)).fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-9, "{peak}");
        assert!((0..=1000).all(|i| vertical_shape(i as f64 / 1000.0) >= 0.0));
    }

    #[test]
    fn progress_is_monotone() {
        let p: Vec<f64> = (0..=200).map(|i| progress(i as f64 / 200.0, 1.0)).collect();
        assert!(p.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(p[0], 0.0);
        assert!((p[200] - 1.0).abs() < 1e-12);
    }
}
