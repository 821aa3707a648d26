use plantar_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Number of target channels: ML, AP, V force then ML, AP, V moment.
pub const NUM_CHANNELS: usize = 6;

pub const CHANNEL_LABELS: [&str; NUM_CHANNELS] = ["GRF_ML", "GRF_AP", "GRF_V", "GRM_ML", "GRM_AP", "GRM_V"];

/// Index of the vertical force channel.
pub const GRF_V: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FootSide {
    Left,
    #[default]
    Right,
}

impl std::str::FromStr for FootSide {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(FootSide::Left),
            "right" | "r" => Ok(FootSide::Right),
            other => Err(format!("unknown foot side `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMeta {
    pub id: String,
    pub height_mm: f64,
    pub weight_kg: f64,
    pub age_years: f64,
}

impl SubjectMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight_kg > 0.0 && self.height_mm > 0.0) {
            return Err(contract(format!(
                "subject {}: weight and height must be positive (got {} kg, {} mm)",
                self.id, self.weight_kg, self.height_mm
            )));
        }
        Ok(())
    }
}

/// A raw insole recording: `frames` is T×H×W.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureSequence {
    pub frames: Tensor,
    pub sample_rate_hz: f64,
    pub subject: SubjectMeta,
    pub foot_side: FootSide,
    /// Walking speed of the trial, carried through to every stance.
    pub speed_mps: f64,
}

impl PressureSequence {
    pub fn new(
        frames: Tensor,
        sample_rate_hz: f64,
        subject: SubjectMeta,
        foot_side: FootSide,
        speed_mps: f64,
    ) -> Result<Self> {
        if frames.rank() != 3 || frames.shape()[0] < 2 {
            return Err(contract(format!("pressure frames must be T×H×W with T ≥ 2, got {:?}", frames.shape())));
        }
        if frames.data().iter().any(|&v| !(v >= 0.0)) {
            return Err(contract("pressure values must be non-negative"));
        }
        if !(sample_rate_hz > 0.0) {
            return Err(contract("sample rate must be positive"));
        }
        Ok(PressureSequence {
            frames,
            sample_rate_hz,
            subject,
            foot_side,
            speed_mps,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.frames.shape()[1], self.frames.shape()[2])
    }

    /// Mean over all sensors, per frame.
    pub fn mean_pressure(&self) -> Vec<f64> {
        let (h, w) = self.grid();
        self.frames
            .data()
            .chunks(h * w)
            .map(|f| f.iter().sum::<f64>() / (h * w) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GaitEvents {
    pub heel_strikes: Vec<usize>,
    pub toe_offs: Vec<usize>,
}

impl GaitEvents {
    /// Heel-strike → toe-off intervals, each toe-off paired with the latest
    /// preceding heel strike.
    pub fn stances(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut j = 0;
        for (i, &hs) in self.heel_strikes.iter().enumerate() {
            while j < self.toe_offs.len() && self.toe_offs[j] <= hs {
                j += 1;
            }
            let Some(&to) = self.toe_offs.get(j) else { break };
            let next_hs = self.heel_strikes.get(i + 1).copied().unwrap_or(usize::MAX);
            if to <= next_hs {
                out.push((hs, to));
            }
        }
        out
    }
}

/// One resampled stance: pressure L×H×W and normalized targets L×6.
#[derive(Debug, Clone, PartialEq)]
pub struct StanceSample {
    pub pressure: Tensor,
    pub targets: Tensor,
    pub speed_mps: f64,
    pub subject_id: String,
}

impl StanceSample {
    pub fn stance_len(&self) -> usize {
        self.pressure.shape()[0]
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.pressure.shape()[1], self.pressure.shape()[2])
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.pressure.shape();
        let t = self.targets.shape();
        if p.len() != 3 || t.len() != 2 || t[0] != p[0] || t[1] != NUM_CHANNELS {
            return Err(contract(format!("stance shapes inconsistent: pressure {p:?}, targets {t:?}")));
        }
        if self.pressure.data().iter().any(|&v| !(v >= 0.0)) {
            return Err(contract("stance pressure must be non-negative"));
        }
        if !self.targets.all_finite() {
            return Err(contract("stance targets must be finite"));
        }
        Ok(())
    }
}
