//! Stance extraction and temporal normalization.

use log::warn;
use plantar_autodiff::Tensor;

use super::normalize::normalize_joined;
use super::spline::resample_stance;
use super::types::{GaitEvents, PressureSequence, StanceSample, NUM_CHANNELS};
use crate::error::{contract, Error, Result};

pub const DEFAULT_STANCE_LEN: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub samples: Vec<StanceSample>,
    /// Intervals dropped for being shorter than the spline minimum.
    pub skipped: usize,
}

fn frame_range(t: &Tensor, start: usize, end: usize) -> Tensor {
    let per = t.numel() / t.shape()[0];
    let mut shape = t.shape().to_vec();
    shape[0] = end - start;
    Tensor::new(shape, t.data()[start * per..end * per].to_vec()).expect("sub-range of a valid tensor")
}

/// Cuts one sample per heel-strike → toe-off interval (toe-off frame
/// excluded), resamples pressure and targets to `target_len`, and normalizes
/// the targets by the subject's body weight and height.
///
/// `targets` is T×6 in physical units on the pressure clock, already filtered
/// and synchronized.
pub fn segment_stances(
    pressure: &PressureSequence,
    targets: &Tensor,
    events: &GaitEvents,
    target_len: usize,
) -> Result<Segmentation> {
    if targets.rank() != 2 || targets.shape()[1] != NUM_CHANNELS || targets.shape()[0] != pressure.len() {
        return Err(contract(format!(
            "targets must be {}×6 on the pressure clock, got {:?}",
            pressure.len(),
            targets.shape()
        )));
    }
    let mut out = Segmentation {
        samples: Vec::new(),
        skipped: 0,
    };
    for (hs, to) in events.stances() {
        let p = frame_range(&pressure.frames, hs, to);
        let p = match resample_stance(&p, target_len) {
            Ok(p) => p.map(|v| v.max(0.0)),
            Err(Error::SegmentTooShort { len, .. }) => {
                warn!("skipping stance at frame {hs}: only {len} frames");
                out.skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let y = resample_stance(&frame_range(targets, hs, to), target_len)?;
        out.samples.push(StanceSample {
            pressure: p,
            targets: normalize_joined(&y, &pressure.subject)?,
            speed_mps: pressure.speed_mps,
            subject_id: pressure.subject.id.clone(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::types::{FootSide, SubjectMeta};
    use super::*;

    fn seq(t: usize) -> PressureSequence {
        PressureSequence::new(
            Tensor::from_fn([t, 2, 2], |i| (i / 4) as f64),
            40.0,
            SubjectMeta {
                id: "a".into(),
                height_mm: 1700.0,
                weight_kg: 70.0,
                age_years: 30.0,
            },
            FootSide::Right,
            1.2,
        )
        .unwrap()
    }

    #[test]
    fn short_stance_is_counted() {
        let s = seq(60);
        let targets = Tensor::zeros([60, 6]);
        let ev = GaitEvents {
            heel_strikes: vec![2, 20, 40],
            toe_offs: vec![14, 22, 55],
        };
        let seg = segment_stances(&s, &targets, &ev, 40).unwrap();
        assert_eq!(seg.samples.len(), 2);
        assert_eq!(seg.skipped, 1);
        assert_eq!(seg.samples.len() + seg.skipped, ev.stances().len());
        assert!(seg.samples.iter().all(|x| x.stance_len() == 40));
    }
}
