//! Threshold-crossing gait event detection.

use super::types::GaitEvents;
use crate::error::{contract, Error, Result};

pub const DEFAULT_THRESHOLD_FRACTION: f64 = 0.125;

/// Detects heel strikes (upward crossings) and toe-offs (downward crossings) of
/// `min + fraction·(max − min)`.
///
/// A crossing between frames `i−1` and `i` is located by linear interpolation
/// and reported as the first whole frame at or after it. Toe-offs before the
/// first heel strike are dropped so the lists alternate.
pub fn detect_gait_events(series: &[f64], threshold_fraction: f64) -> Result<GaitEvents> {
    if series.len() < 2 {
        return Err(contract("event detection needs at least 2 samples"));
    }
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(contract(format!("threshold fraction {threshold_fraction} outside (0, 1)")));
    }
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return Err(Error::NoEvents("signal has zero range".into()));
    }
    let thr = lo + threshold_fraction * (hi - lo);

    let mut events = GaitEvents::default();
    for i in 1..series.len() {
        let (a, b) = (series[i - 1], series[i]);
        let rising = a < thr && b >= thr;
        let falling = a >= thr && b < thr;
        if !(rising || falling) {
            continue;
        }
        // fractional position of the crossing in (i−1, i]
        let frac = (thr - a) / (b - a);
        let at = (i - 1) as f64 + frac;
        let idx = (at.ceil() as usize).clamp(i - 1, i);
        if rising {
            events.heel_strikes.push(idx);
        } else if !events.heel_strikes.is_empty() {
            events.toe_offs.push(idx);
        }
    }
    if events.heel_strikes.is_empty() {
        return Err(Error::NoEvents("no upward threshold crossing".into()));
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(periods: usize) -> Vec<f64> {
        (0..periods * 20).map(|i| if (i / 10) % 2 == 1 { 8.0 } else { 0.0 }).collect()
    }

    #[test]
    fn square_wave_edges() {
        let ev = detect_gait_events(&square(3), 0.125).unwrap();
        assert_eq!(ev.heel_strikes, vec![10, 30, 50]);
        assert_eq!(ev.toe_offs, vec![20, 40]);
        assert_eq!(ev.stances(), vec![(10, 20), (30, 40)]);
    }

    #[test]
    fn constant_series_has_no_events() {
        assert!(matches!(detect_gait_events(&[3.0; 12], 0.125), Err(Error::NoEvents(_))));
    }

    #[test]
    fn affine_invariance() {
        let s: Vec<f64> = (0..200).map(|i| ((i as f64) * 0.13).sin().max(0.0) + 0.01 * (i % 7) as f64).collect();
        let base = detect_gait_events(&s, 0.125).unwrap();
        let scaled: Vec<f64> = s.iter().map(|v| 3.5 * v - 2.0).collect();
        assert_eq!(detect_gait_events(&scaled, 0.125).unwrap(), base);
    }

    #[test]
    fn leading_toe_off_is_dropped() {
        let mut s = vec![5.0, 5.0, 0.0, 0.0];
        s.extend(square(1));
        let ev = detect_gait_events(&s, 0.125).unwrap();
        assert_eq!(ev.heel_strikes, vec![14]);
        assert_eq!(ev.toe_offs, Vec::<usize>::new());
    }
}
