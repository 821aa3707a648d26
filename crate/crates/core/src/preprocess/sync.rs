//! Heel-strike alignment of the insole and force-plate timelines.

use super::types::GaitEvents;
use crate::error::{contract, Result};

/// Mean absolute distance between each insole heel strike and its
/// order-preserving nearest neighbour among the shifted plate heel strikes.
fn alignment_cost(insole: &[usize], plate: &[usize], offset: i64) -> f64 {
    let mut j = 0usize;
    let mut total = 0.0;
    for &hs in insole {
        let t = hs as i64;
        // advance while the next candidate is at least as close; never move backwards
        while j + 1 < plate.len() && (plate[j + 1] as i64 + offset - t).abs() <= (plate[j] as i64 + offset - t).abs() {
            j += 1;
        }
        total += (plate[j] as i64 + offset - t).abs() as f64;
    }
    total / insole.len() as f64
}

/// Integer offset that, added to plate frame indices, best aligns plate heel
/// strikes with insole heel strikes. Both event lists must be on the same
/// (insole) clock. Ties prefer the smallest |offset|.
pub fn synchronize_streams(insole: &GaitEvents, plate: &GaitEvents) -> Result<i64> {
    let (a, b) = (&insole.heel_strikes, &plate.heel_strikes);
    if a.is_empty() || b.is_empty() {
        return Err(contract("synchronization needs at least one heel strike in each stream"));
    }
    let lo = a[0] as i64 - *b.last().unwrap() as i64;
    let hi = *a.last().unwrap() as i64 - b[0] as i64;
    let mut best = (f64::INFINITY, 0i64);
    for off in lo..=hi {
        let c = alignment_cost(a, b, off);
        if c < best.0 || (c == best.0 && off.abs() < best.1.abs()) {
            best = (c, off);
        }
    }
    Ok(best.1)
}

/// Maps event indices from a `from_hz` clock onto a `to_hz` clock.
pub fn rescale_events(events: &GaitEvents, from_hz: f64, to_hz: f64) -> GaitEvents {
    let f = |v: &Vec<usize>| v.iter().map(|&i| (i as f64 * to_hz / from_hz).round() as usize).collect();
    GaitEvents {
        heel_strikes: f(&events.heel_strikes),
        toe_offs: f(&events.toe_offs),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(hs: &[usize]) -> GaitEvents {
        GaitEvents {
            heel_strikes: hs.to_vec(),
            toe_offs: vec![],
        }
    }

    #[test]
    fn identical_lists_give_zero() {
        let e = ev(&[10, 52, 95, 140]);
        assert_eq!(synchronize_streams(&e, &e).unwrap(), 0);
    }

    #[test]
    fn constructed_shift_is_undone() {
        let insole = ev(&[10, 52, 95, 140]);
        let plate = ev(&[17, 59, 102, 147]);
        assert_eq!(synchronize_streams(&insole, &plate).unwrap(), -7);
    }

    #[test]
    fn empty_list_is_rejected() {
        assert!(synchronize_streams(&ev(&[]), &ev(&[3])).is_err());
    }
}
