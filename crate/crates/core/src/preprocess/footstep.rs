//! Spatial centring and temporal normalization of floor-mat footsteps.

use plantar_autodiff::Tensor;

use crate::error::{contract, Error, Result};

pub const CANVAS_H: usize = 75;
pub const CANVAS_W: usize = 40;
pub const FOOTSTEP_FRAMES: usize = 101;

/// [`standardize_footstep_to`] with the 101×75×40 defaults.
pub fn standardize_footstep(frames: &Tensor) -> Result<Tensor> {
    standardize_footstep_to(frames, CANVAS_H, CANVAS_W, FOOTSTEP_FRAMES)
}

/// Source frame used for output frame `i` when resampling `t` frames to `len`.
pub fn nearest_frame(i: usize, t: usize, len: usize) -> usize {
    if len < 2 {
        return 0;
    }
    (i as f64 * (t - 1) as f64 / (len - 1) as f64).round() as usize
}

/// Translates a T_f×H_f×W_f footstep so the bounding-box centre of its
/// peak-pressure frame sits on cell (canvas_h/2, canvas_w/2), then picks
/// `len` frames by nearest-index resampling.
pub fn standardize_footstep_to(frames: &Tensor, canvas_h: usize, canvas_w: usize, len: usize) -> Result<Tensor> {
    let s = frames.shape();
    if s.len() != 3 {
        return Err(contract(format!("footstep must be T×H×W, got {s:?}")));
    }
    let (t, h, w) = (s[0], s[1], s[2]);
    if h > canvas_h || w > canvas_w {
        return Err(Error::Size(format!("footstep {h}×{w} exceeds canvas {canvas_h}×{canvas_w}")));
    }
    let area = h * w;
    let data = frames.data();
    let peak = (0..t)
        .max_by(|&a, &b| {
            let sa: f64 = data[a * area..(a + 1) * area].iter().sum();
            let sb: f64 = data[b * area..(b + 1) * area].iter().sum();
            sa.total_cmp(&sb).then(b.cmp(&a))
        })
        .unwrap_or(0);
    let pf = &data[peak * area..(peak + 1) * area];
    let nz: Vec<(usize, usize)> = (0..area).filter(|&i| pf[i] != 0.0).map(|i| (i / w, i % w)).collect();
    if nz.is_empty() {
        return Err(contract("peak frame has no nonzero pixel"));
    }
    let r0 = nz.iter().map(|p| p.0).min().unwrap();
    let r1 = nz.iter().map(|p| p.0).max().unwrap();
    let c0 = nz.iter().map(|p| p.1).min().unwrap();
    let c1 = nz.iter().map(|p| p.1).max().unwrap();
    let dr = (canvas_h / 2) as i64 - ((r0 + r1) / 2) as i64;
    let dc = (canvas_w / 2) as i64 - ((c0 + c1) / 2) as i64;

    let mut out = vec![0.0; len * canvas_h * canvas_w];
    for i in 0..len {
        let src = nearest_frame(i, t, len);
        for r in 0..h {
            for c in 0..w {
                let v = data[src * area + r * w + c];
                if v == 0.0 {
                    continue;
                }
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                if rr < 0 || cc < 0 || rr >= canvas_h as i64 || cc >= canvas_w as i64 {
                    return Err(Error::Size(format!(
                        "pressure at ({r}, {c}) falls outside the {canvas_h}×{canvas_w} canvas after centring"
                    )));
                }
                out[(i * canvas_h + rr as usize) * canvas_w + cc as usize] = v;
            }
        }
    }
    Ok(Tensor::new([len, canvas_h, canvas_w], out)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_lands_at_centre() {
        let mut f = Tensor::zeros([5, 30, 20]);
        f.set(&[2, 3, 17], 4.0);
        let out = standardize_footstep(&f).unwrap();
        assert_eq!(out.shape(), &[101, 75, 40]);
        let idx = out.data().iter().position(|&v| v != 0.0).unwrap();
        assert_eq!((idx / 40) % 75, 37);
        assert_eq!(idx % 40, 20);
    }

    #[test]
    fn already_101_frames_keeps_order() {
        let f = Tensor::from_fn([101, 2, 2], |i| (i / 4) as f64 + 1.0);
        let out = standardize_footstep(&f).unwrap();
        for i in 0..101 {
            assert_eq!(out.at(&[i, 37, 20]), i as f64 + 1.0);
        }
    }

    #[test]
    fn oversized_and_empty_are_rejected() {
        assert!(matches!(standardize_footstep(&Tensor::ones([3, 80, 10])), Err(Error::Size(_))));
        assert!(matches!(standardize_footstep(&Tensor::zeros([3, 10, 10])), Err(Error::Contract(_))));
    }
}
