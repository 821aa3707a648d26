//! Fourier positional encodings of sensor coordinates and of the centre of pressure.

use plantar_autodiff::{Tape, Tensor, Var};

use crate::error::{contract, Result};
use crate::model::{Linear, Mlp};

/// Normalized (x, y) per grid cell in row-major order; x follows columns, y rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorCoordinates {
    pub coords: Vec<[f64; 2]>,
}

fn axis_pos(i: usize, n: usize) -> f64 {
    if n < 2 {
        0.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

impl SensorCoordinates {
    pub fn grid(h: usize, w: usize) -> Self {
        SensorCoordinates {
            coords: (0..h * w).map(|i| [axis_pos(i % w, w), axis_pos(i / w, h)]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

/// Pressure-weighted centroid of one frame; `None` when the frame carries no load.
pub fn compute_cop(frame: &[f64], coords: &SensorCoordinates) -> Result<Option<[f64; 2]>> {
    if frame.len() != coords.len() {
        return Err(contract(format!("frame has {} cells, coordinates {}", frame.len(), coords.len())));
    }
    let mut total = 0.0;
    let mut acc = [0.0, 0.0];
    for (&p, c) in frame.iter().zip(&coords.coords) {
        if p < 0.0 {
            return Err(contract("negative pressure in CoP computation"));
        }
        total += p;
        acc[0] += p * c[0];
        acc[1] += p * c[1];
    }
    Ok((total > 0.0).then(|| [acc[0] / total, acc[1] / total]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoPTrajectory {
    pub cop: Vec<[f64; 2]>,
    pub valid: Vec<bool>,
}

/// CoP per frame of an L×H×W array; unloaded frames repeat the last valid
/// point, or the grid centre before the first one.
pub fn cop_trajectory(frames: &Tensor) -> Result<CoPTrajectory> {
    let s = frames.shape();
    if s.len() != 3 {
        return Err(contract(format!("expected L×H×W frames, got {s:?}")));
    }
    let coords = SensorCoordinates::grid(s[1], s[2]);
    let mut last = [0.0, 0.0];
    let mut out = CoPTrajectory {
        cop: Vec::with_capacity(s[0]),
        valid: Vec::with_capacity(s[0]),
    };
    for f in frames.data().chunks(s[1] * s[2]) {
        match compute_cop(f, &coords)? {
            Some(c) => {
                last = c;
                out.cop.push(c);
                out.valid.push(true);
            }
            None => {
                out.cop.push(last);
                out.valid.push(false);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FourierConfig {
    pub num_bands: usize,
}

impl FourierConfig {
    /// Bands such that the raw feature width equals `dim` (at least one band).
    pub fn for_dim(dim: usize) -> Self {
        FourierConfig {
            num_bands: (dim / 4).max(1),
        }
    }

    pub fn output_dim(&self) -> usize {
        4 * self.num_bands
    }
}

/// `[sin(2⁰πx), cos(2⁰πx), …, sin(2^{L−1}πx), cos(2^{L−1}πx)]` then the same for y.
pub fn fourier_features(point: [f64; 2], cfg: FourierConfig) -> Vec<f64> {
    let mut out = Vec::with_capacity(cfg.output_dim());
    for v in point {
        let mut freq = std::f64::consts::PI;
        for _ in 0..cfg.num_bands {
            let a = freq * v;
            out.push(a.sin());
            out.push(a.cos());
            freq *= 2.0;
        }
    }
    out
}

/// Stacks Fourier features of many points into an n×4L tensor.
pub fn fourier_matrix(points: &[[f64; 2]], cfg: FourierConfig) -> Tensor {
    let data: Vec<f64> = points.iter().flat_map(|&p| fourier_features(p, cfg)).collect();
    Tensor::new([points.len(), cfg.output_dim()], data).expect("non-empty point list")
}

/// N×d_pos projection of the fixed sensor coordinates.
pub fn encode_coordinates(tape: &mut Tape, coords: &SensorCoordinates, cfg: FourierConfig, proj: &Linear) -> Result<Var> {
    check_width(tape, proj.weight, cfg)?;
    let g = tape.constant(fourier_matrix(&coords.coords, cfg));
    proj.apply(tape, g)
}

/// L×d_cop encoding of a CoP trajectory: Fourier features → Linear → ReLU → Linear.
pub fn encode_cop(tape: &mut Tape, traj: &CoPTrajectory, cfg: FourierConfig, mlp: &Mlp) -> Result<Var> {
    check_width(tape, mlp.fc1.weight, cfg)?;
    let g = tape.constant(fourier_matrix(&traj.cop, cfg));
    mlp.apply(tape, g)
}

fn check_width(tape: &Tape, weight: Var, cfg: FourierConfig) -> Result<()> {
    let rows = tape.shape(weight)[0];
    if rows != cfg.output_dim() {
        return Err(contract(format!(
            "projection expects {rows} inputs but Fourier width is {}",
            cfg.output_dim()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cop_point_mass_and_uniform() {
        let c = SensorCoordinates::grid(3, 4);
        let mut f = vec![0.0; 12];
        f[6] = 2.5;
        assert_eq!(compute_cop(&f, &c).unwrap(), Some(c.coords[6]));
        let u = compute_cop(&[1.0; 12], &c).unwrap().unwrap();
        assert!(u[0].abs() < 1e-12 && u[1].abs() < 1e-12);
        assert_eq!(compute_cop(&[0.0; 12], &c).unwrap(), None);
        f[0] = -1.0;
        assert!(compute_cop(&f, &c).is_err());
    }

    #[test]
    fn weighted_pair() {
        let c = SensorCoordinates::grid(1, 5);
        let mut f = vec![0.0; 5];
        f[0] = 1.0;
        f[4] = 3.0;
        let p = compute_cop(&f, &c).unwrap().unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn fourier_exact_values() {
        let z = fourier_features([0.0, 0.0], FourierConfig { num_bands: 3 });
        for pair in z.chunks(2) {
            assert_eq!(pair, &[0.0, 1.0]);
        }
        let v = fourier_features([1.0, 0.0], FourierConfig { num_bands: 1 });
        assert!(v[0].abs() < 1e-12 && (v[1] + 1.0).abs() < 1e-12);
        assert_eq!(&v[2..], &[0.0, 1.0]);
    }

    #[test]
    fn carry_forward_of_empty_frames() {
        let mut f = Tensor::zeros([4, 2, 2]);
        f.set(&[1, 0, 0], 1.0);
        let t = cop_trajectory(&f).unwrap();
        assert_eq!(t.valid, vec![false, true, false, false]);
        assert_eq!(t.cop[0], [0.0, 0.0]);
        assert_eq!(t.cop[3], [-1.0, -1.0]);
    }
}
