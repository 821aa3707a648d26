use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::mean_map::MeanPressureMap;
use super::otsu::ActiveMask;
use crate::error::{contract, Error, Result};
use crate::preprocess::FootSide;

pub const NUM_REGIONS: usize = 6;
pub const BACKGROUND: i8 = -1;

pub const REGION_NAMES: [&str; NUM_REGIONS] = [
    "forefoot-medial",
    "forefoot-lateral",
    "midfoot-medial",
    "midfoot-lateral",
    "hindfoot-medial",
    "hindfoot-lateral",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionOptions {
    pub forefoot_fraction: f64,
    pub hindfoot_fraction: f64,
    pub foot_side: FootSide,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            forefoot_fraction: 0.54,
            hindfoot_fraction: 0.29,
            foot_side: FootSide::Right,
        }
    }
}

/// Band of a region label: 0 forefoot, 1 midfoot, 2 hindfoot.
pub fn region_band(label: usize) -> usize {
    label / 2
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PartitionMeta {
    pub first_row: usize,
    pub last_row: usize,
    /// Rows in each band: forefoot, midfoot, hindfoot.
    pub band_rows: [usize; 3],
    /// Exact weighted centroid column per row; `None` for rows without active cells.
    pub midlines: Vec<Option<f64>>,
    pub empty_regions: Vec<usize>,
}

/// Per-cell anatomical region labels; −1 is background. Toes are at row 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionMap {
    pub h: usize,
    pub w: usize,
    pub labels: Vec<i8>,
    pub foot_side: FootSide,
    pub meta: PartitionMeta,
}

impl PartitionMap {
    pub fn label(&self, r: usize, c: usize) -> i8 {
        self.labels[r * self.w + c]
    }

    pub fn region_cells(&self, k: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == k as i8).collect()
    }

    pub fn region_sizes(&self) -> [usize; NUM_REGIONS] {
        let mut s = [0; NUM_REGIONS];
        for &l in &self.labels {
            if l >= 0 {
                s[l as usize] += 1;
            }
        }
        s
    }

    /// Plain-text grid: one line per row, `.` for background, digits for regions.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in 0..self.h {
            for c in 0..self.w {
                let l = self.label(r, c);
                s.push(if l < 0 { '.' } else { (b'0' + l as u8) as char });
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, foot_side: FootSide) -> Result<Self> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let w = rows.first().map(|r| r.trim().len()).unwrap_or(0);
        if w == 0 {
            return Err(Error::Parse("empty partition grid".into()));
        }
        let mut labels = Vec::with_capacity(rows.len() * w);
        for r in &rows {
            let r = r.trim();
            if r.len() != w {
                return Err(Error::Parse("ragged partition grid".into()));
            }
            for ch in r.chars() {
                labels.push(match ch {
                    '.' => BACKGROUND,
                    '0'..='5' => ch as i8 - b'0' as i8,
                    other => return Err(Error::Parse(format!("bad partition label `{other}`"))),
                });
            }
        }
        let mut map = PartitionMap {
            h: rows.len(),
            w,
            labels,
            foot_side,
            meta: PartitionMeta::default(),
        };
        map.meta.empty_regions = (0..NUM_REGIONS).filter(|&k| map.region_sizes()[k] == 0).collect();
        Ok(map)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let sizes = self.region_sizes();
        for (k, name) in REGION_NAMES.iter().enumerate() {
            let _ = writeln!(s, "region {k} {name}: {} cells", sizes[k]);
        }
        s
    }
}

/// Splits the active mask into three row bands × two sides of a per-row
/// pressure-weighted midline.
///
/// Bands are measured over the active row extent: the top `forefoot_fraction`
/// of rows is forefoot, the bottom `hindfoot_fraction` hindfoot. A cell whose
/// column equals the rounded midline goes to the medial side. For a right
/// foot medial is toward column 0.
pub fn build_partition_map(mask: &ActiveMask, mean: &MeanPressureMap, opts: &PartitionOptions) -> Result<PartitionMap> {
    let (h, w) = (mask.h, mask.w);
    if mean.dims() != (h, w) {
        return Err(contract("mask and mean map shapes differ"));
    }
    let (ff, hf) = (opts.forefoot_fraction, opts.hindfoot_fraction);
    if !(ff > 0.0 && hf >= 0.0 && ff + hf < 1.0) {
        return Err(contract(format!("band fractions {ff} and {hf} must be positive with sum < 1")));
    }
    let active_rows: Vec<usize> = (0..h).filter(|&r| (0..w).any(|c| mask.get(r, c))).collect();
    let (Some(&first), Some(&last)) = (active_rows.first(), active_rows.last()) else {
        return Err(contract("active mask is empty"));
    };
    let extent = last - first + 1;
    let n_fore = ((ff * extent as f64).round() as usize).min(extent);
    let n_hind = ((hf * extent as f64).round() as usize).min(extent - n_fore);
    let band_of = |r: usize| {
        let rel = r - first;
        if rel < n_fore {
            0
        } else if rel >= extent - n_hind {
            2
        } else {
            1
        }
    };

    let m = mean.grid.data();
    let mut labels = vec![BACKGROUND; h * w];
    let mut midlines = vec![None; h];
    for r in first..=last {
        let cols: Vec<usize> = (0..w).filter(|&c| mask.get(r, c)).collect();
        if cols.is_empty() {
            continue;
        }
        let mass: f64 = cols.iter().map(|&c| m[r * w + c]).sum();
        let centroid = if mass > 0.0 {
            cols.iter().map(|&c| m[r * w + c] * c as f64).sum::<f64>() / mass
        } else {
            cols.iter().sum::<usize>() as f64 / cols.len() as f64
        };
        midlines[r] = Some(centroid);
        let mid = centroid.round() as usize;
        let band = band_of(r);
        for c in cols {
            let low_side = c <= mid;
            let medial = match opts.foot_side {
                FootSide::Right => low_side,
                FootSide::Left => c >= mid,
            };
            labels[r * w + c] = (band * 2 + usize::from(!medial)) as i8;
        }
    }
    let mut map = PartitionMap {
        h,
        w,
        labels,
        foot_side: opts.foot_side,
        meta: PartitionMeta {
            first_row: first,
            last_row: last,
            band_rows: [n_fore, extent - n_fore - n_hind, n_hind],
            midlines,
            empty_regions: Vec::new(),
        },
    };
    let sizes = map.region_sizes();
    map.meta.empty_regions = (0..NUM_REGIONS).filter(|&k| sizes[k] == 0).collect();
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use plantar_autodiff::Tensor;

    fn full_mask(h: usize, w: usize) -> ActiveMask {
        ActiveMask {
            h,
            w,
            cells: vec![true; h * w],
            threshold: 0.0,
        }
    }

    #[test]
    fn uniform_rectangle_bands() {
        let (h, w) = (100, 9);
        let mean = MeanPressureMap {
            grid: Tensor::ones([h, w]),
        };
        let p = build_partition_map(&full_mask(h, w), &mean, &PartitionOptions::default()).unwrap();
        assert_eq!(p.meta.band_rows, [54, 17, 29]);
        for r in 0..h {
            let band = if r <= 53 { 0 } else if r <= 70 { 1 } else { 2 };
            assert_eq!(p.meta.midlines[r], Some(4.0));
            for c in 0..w {
                let side = usize::from(c > 4);
                assert_eq!(p.label(r, c), (band * 2 + side) as i8, "row {r} col {c}");
            }
        }
        assert!(p.meta.empty_regions.is_empty());
    }

    #[test]
    fn single_row_leaves_four_regions_empty() {
        let mut mask = full_mask(5, 6);
        for r in [0, 1, 3, 4] {
            for c in 0..6 {
                mask.cells[r * 6 + c] = false;
            }
        }
        let mean = MeanPressureMap {
            grid: Tensor::ones([5, 6]),
        };
        let p = build_partition_map(&mask, &mean, &PartitionOptions::default()).unwrap();
        assert_eq!(p.meta.empty_regions, vec![2, 3, 4, 5]);
        assert_eq!(p.region_sizes()[0] + p.region_sizes()[1], 6);
    }

    #[test]
    fn left_foot_mirrors_sides() {
        let mean = MeanPressureMap {
            grid: Tensor::ones([10, 5]),
        };
        let opts = PartitionOptions {
            foot_side: FootSide::Left,
            ..Default::default()
        };
        let p = build_partition_map(&full_mask(10, 5), &mean, &opts).unwrap();
        assert_eq!(p.label(0, 0), 1);
        assert_eq!(p.label(0, 4), 0);
        assert_eq!(p.label(0, 2), 0);
    }

    #[test]
    fn text_round_trip() {
        let mean = MeanPressureMap {
            grid: Tensor::from_fn([12, 4], |i| 1.0 + (i % 3) as f64),
        };
        let p = build_partition_map(&full_mask(12, 4), &mean, &PartitionOptions::default()).unwrap();
        let q = PartitionMap::from_text(&p.to_text(), FootSide::Right).unwrap();
        assert_eq!(q.labels, p.labels);
    }
}
