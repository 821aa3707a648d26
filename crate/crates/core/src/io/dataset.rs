//! Stance-sample container: binary file plus a text summary alongside.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{contract, Error, Result};
use crate::preprocess::{FootSide, StanceSample, SubjectMeta, CHANNEL_LABELS, NUM_CHANNELS};

use super::binfmt::{frame, sidecar_path, unframe, write_atomic, Reader, Writer};

pub const DATASET_MAGIC: &[u8; 8] = b"PGRFDSET";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub grid_h: usize,
    pub grid_w: usize,
    pub stance_len: usize,
    pub channel_labels: Vec<String>,
    pub foot_side: FootSide,
    pub subjects: Vec<SubjectMeta>,
    /// Stances dropped during preprocessing (too short to resample).
    pub skipped_stances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetContainer {
    pub header: DatasetHeader,
    pub samples: Vec<StanceSample>,
}

impl DatasetContainer {
    /// Builds a container, taking shapes from the first sample.
    pub fn new(subjects: Vec<SubjectMeta>, foot_side: FootSide, samples: Vec<StanceSample>, skipped: usize) -> Result<Self> {
        let first = samples.first().ok_or_else(|| contract("dataset has no samples"))?;
        let (h, w) = first.grid();
        let c = DatasetContainer {
            header: DatasetHeader {
                grid_h: h,
                grid_w: w,
                stance_len: first.stance_len(),
                channel_labels: CHANNEL_LABELS.iter().map(|s| s.to_string()).collect(),
                foot_side,
                subjects,
                skipped_stances: skipped,
            },
            samples,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.header;
        if h.channel_labels.len() != NUM_CHANNELS {
            return Err(contract(format!("{} channel labels, expected {NUM_CHANNELS}", h.channel_labels.len())));
        }
        let mut ids = BTreeMap::new();
        for s in &h.subjects {
            s.validate()?;
            if ids.insert(s.id.as_str(), ()).is_some() {
                return Err(contract(format!("subject `{}` listed twice", s.id)));
            }
        }
        for (i, s) in self.samples.iter().enumerate() {
            s.validate()?;
            if s.grid() != (h.grid_h, h.grid_w) || s.stance_len() != h.stance_len {
                return Err(contract(format!(
                    "sample {i} is {:?}×{:?}, header says {}×{}×{}",
                    s.stance_len(),
                    s.grid(),
                    h.stance_len,
                    h.grid_h,
                    h.grid_w
                )));
            }
            if !ids.contains_key(s.subject_id.as_str()) {
                return Err(contract(format!("sample {i} refers to unknown subject `{}`", s.subject_id)));
            }
        }
        Ok(())
    }

    pub fn subject(&self, id: &str) -> Option<&SubjectMeta> {
        self.header.subjects.iter().find(|s| s.id == id)
    }

    pub fn summary(&self) -> String {
        let h = &self.header;
        let mut s = String::new();
        let _ = writeln!(s, "dataset v{DATASET_VERSION}");
        let _ = writeln!(s, "grid {}x{}  stance_len {}  foot {:?}", h.grid_h, h.grid_w, h.stance_len, h.foot_side);
        let _ = writeln!(s, "channels {}", h.channel_labels.join(" "));
        let _ = writeln!(s, "samples {}  skipped_stances {}", self.samples.len(), h.skipped_stances);
        let _ = writeln!(s, "subjects {}", h.subjects.len());
        for m in &h.subjects {
            let n = self.samples.iter().filter(|x| x.subject_id == m.id).count();
            let _ = writeln!(
                s,
                "  {:<10} height {:.0} mm  weight {:.1} kg  age {:.0}  samples {n}",
                m.id, m.height_mm, m.weight_kg, m.age_years
            );
        }
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let mut w = Writer::new();
        w.u64(h.grid_h as u64);
        w.u64(h.grid_w as u64);
        w.u64(h.stance_len as u64);
        w.u64(h.channel_labels.len() as u64);
        for l in &h.channel_labels {
            w.str(l);
        }
        w.u8(foot_code(h.foot_side));
        w.u64(h.skipped_stances as u64);
        w.u64(h.subjects.len() as u64);
        for m in &h.subjects {
            w.str(&m.id);
            w.f64(m.height_mm);
            w.f64(m.weight_kg);
            w.f64(m.age_years);
        }
        w.u64(self.samples.len() as u64);
        for s in &self.samples {
            w.str(&s.subject_id);
            w.f64(s.speed_mps);
            w.tensor(&s.pressure);
            w.tensor(&s.targets);
        }
        frame(DATASET_MAGIC, DATASET_VERSION, &w.into_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(unframe(bytes, DATASET_MAGIC, DATASET_VERSION)?);
        let grid_h = r.u64()? as usize;
        let grid_w = r.u64()? as usize;
        let stance_len = r.u64()? as usize;
        let n_labels = r.len(8)?;
        let channel_labels = (0..n_labels).map(|_| r.str()).collect::<Result<_>>()?;
        let foot_side = foot_from_code(r.u8()?)?;
        let skipped_stances = r.u64()? as usize;
        let n_subjects = r.len(32)?;
        let subjects = (0..n_subjects)
            .map(|_| {
                Ok(SubjectMeta {
                    id: r.str()?,
                    height_mm: r.f64()?,
                    weight_kg: r.f64()?,
                    age_years: r.f64()?,
                })
            })
            .collect::<Result<_>>()?;
        let n_samples = r.len(16)?;
        let samples = (0..n_samples)
            .map(|_| {
                Ok(StanceSample {
                    subject_id: r.str()?,
                    speed_mps: r.f64()?,
                    pressure: r.tensor()?,
                    targets: r.tensor()?,
                })
            })
            .collect::<Result<_>>()?;
        r.finish()?;
        let c = DatasetContainer {
            header: DatasetHeader {
                grid_h,
                grid_w,
                stance_len,
                channel_labels,
                foot_side,
                subjects,
                skipped_stances,
            },
            samples,
        };
        c.validate().map_err(|e| Error::Format(format!("container fails validation: {e}")))?;
        Ok(c)
    }
}

pub(crate) fn foot_code(f: FootSide) -> u8 {
    match f {
        FootSide::Left => 0,
        FootSide::Right => 1,
    }
}

pub(crate) fn foot_from_code(c: u8) -> Result<FootSide> {
    match c {
        0 => Ok(FootSide::Left),
        1 => Ok(FootSide::Right),
        other => Err(Error::Format(format!("unknown foot side code {other}"))),
    }
}

/// Writes the container atomically, plus a `.txt` summary.
pub fn save_dataset(container: &DatasetContainer, path: &Path) -> Result<()> {
    container.validate()?;
    write_atomic(path, &container.to_bytes())?;
    write_atomic(&sidecar_path(path), container.summary().as_bytes())
}

pub fn load_dataset(path: &Path) -> Result<DatasetContainer> {
    DatasetContainer::from_bytes(&std::fs::read(path)?)
}
