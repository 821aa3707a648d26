//! Delimited-text ingest of raw insole and force-plate recordings.
//!
//! Pressure: one row per frame with H·W values in row-major order.
//! Plate: one row per sample with GRF_ML, GRF_AP, GRF_V, GRM_ML, GRM_AP, GRM_V.
//! Either file may start with a header row; lines starting with `#` are ignored.
//! Trial metadata (subject, rates, grid) comes from a small TOML file.

use std::path::Path;

use plantar_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{FootSide, PlateStream, PressureSequence, RawTrial, SubjectMeta, NUM_CHANNELS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMeta {
    pub subject: SubjectMeta,
    pub grid_h: usize,
    pub grid_w: usize,
    pub insole_hz: f64,
    pub plate_hz: f64,
    #[serde(default)]
    pub foot_side: FootSide,
    #[serde(default)]
    pub speed_mps: f64,
}

impl TrialMeta {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("trial metadata: {e}")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("trial metadata: {e}")))
    }
}

/// Parses a delimited numeric table with exactly `cols` columns.
///
/// The delimiter is a comma unless the first data line has a tab or semicolon.
pub fn read_table(text: &str, cols: usize, what: &str) -> Result<Vec<f64>> {
    let first = text.lines().find(|l| !l.trim().is_empty() && !l.starts_with('#')).unwrap_or("");
    let delim = if first.contains('\t') {
        b'\t'
    } else if first.contains(';') {
        b';'
    } else {
        b','
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delim)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("{what}: {e}")))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let row = match parsed {
            Ok(v) => v,
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("{what} row {}: {e}", i + 1))),
        };
        if row.len() != cols {
            return Err(Error::Parse(format!(
                "{what} row {}: {} columns, expected {cols}",
                i + 1,
                row.len()
            )));
        }
        out.extend(row);
    }
    if out.is_empty() {
        return Err(Error::Parse(format!("{what}: no data rows")));
    }
    Ok(out)
}

/// Builds a trial from the text of the three input files.
pub fn parse_raw_trial(pressure_text: &str, plate_text: &str, meta: &TrialMeta) -> Result<RawTrial> {
    let area = meta.grid_h * meta.grid_w;
    let p = read_table(pressure_text, area, "pressure")?;
    let t = p.len() / area;
    let pressure = PressureSequence::new(
        Tensor::new([t, meta.grid_h, meta.grid_w], p)?,
        meta.insole_hz,
        meta.subject.clone(),
        meta.foot_side,
        meta.speed_mps,
    )?;
    let f = read_table(plate_text, NUM_CHANNELS, "plate")?;
    let tp = f.len() / NUM_CHANNELS;
    Ok(RawTrial {
        pressure,
        plate: PlateStream {
            data: Tensor::new([tp, NUM_CHANNELS], f)?,
            sample_rate_hz: meta.plate_hz,
        },
    })
}

pub fn load_raw_trial(pressure: &Path, plate: &Path, meta: &Path) -> Result<RawTrial> {
    let meta = TrialMeta::from_toml(&std::fs::read_to_string(meta)?)?;
    parse_raw_trial(&std::fs::read_to_string(pressure)?, &std::fs::read_to_string(plate)?, &meta)
}

/// Writes a trial back out as (pressure csv, plate csv, metadata toml) text.
pub fn format_raw_trial(trial: &RawTrial) -> Result<(String, String, String)> {
    let table = |t: &Tensor, cols: usize| -> String {
        let mut s = String::new();
        for row in t.data().chunks(cols) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    };
    let (h, w) = trial.pressure.grid();
    let meta = TrialMeta {
        subject: trial.pressure.subject.clone(),
        grid_h: h,
        grid_w: w,
        insole_hz: trial.pressure.sample_rate_hz,
        plate_hz: trial.plate.sample_rate_hz,
        foot_side: trial.pressure.foot_side,
        speed_mps: trial.pressure.speed_mps,
    };
    let mut plate = String::from("GRF_ML,GRF_AP,GRF_V,GRM_ML,GRM_AP,GRM_V\n");
    plate.push_str(&table(&trial.plate.data, NUM_CHANNELS));
    Ok((table(&trial.pressure.frames, h * w), plate, meta.to_toml()?))
}
