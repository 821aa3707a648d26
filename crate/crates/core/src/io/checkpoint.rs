//! Model checkpoints: configuration, weights, priors and optional training state.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use plantar_autodiff::Tensor;

use super::binfmt::{frame, sidecar_path, unframe, write_atomic, Reader, Writer};
use super::dataset::{foot_code, foot_from_code};
use crate::error::{Error, Result};
use crate::model::{parameter_count, ModelConfig, ParameterStore};
use crate::priors::{PartitionMap, PartitionMeta, TemporalPrior, REGION_NAMES};
use crate::train::{AdamState, EpochRecord, TrainConfig, TrainState};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PGRFCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    /// Best-validation weights when produced by training.
    pub params: ParameterStore,
    pub partition: PartitionMap,
    pub temporal_prior: TemporalPrior,
    pub train_state: Option<TrainState>,
    pub seed: u64,
}

fn put_map(w: &mut Writer, m: &BTreeMap<String, Tensor>) {
    w.u64(m.len() as u64);
    for (k, v) in m {
        w.str(k);
        w.tensor(v);
    }
}

fn get_map(r: &mut Reader<'_>) -> Result<BTreeMap<String, Tensor>> {
    let n = r.len(8)?;
    (0..n).map(|_| Ok((r.str()?, r.tensor()?))).collect()
}

fn put_store(w: &mut Writer, s: &ParameterStore) {
    put_map(w, &s.params);
    put_map(w, &s.buffers);
}

fn get_store(r: &mut Reader<'_>) -> Result<ParameterStore> {
    Ok(ParameterStore {
        params: get_map(r)?,
        buffers: get_map(r)?,
    })
}

fn put_json<T: serde::Serialize>(w: &mut Writer, v: &T) -> Result<()> {
    let s = serde_json::to_string(v).map_err(|e| Error::Format(format!("serializing config: {e}")))?;
    w.str(&s);
    Ok(())
}

fn get_json<T: serde::de::DeserializeOwned>(r: &mut Reader<'_>) -> Result<T> {
    serde_json::from_str(&r.str()?).map_err(|e| Error::Format(format!("embedded config: {e}")))
}

fn put_partition(w: &mut Writer, p: &PartitionMap) {
    w.u64(p.h as u64);
    w.u64(p.w as u64);
    w.u8(foot_code(p.foot_side));
    w.u64(p.labels.len() as u64);
    for &l in &p.labels {
        w.u8(l as u8);
    }
    let m = &p.meta;
    w.u64(m.first_row as u64);
    w.u64(m.last_row as u64);
    for &b in &m.band_rows {
        w.u64(b as u64);
    }
    w.u64(m.midlines.len() as u64);
    for ml in &m.midlines {
        match ml {
            Some(v) => {
                w.u8(1);
                w.f64(*v);
            }
            None => w.u8(0),
        }
    }
    w.u64(m.empty_regions.len() as u64);
    for &e in &m.empty_regions {
        w.u64(e as u64);
    }
}

fn get_partition(r: &mut Reader<'_>) -> Result<PartitionMap> {
    let h = r.u64()? as usize;
    let w = r.u64()? as usize;
    let foot_side = foot_from_code(r.u8()?)?;
    let n = r.len(1)?;
    if n != h * w {
        return Err(Error::Format(format!("partition has {n} labels for a {h}×{w} grid")));
    }
    let labels = (0..n).map(|_| r.u8().map(|b| b as i8)).collect::<Result<Vec<_>>>()?;
    let first_row = r.u64()? as usize;
    let last_row = r.u64()? as usize;
    let mut band_rows = [0usize; 3];
    for b in &mut band_rows {
        *b = r.u64()? as usize;
    }
    let nm = r.len(1)?;
    let midlines = (0..nm)
        .map(|_| match r.u8()? {
            0 => Ok(None),
            1 => Ok(Some(r.f64()?)),
            t => Err(Error::Format(format!("bad midline tag {t}"))),
        })
        .collect::<Result<_>>()?;
    let ne = r.len(8)?;
    let empty_regions = (0..ne).map(|_| r.u64().map(|v| v as usize)).collect::<Result<_>>()?;
    Ok(PartitionMap {
        h,
        w,
        labels,
        foot_side,
        meta: PartitionMeta {
            first_row,
            last_row,
            band_rows,
            midlines,
            empty_regions,
        },
    })
}

fn put_state(w: &mut Writer, s: &TrainState) -> Result<()> {
    put_json(w, &s.config)?;
    w.u64(s.epochs_completed as u64);
    put_store(w, &s.params);
    w.u64(s.optimizer.step);
    put_map(w, &s.optimizer.m);
    put_map(w, &s.optimizer.v);
    w.f64(s.best_val_loss);
    w.u64(s.best_epoch as u64);
    w.u64(s.history.len() as u64);
    for h in &s.history {
        w.u64(h.epoch as u64);
        w.f64(h.lr);
        w.f64(h.train_loss);
        w.f64(h.val_loss);
        w.f64(h.val_mse);
    }
    w.u8(s.finished as u8);
    Ok(())
}

fn get_state(r: &mut Reader<'_>) -> Result<TrainState> {
    let config: TrainConfig = get_json(r)?;
    let epochs_completed = r.u64()? as usize;
    let params = get_store(r)?;
    let optimizer = AdamState {
        step: r.u64()?,
        m: get_map(r)?,
        v: get_map(r)?,
    };
    let best_val_loss = r.f64()?;
    let best_epoch = r.u64()? as usize;
    let n = r.len(40)?;
    let history = (0..n)
        .map(|_| {
            Ok(EpochRecord {
                epoch: r.u64()? as usize,
                lr: r.f64()?,
                train_loss: r.f64()?,
                val_loss: r.f64()?,
                val_mse: r.f64()?,
            })
        })
        .collect::<Result<_>>()?;
    let finished = r.u8()? != 0;
    Ok(TrainState {
        config,
        epochs_completed,
        params,
        optimizer,
        best_val_loss,
        best_epoch,
        history,
        finished,
    })
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        put_json(&mut w, &self.model_config)?;
        w.u64(self.seed);
        put_store(&mut w, &self.params);
        put_partition(&mut w, &self.partition);
        w.tensor(&self.temporal_prior.p);
        w.f64(self.temporal_prior.epsilon);
        match &self.train_state {
            Some(s) => {
                w.u8(1);
                put_state(&mut w, s)?;
            }
            None => w.u8(0),
        }
        Ok(frame(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, &w.into_bytes()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(unframe(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?);
        let model_config: ModelConfig = get_json(&mut r)?;
        let seed = r.u64()?;
        let params = get_store(&mut r)?;
        let partition = get_partition(&mut r)?;
        let temporal_prior = TemporalPrior {
            p: r.tensor()?,
            epsilon: r.f64()?,
        };
        let train_state = match r.u8()? {
            0 => None,
            1 => Some(get_state(&mut r)?),
            t => return Err(Error::Format(format!("bad training-state tag {t}"))),
        };
        r.finish()?;
        params
            .check_against(&model_config)
            .map_err(|e| Error::Format(format!("checkpoint weights do not match its config: {e}")))?;
        Ok(Checkpoint {
            model_config,
            params,
            partition,
            temporal_prior,
            train_state,
            seed,
        })
    }

    pub fn summary(&self) -> String {
        let c = &self.model_config;
        let mut s = String::new();
        let _ = writeln!(s, "checkpoint v{CHECKPOINT_VERSION}  variant {}  seed {}", c.variant, self.seed);
        let _ = writeln!(
            s,
            "grid {}x{}  stance_len {}  parameters {}",
            c.grid_h,
            c.grid_w,
            c.stance_len,
            parameter_count(c)
        );
        if let Some(st) = &self.train_state {
            let _ = writeln!(
                s,
                "epochs {}  best_epoch {}  best_val_loss {:.6}",
                st.epochs_completed, st.best_epoch, st.best_val_loss
            );
        }
        let _ = writeln!(s, "\npartition ({})", self.partition.summary().trim_end());
        s.push_str(&self.partition.to_text());
        let _ = writeln!(s, "\ntemporal prior (rows = stance frames)");
        let _ = writeln!(s, "{}", REGION_NAMES.join(" "));
        for t in 0..self.temporal_prior.stance_len() {
            let row: Vec<String> = self.temporal_prior.row(t).iter().map(|v| format!("{v:.4}")).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
        s
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, &ckpt.to_bytes()?)?;
    write_atomic(&sidecar_path(path), ckpt.summary().as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
