//! Epoch loop with cosine schedule, early stopping, and resumable state.

use log::info;
use plantar_autodiff::{Mode, Tape};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{total_loss, PriorInputs};
use super::optim::{adamw_step, cosine_lr, AdamState, AdamW};
use crate::error::{contract, Error, Result};
use crate::io::Checkpoint;
use crate::model::{Batch, Model, ModelConfig, ParameterStore};
use crate::preprocess::StanceSample;
use crate::priors::{PartitionMap, TemporalPrior};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub base_lr: f64,
    pub min_lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// β: weight of the temporal-prior term (ignored by variants without attention).
    pub prior_coeff: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 60,
            patience: 10,
            base_lr: 1e-3,
            min_lr: 5e-6,
            weight_decay: 1e-2,
            batch_size: 32,
            prior_coeff: 0.1,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("max_epochs and batch_size must be positive".into()));
        }
        if self.min_lr > self.base_lr {
            return Err(Error::Config(format!("min_lr {} exceeds base_lr {}", self.min_lr, self.base_lr)));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config("patience exceeds max_epochs".into()));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mse: f64,
}

/// Everything needed to continue an interrupted run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub epochs_completed: usize,
    /// Live weights (the checkpoint's main parameters hold the best snapshot).
    pub params: ParameterStore,
    pub optimizer: AdamState,
    pub best_val_loss: f64,
    /// 1-based epoch of the best snapshot; 0 before any epoch.
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Parameters are the minimum-validation-loss snapshot.
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Drives training one epoch at a time.
pub struct Trainer<'a> {
    model: Model,
    partition: PartitionMap,
    temporal: TemporalPrior,
    train: Vec<&'a StanceSample>,
    val_batches: Vec<Batch>,
    best: ParameterStore,
    state: TrainState,
    seed: u64,
}

/// Per-epoch generator: resuming at epoch e reproduces the original stream.
fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

impl<'a> Trainer<'a> {
    pub fn new(
        model_config: ModelConfig,
        train: &'a [StanceSample],
        val: &'a [StanceSample],
        partition: &PartitionMap,
        temporal: &TemporalPrior,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let model = Model::new(model_config, partition)?;
        let params = ParameterStore::init(&model.config, config.seed)?;
        let state = TrainState {
            epochs_completed: 0,
            optimizer: AdamState::for_store(&params),
            best_val_loss: f64::INFINITY,
            best_epoch: 0,
            history: Vec::new(),
            finished: false,
            params: params.clone(),
            config: config.clone(),
        };
        Self::assemble(model, partition, temporal, train, val, params, state, config.seed)
    }

    /// Continues the run stored in `ckpt`, which must carry training state.
    pub fn resume(ckpt: &Checkpoint, train: &'a [StanceSample], val: &'a [StanceSample]) -> Result<Self> {
        let state = ckpt
            .train_state
            .clone()
            .ok_or_else(|| contract("checkpoint has no training state to resume"))?;
        let model = Model::new(ckpt.model_config.clone(), &ckpt.partition)?;
        Self::assemble(
            model,
            &ckpt.partition,
            &ckpt.temporal_prior,
            train,
            val,
            ckpt.params.clone(),
            state,
            ckpt.seed,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        model: Model,
        partition: &PartitionMap,
        temporal: &TemporalPrior,
        train: &'a [StanceSample],
        val: &'a [StanceSample],
        best: ParameterStore,
        state: TrainState,
        seed: u64,
    ) -> Result<Self> {
        if train.is_empty() || val.is_empty() {
            return Err(contract("training and validation splits must be non-empty"));
        }
        if temporal.stance_len() != model.config.stance_len {
            return Err(contract("temporal prior length differs from the model's stance length"));
        }
        state.params.check_against(&model.config)?;
        let bs = state.config.batch_size;
        let val_refs: Vec<&StanceSample> = val.iter().collect();
        let val_batches = val_refs.chunks(bs).map(Batch::from_samples).collect::<Result<_>>()?;
        Ok(Trainer {
            model,
            partition: partition.clone(),
            temporal: temporal.clone(),
            train: train.iter().collect(),
            val_batches,
            best,
            state,
            seed,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.state.history
    }

    pub fn is_finished(&self) -> bool {
        self.state.finished
    }

    fn beta(&self) -> f64 {
        if self.model.config.variant.has_path_a() {
            self.state.config.prior_coeff
        } else {
            0.0
        }
    }

    fn prior_inputs(&self) -> PriorInputs<'_> {
        PriorInputs {
            temporal: &self.temporal,
            partition: &self.partition,
            block: self.model.config.cell_block(),
        }
    }

    /// Infer-mode (total loss, MSE) averaged over samples.
    pub fn evaluate(&self, params: &ParameterStore, batches: &[Batch]) -> Result<(f64, f64)> {
        let (mut loss, mut mse, mut n) = (0.0, 0.0, 0usize);
        for b in batches {
            let mut t = Tape::new();
            let p = params.bind(&mut t, false);
            let v = self.model.forward(&mut t, &p, params, b, Mode::Infer, 0)?;
            let l = total_loss(&mut t, &v, b, Some(self.prior_inputs()), self.beta())?;
            let m = total_loss(&mut t, &v, b, None, 0.0)?;
            loss += t.value(l).item() * b.batch_size() as f64;
            mse += t.value(m).item() * b.batch_size() as f64;
            n += b.batch_size();
        }
        Ok((loss / n as f64, mse / n as f64))
    }

    fn checkpoint_with(&self, params: ParameterStore) -> Checkpoint {
        Checkpoint {
            model_config: self.model.config.clone(),
            params,
            partition: self.partition.clone(),
            temporal_prior: self.temporal.clone(),
            train_state: Some(self.state.clone()),
            seed: self.seed,
        }
    }

    /// Snapshot for saving or resuming; its parameters are the best so far.
    pub fn checkpoint(&self) -> Checkpoint {
        self.checkpoint_with(self.best.clone())
    }

    /// Trains one epoch and updates early-stopping state.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        if self.state.finished {
            return Err(Error::Contract("training already finished".into()));
        }
        let cfg = self.state.config.clone();
        let e = self.state.epochs_completed;
        let lr = cosine_lr(e, cfg.max_epochs, cfg.base_lr, cfg.min_lr)?;
        let opt = cfg.optimizer();
        let mut rng = epoch_rng(self.seed, e);
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut rng);

        let mut params = self.state.params.clone();
        let mut adam = self.state.optimizer.clone();
        let (mut total, mut count) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let samples: Vec<&StanceSample> = chunk.iter().map(|&i| self.train[i]).collect();
            let batch = Batch::from_samples(&samples)?;
            let mut t = Tape::new();
            let p = params.bind(&mut t, true);
            let v = self.model.forward(&mut t, &p, &params, &batch, Mode::Train, rng.next_u64())?;
            let loss = total_loss(&mut t, &v, &batch, Some(self.prior_inputs()), self.beta())?;
            let lv = t.value(loss).item();
            if !lv.is_finite() {
                return Err(self.diverged(e + 1));
            }
            self.model.update_running_stats(&t, &v, &mut params)?;
            let mut grads = t.backward(loss)?;
            let grads = p.collect_grads(&mut grads, &params);
            adamw_step(&mut params, &grads, &mut adam, &opt, lr)?;
            total += lv * samples.len() as f64;
            count += samples.len();
        }
        let (val_loss, val_mse) = self.evaluate(&params, &self.val_batches)?;
        if !val_loss.is_finite() {
            return Err(self.diverged(e + 1));
        }
        let rec = EpochRecord {
            epoch: e + 1,
            lr,
            train_loss: total / count as f64,
            val_loss,
            val_mse,
        };
        info!(
            "{}",
            serde_json::to_string(&rec).unwrap_or_else(|_| format!("epoch {}", rec.epoch))
        );
        let st = &mut self.state;
        st.params = params;
        st.optimizer = adam;
        st.epochs_completed = e + 1;
        st.history.push(rec);
        if val_loss < st.best_val_loss {
            st.best_val_loss = val_loss;
            st.best_epoch = e + 1;
            self.best = st.params.clone();
        }
        if st.epochs_completed >= cfg.max_epochs || st.epochs_completed - st.best_epoch > cfg.patience {
            st.finished = true;
        }
        Ok(rec)
    }

    fn diverged(&self, epoch: usize) -> Error {
        Error::Diverged {
            epoch,
            last_good: Box::new(self.checkpoint()),
        }
    }

    /// Runs to completion and returns the best snapshot.
    pub fn run(mut self) -> Result<TrainOutcome> {
        while !self.state.finished {
            self.run_epoch()?;
        }
        let ckpt = self.checkpoint();
        Ok(TrainOutcome {
            stopped_early: self.state.epochs_completed < self.state.config.max_epochs,
            best_epoch: self.state.best_epoch,
            history: self.state.history.clone(),
            checkpoint: ckpt,
        })
    }
}

/// Trains `model_config` from scratch on the given split and priors.
pub fn train(
    model_config: ModelConfig,
    train: &[StanceSample],
    val: &[StanceSample],
    partition: &PartitionMap,
    temporal: &TemporalPrior,
    config: TrainConfig,
) -> Result<TrainOutcome> {
    Trainer::new(model_config, train, val, partition, temporal, config)?.run()
}

/// Early-stopping rule on a bare loss sequence: returns (stop epoch, best epoch), both 1-based.
pub fn early_stop_point(val_losses: &[f64], patience: usize) -> (usize, usize) {
    let (mut best, mut best_epoch) = (f64::INFINITY, 0);
    for (i, &v) in val_losses.iter().enumerate() {
        let epoch = i + 1;
        if v < best {
            best = v;
            best_epoch = epoch;
        }
        if epoch - best_epoch > patience {
            return (epoch, best_epoch);
        }
    }
    (val_losses.len(), best_epoch)
}
