//! k-fold cross-validation of networks and reference predictors.

use plantar_autodiff::Tensor;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::folds::{make_folds, FoldAssignment, FoldMode};
use super::metrics::{compute_metrics, MetricsOptions, MetricsReport};
use super::trainer::{train, EpochRecord, TrainConfig};
use crate::error::{contract, Result};
use crate::io::Checkpoint;
use crate::model::{Batch, Model, ModelConfig};
use crate::preprocess::{StanceSample, CHANNEL_LABELS, NUM_CHANNELS};
use crate::priors::{build_priors, PartitionOptions};

/// Something that can be fitted on one split and predict another.
pub trait FoldModel {
    fn name(&self) -> String;

    /// Predictions for `test` as M×L×6, plus the training history if any.
    fn fit_predict(&self, train: &[StanceSample], test: &[StanceSample], seed: u64) -> Result<(Tensor, Vec<EpochRecord>)>;
}

/// Runs `model` over `samples` in batches and stacks the outputs to M×L×6.
pub fn predict_all(model: &Model, ckpt: &Checkpoint, samples: &[StanceSample], batch_size: usize) -> Result<Tensor> {
    let refs: Vec<&StanceSample> = samples.iter().collect();
    let mut out = Vec::new();
    for chunk in refs.chunks(batch_size.max(1)) {
        let b = Batch::from_samples(chunk)?;
        out.extend_from_slice(model.predict(&ckpt.params, &b)?.y_hat.data());
    }
    let l = samples.first().ok_or_else(|| contract("nothing to predict"))?.stance_len();
    Ok(Tensor::new([samples.len(), l, NUM_CHANNELS], out)?)
}

/// Seeded split of `n` indices into (train, validation) with `fraction` held out.
pub fn validation_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_val = ((n as f64 * fraction).round() as usize).max(1);
    if n_val >= n {
        return Err(contract(format!("{n} samples are too few for a validation split")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = idx.split_off(n - n_val);
    Ok((idx, val))
}

/// A network variant trained per fold with priors from the fold's training portion.
#[derive(Debug, Clone)]
pub struct NetworkModel {
    pub config: ModelConfig,
    pub train: TrainConfig,
    pub partition: PartitionOptions,
    pub val_fraction: f64,
}

impl NetworkModel {
    pub fn new(config: ModelConfig, train: TrainConfig) -> Self {
        NetworkModel {
            config,
            train,
            partition: PartitionOptions::default(),
            val_fraction: 0.15,
        }
    }

    /// Trains on `samples` (with an internal validation split) and returns the best checkpoint.
    pub fn fit(&self, samples: &[StanceSample], seed: u64) -> Result<(Checkpoint, Vec<EpochRecord>)> {
        let (tr, va) = validation_split(samples.len(), self.val_fraction, seed)?;
        let pick = |ix: &[usize]| ix.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
        let (tr, va) = (pick(&tr), pick(&va));
        let priors = build_priors(&tr, &self.partition)?;
        let cfg = TrainConfig {
            seed,
            ..self.train.clone()
        };
        let out = train(self.config.clone(), &tr, &va, &priors.partition, &priors.temporal, cfg)?;
        Ok((out.checkpoint, out.history))
    }
}

impl FoldModel for NetworkModel {
    fn name(&self) -> String {
        self.config.variant.name().to_string()
    }

    fn fit_predict(&self, train: &[StanceSample], test: &[StanceSample], seed: u64) -> Result<(Tensor, Vec<EpochRecord>)> {
        let (ckpt, history) = self.fit(train, seed)?;
        let model = Model::new(ckpt.model_config.clone(), &ckpt.partition)?;
        Ok((predict_all(&model, &ckpt, test, self.train.batch_size)?, history))
    }
}

/// Reference predictors with no learned weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstantPredictor {
    Zero,
    /// Per-channel mean over every training frame.
    TrainMean,
}

impl FoldModel for ConstantPredictor {
    fn name(&self) -> String {
        match self {
            ConstantPredictor::Zero => "constant_zero".into(),
            ConstantPredictor::TrainMean => "constant_mean".into(),
        }
    }

    fn fit_predict(&self, train: &[StanceSample], test: &[StanceSample], _seed: u64) -> Result<(Tensor, Vec<EpochRecord>)> {
        let mut mean = [0.0; NUM_CHANNELS];
        if *self == ConstantPredictor::TrainMean {
            let mut n = 0usize;
            for s in train {
                for row in s.targets.data().chunks(NUM_CHANNELS) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                    n += 1;
                }
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
        }
        let l = test.first().ok_or_else(|| contract("empty test fold"))?.stance_len();
        let pred = Tensor::from_fn([test.len(), l, NUM_CHANNELS], |i| mean[i % NUM_CHANNELS]);
        Ok((pred, Vec::new()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub k: usize,
    pub mode: FoldMode,
    pub seed: u64,
    pub metrics: MetricsOptions,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            k: 5,
            mode: FoldMode::StepLevel,
            seed: 0,
            metrics: MetricsOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub model: String,
    pub folds: FoldAssignment,
    pub metrics: MetricsReport,
    pub histories: Vec<Vec<EpochRecord>>,
}

/// Stacks the targets of `samples` to M×L×6.
pub fn stack_targets(samples: &[StanceSample]) -> Result<Tensor> {
    let l = samples.first().ok_or_else(|| contract("no samples"))?.stance_len();
    let data: Vec<f64> = samples.iter().flat_map(|s| s.targets.data().iter().copied()).collect();
    Ok(Tensor::new([samples.len(), l, NUM_CHANNELS], data)?)
}

/// Fits and evaluates `model` on every fold. Fold `i` uses seed `opts.seed + i`.
pub fn cross_validate(model: &dyn FoldModel, dataset: &[StanceSample], opts: &CvOptions) -> Result<CvReport> {
    let ids: Vec<&str> = dataset.iter().map(|s| s.subject_id.as_str()).collect();
    let folds = make_folds(&ids, opts.k, opts.mode, opts.seed)?;
    let mut per_fold = Vec::with_capacity(opts.k);
    let mut histories = Vec::with_capacity(opts.k);
    for f in 0..opts.k {
        let pick = |ix: Vec<usize>| ix.into_iter().map(|i| dataset[i].clone()).collect::<Vec<_>>();
        let train = pick(folds.training(f));
        let test = pick(folds.held_out(f));
        let (pred, history) = model.fit_predict(&train, &test, opts.seed + f as u64)?;
        let target = stack_targets(&test)?;
        per_fold.push(compute_metrics(&pred, &target, opts.metrics)?);
        histories.push(history);
        log::info!("{} fold {f}: mean NRMSE {:.3}%", model.name(), per_fold[f].mean_nrmse());
    }
    Ok(CvReport {
        model: model.name(),
        metrics: MetricsReport::from_folds(&CHANNEL_LABELS, per_fold)?,
        folds,
        histories,
    })
}
