//! Finite-difference check of the full training loss against every parameter.

use plantar_autodiff::{GradCheck, GradCheckReport, Mode, Tensor};

use super::loss::{total_loss, PriorInputs};
use crate::error::{contract, Result};
use crate::io::{generate_synthetic_dataset, SynthConfig};
use crate::model::{Batch, Bound, Model, ModelConfig, ParameterStore, Variant};
use crate::preprocess::StanceSample;
use crate::priors::{build_priors, PartitionMap, PartitionOptions, TemporalPrior};

/// Gradient check of `mse + β·prior` in training mode (batch statistics,
/// fixed dropout masks) w.r.t. every parameter tensor of `store`.
#[allow(clippy::too_many_arguments)]
pub fn gradcheck_loss(
    cfg: &ModelConfig,
    store: &ParameterStore,
    samples: &[&StanceSample],
    partition: &PartitionMap,
    temporal: &TemporalPrior,
    beta: f64,
    check: GradCheck,
) -> Result<(Vec<String>, GradCheckReport)> {
    let model = Model::new(cfg.clone(), partition)?;
    let batch = Batch::from_samples(samples)?;
    let names: Vec<String> = store.params.keys().cloned().collect();
    let inputs: Vec<Tensor> = store.params.values().cloned().collect();
    let prior = PriorInputs {
        temporal,
        partition,
        block: cfg.cell_block(),
    };
    let report = check.run(
        |t, vars| {
            let bound = Bound {
                vars: names.iter().cloned().zip(vars.iter().copied()).collect(),
            };
            let v = model
                .forward(t, &bound, store, &batch, Mode::Train, 17)
                .map_err(|e| plantar_autodiff::TensorError::Contract(e.to_string()))?;
            total_loss(t, &v, &batch, Some(prior), beta).map_err(|e| plantar_autodiff::TensorError::Contract(e.to_string()))
        },
        &inputs,
    )?;
    Ok((names, report))
}

/// Small configuration used by the `gradcheck` command: 16×8 grid, 8 frames, narrow LSTMs.
pub fn gradcheck_config(variant: Variant) -> ModelConfig {
    let mut cfg = ModelConfig::desk(variant, 16, 8, 8);
    cfg.bottleneck_dim = 8;
    cfg.regional_lstm_hidden = 8;
    cfg.global_lstm_hidden = 8;
    cfg.dropout = 0.1;
    cfg
}

/// Checks `variant` on a 2-sample synthetic batch with priors from a few synthetic steps.
pub fn gradcheck_variant(variant: Variant, seed: u64, check: GradCheck) -> Result<(Vec<String>, GradCheckReport)> {
    let cfg = gradcheck_config(variant);
    let data = generate_synthetic_dataset(&SynthConfig {
        num_subjects: 1,
        steps_per_subject: 6,
        grid_h: cfg.grid_h,
        grid_w: cfg.grid_w,
        stance_len: cfg.stance_len,
        seed,
        ..Default::default()
    })?;
    if data.samples.len() < 2 {
        return Err(contract("synthetic batch produced fewer than two stances"));
    }
    let priors = build_priors(&data.samples, &PartitionOptions::default())?;
    let store = ParameterStore::init(&cfg, seed)?;
    let batch: Vec<&StanceSample> = data.samples.iter().take(2).collect();
    let beta = if variant.has_path_a() { 1.0 } else { 0.0 };
    gradcheck_loss(&cfg, &store, &batch, &priors.partition, &priors.temporal, beta, check)
}
