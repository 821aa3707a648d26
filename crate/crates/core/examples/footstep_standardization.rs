//! Floor-mat footsteps: centring on a 75×40 canvas and resampling to 101 frames,
//! then a forward pass with the walkway configuration.
//!
//! ```text
//! cargo run --release --example footstep_standardization
//! ```

use plantar_grf::autodiff::Tensor;
use plantar_grf::io::{generate_synthetic_dataset, SynthConfig};
use plantar_grf::model::{Batch, Model, ModelConfig, ParameterStore, Variant};
use plantar_grf::preprocess::{standardize_footstep, StanceSample, CANVAS_H, CANVAS_W};
use plantar_grf::priors::{build_priors, PartitionOptions};

/// Pads a 75×40 footstep to the 80×40 model grid (extra rows at the heel end).
fn pad_rows(x: &Tensor, rows: usize) -> Tensor {
    let s = x.shape();
    let (t, h, w) = (s[0], s[1], s[2]);
    Tensor::from_fn([t, rows, w], |i| {
        let (f, r, c) = (i / (rows * w), (i / w) % rows, i % w);
        if r < h {
            x.data()[(f * h + r) * w + c]
        } else {
            0.0
        }
    })
}

fn main() -> plantar_grf::Result<()> {
    // small footprints of differing lengths, as a walkway would record them
    let data = generate_synthetic_dataset(&SynthConfig {
        num_subjects: 2,
        steps_per_subject: 4,
        grid_h: 48,
        grid_w: 20,
        stance_len: 57,
        seed: 5,
        ..Default::default()
    })?;
    let mut steps = Vec::new();
    for s in &data.samples {
        let std = standardize_footstep(&s.pressure)?;
        steps.push(StanceSample {
            pressure: pad_rows(&std, 80),
            targets: plantar_grf::preprocess::resample_stance(&s.targets, 101)?,
            speed_mps: s.speed_mps,
            subject_id: s.subject_id.clone(),
        });
    }
    println!(
        "{} footsteps of {:?} → {:?} ({}×{} canvas padded to 80 rows)",
        steps.len(),
        data.samples[0].pressure.shape(),
        steps[0].pressure.shape(),
        CANVAS_H,
        CANVAS_W
    );

    let priors = build_priors(&steps, &PartitionOptions::default())?;
    let mut cfg = ModelConfig::table3(Variant::Dprgnet);
    // narrower than the published widths so the example runs in seconds
    cfg.cnn_feature_dim = 16;
    cfg.pos_dim = 16;
    cfg.cop_dim = 16;
    cfg.feature_embed_dim = 16;
    cfg.bottleneck_dim = 16;
    cfg.regional_lstm_hidden = 16;
    cfg.global_lstm_hidden = 16;
    let model = Model::new(cfg.clone(), &priors.partition)?;
    let store = ParameterStore::init(&cfg, 0)?;
    let out = model.predict(&store, &Batch::from_samples(&[&steps[0]])?)?;
    println!(
        "walkway model: {} attention cells, prediction {:?}, attention {:?}",
        cfg.num_cells(),
        out.y_hat.shape(),
        out.attention.map(|a| a.shape().to_vec())
    );
    Ok(())
}
