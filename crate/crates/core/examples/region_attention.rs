//! How the anatomical bias steers prototype attention.
//!
//! Runs an untrained DP-RGNet on one stance and reports, for several bias
//! strengths λ, how much of each prototype's attention stays inside its region.
//! A region that owns no encoder cell after downsampling always reports 0.
//!
//! ```text
//! cargo run --example region_attention
//! ```

use plantar_grf::io::{generate_synthetic_dataset, SynthConfig};
use plantar_grf::model::{Batch, Model, ModelConfig, ParameterStore, Variant};
use plantar_grf::priors::{build_priors, PartitionOptions, NUM_REGIONS, REGION_NAMES};

fn main() -> plantar_grf::Result<()> {
    let data = generate_synthetic_dataset(&SynthConfig {
        num_subjects: 2,
        steps_per_subject: 10,
        seed: 3,
        ..Default::default()
    })?;
    let art = build_priors(&data.samples, &PartitionOptions::default())?;
    let batch = Batch::from_samples(&[&data.samples[0]])?;

    for lambda in [0.0, 1.0, 3.0, 10.0] {
        let mut cfg = ModelConfig::desk(Variant::Dprgnet, 32, 16, 20);
        cfg.lambda_bias = lambda;
        let model = Model::new(cfg.clone(), &art.partition)?;
        let store = ParameterStore::init(&cfg, 0)?;
        let att = model.predict(&store, &batch)?.attention.expect("dprgnet has attention");
        let n = model.prior.num_cells();
        let labels = &model.prior.cell_labels;
        let mut mass = [0.0; NUM_REGIONS];
        for (i, row) in att.data().chunks(n).enumerate() {
            let k = i % NUM_REGIONS;
            mass[k] += row.iter().zip(labels).filter(|(_, &l)| l == k as i8).map(|(w, _)| w).sum::<f64>();
        }
        let frames = cfg.stance_len as f64;
        println!("λ = {lambda}");
        for k in 0..NUM_REGIONS {
            let cells = labels.iter().filter(|&&l| l == k as i8).count();
            println!("  {:<18} {cells:2} cells  in-region mass {:.3}", REGION_NAMES[k], mass[k] / frames);
        }
    }
    Ok(())
}
