//! Trains DP-RGNet on synthetic gait data and saves a checkpoint.
//!
//! ```text
//! cargo run --release --example train_synthetic -- 30
//! ```

use plantar_grf::io::{generate_synthetic_dataset, save_checkpoint, SynthConfig};
use plantar_grf::model::{ModelConfig, Variant};
use plantar_grf::priors::{build_priors, PartitionOptions};
use plantar_grf::train::{validation_split, TrainConfig, Trainer};

fn main() -> plantar_grf::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let data = generate_synthetic_dataset(&SynthConfig {
        num_subjects: 3,
        steps_per_subject: 30,
        seed: 11,
        ..Default::default()
    })?;
    let (tr_idx, va_idx) = validation_split(data.samples.len(), 0.2, 0)?;
    let train: Vec<_> = tr_idx.iter().map(|&i| data.samples[i].clone()).collect();
    let val: Vec<_> = va_idx.iter().map(|&i| data.samples[i].clone()).collect();
    let priors = build_priors(&train, &PartitionOptions::default())?;

    let cfg = ModelConfig::desk(Variant::Dprgnet, 32, 16, 20);
    let tc = TrainConfig {
        max_epochs: epochs,
        patience: epochs.min(8),
        ..Default::default()
    };
    let mut trainer = Trainer::new(cfg, &train, &val, &priors.partition, &priors.temporal, tc)?;
    println!("{} train / {} val stances", train.len(), val.len());
    while !trainer.is_finished() {
        let r = trainer.run_epoch()?;
        println!(
            "epoch {:>3}  lr {:.2e}  train {:.5}  val {:.5}  val mse {:.5}",
            r.epoch, r.lr, r.train_loss, r.val_loss, r.val_mse
        );
    }
    let st = trainer.state();
    println!("best epoch {} (val loss {:.5})", st.best_epoch, st.best_val_loss);
    let path = std::env::temp_dir().join("plantar_grf_example.ckpt");
    save_checkpoint(&trainer.checkpoint(), &path)?;
    println!("checkpoint written to {} (summary in {}.txt)", path.display(), path.display());
    Ok(())
}
