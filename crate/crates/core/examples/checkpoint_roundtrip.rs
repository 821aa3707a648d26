//! Dataset and checkpoint files: save, reload, verify, resume.
//!
//! ```text
//! cargo run --release --example checkpoint_roundtrip
//! ```

use plantar_grf::io::{
    generate_synthetic_dataset, load_checkpoint, load_dataset, save_checkpoint, save_dataset, SynthConfig,
};
use plantar_grf::model::{ModelConfig, Variant};
use plantar_grf::priors::{build_priors, PartitionOptions};
use plantar_grf::train::{TrainConfig, Trainer};

fn main() -> plantar_grf::Result<()> {
    let dir = std::env::temp_dir().join("plantar_grf_roundtrip");
    std::fs::create_dir_all(&dir)?;
    let data = generate_synthetic_dataset(&SynthConfig {
        num_subjects: 2,
        steps_per_subject: 12,
        grid_h: 16,
        grid_w: 8,
        stance_len: 10,
        ..Default::default()
    })?;
    let data_path = dir.join("synthetic.pgrf");
    save_dataset(&data, &data_path)?;
    let data = load_dataset(&data_path)?;
    print!("{}", data.summary());

    let (train, val) = data.samples.split_at(18);
    let priors = build_priors(train, &PartitionOptions::default())?;
    let cfg = ModelConfig::desk(Variant::PathBOnly, 16, 8, 10);
    let tc = TrainConfig {
        max_epochs: 6,
        patience: 6,
        batch_size: 6,
        ..Default::default()
    };

    let mut first = Trainer::new(cfg.clone(), train, val, &priors.partition, &priors.temporal, tc.clone())?;
    first.run_epoch()?;
    first.run_epoch()?;
    let ck_path = dir.join("partial.ckpt");
    save_checkpoint(&first.checkpoint(), &ck_path)?;
    println!("saved after 2 epochs to {}", ck_path.display());

    let resumed = Trainer::resume(&load_checkpoint(&ck_path)?, train, val)?.run()?;
    let straight = Trainer::new(cfg, train, val, &priors.partition, &priors.temporal, tc)?.run()?;
    for (a, b) in resumed.history.iter().zip(&straight.history) {
        println!("epoch {}  resumed val {:.6}  uninterrupted val {:.6}", a.epoch, a.val_loss, b.val_loss);
    }
    println!("identical: {}", resumed.history == straight.history && resumed.checkpoint == straight.checkpoint);

    let mut bytes = std::fs::read(&ck_path)?;
    bytes[40] ^= 1;
    std::fs::write(&ck_path, bytes)?;
    match load_checkpoint(&ck_path) {
        Ok(_) => println!("corruption went unnoticed"),
        Err(e) => println!("flipped one bit: {e}"),
    }
    Ok(())
}
