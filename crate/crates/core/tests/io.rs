mod common;

use plantar_grf::io::{
    binfmt, format_raw_trial, generate_synthetic_dataset, load_checkpoint, load_dataset, parse_raw_trial,
    save_checkpoint, save_dataset, synth_trial, DatasetContainer, SynthConfig, TrialMeta, DATASET_MAGIC,
};
use plantar_grf::model::{Batch, ModelConfig, Variant};
use plantar_grf::preprocess::{process_trial, PreprocessConfig, StanceSample};
use plantar_grf::priors::{build_priors, PartitionOptions};
use plantar_grf::train::{train, TrainConfig, Trainer};
use plantar_grf::Error;

#[test]
fn dataset_round_trip_is_exact() {
    let data = common::small_synth(2, 6, 0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.bin");
    save_dataset(&data, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back, data);
    assert!(binfmt::sidecar_path(&path).exists());
}

#[test]
fn corrupt_header_byte_is_an_integrity_error() {
    let bytes = common::small_synth(1, 5, 0).to_bytes();
    for pos in [0, 5, 9, 14] {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x40;
        assert!(matches!(DatasetContainer::from_bytes(&bad), Err(Error::Integrity(_))), "byte {pos}");
    }
    assert!(matches!(DatasetContainer::from_bytes(&bytes[..bytes.len() - 9]), Err(Error::Integrity(_))));
    assert!(matches!(DatasetContainer::from_bytes(&[]), Err(Error::Integrity(_))));
}

#[test]
fn version_zero_file_names_both_versions() {
    let bytes = common::small_synth(1, 5, 0).to_bytes();
    let payload = &bytes[20..bytes.len() - 4];
    let v0 = binfmt::frame(DATASET_MAGIC, 0, payload);
    let err = DatasetContainer::from_bytes(&v0).unwrap_err();
    assert!(matches!(err, Error::UnsupportedVersion { found: 0, supported: 1 }));
    let msg = err.to_string();
    assert!(msg.contains("v0") && msg.contains("v1"), "{msg}");
}

#[test]
fn noise_free_generation_is_deterministic() {
    let cfg = SynthConfig {
        num_subjects: 2,
        steps_per_subject: 5,
        noise: 0.0,
        seed: 7,
        ..Default::default()
    };
    assert_eq!(generate_synthetic_dataset(&cfg).unwrap(), generate_synthetic_dataset(&cfg).unwrap());
}

#[test]
fn vertical_force_peaks_near_body_weight() {
    let data = generate_synthetic_dataset(&SynthConfig {
        num_subjects: 4,
        steps_per_subject: 20,
        noise: 0.0,
        seed: 12,
        ..Default::default()
    })
    .unwrap();
    for s in &data.samples {
        let peak = (0..s.stance_len()).map(|t| s.targets.at(&[t, 2])).fold(f64::MIN, f64::max);
        assert!((0.9..=1.3).contains(&peak), "{peak}");
    }
}

#[test]
fn raw_text_round_trip_reproduces_preprocessing() {
    let cfg = SynthConfig {
        num_subjects: 1,
        steps_per_subject: 4,
        grid_h: 16,
        grid_w: 8,
        seed: 3,
        ..Default::default()
    };
    let (trial, _) = synth_trial(&cfg, 0).unwrap();
    let (pressure, plate, meta) = format_raw_trial(&trial).unwrap();
    let parsed = parse_raw_trial(&pressure, &plate, &TrialMeta::from_toml(&meta).unwrap()).unwrap();
    let a = process_trial(&trial, &PreprocessConfig::default()).unwrap();
    let b = process_trial(&parsed, &PreprocessConfig::default()).unwrap();
    assert_eq!(a.segmentation.samples.len(), b.segmentation.samples.len());
    for (x, y) in a.segmentation.samples.iter().zip(&b.segmentation.samples) {
        assert!(x.targets.max_abs_diff(&y.targets) < 1e-9);
        assert!(x.pressure.max_abs_diff(&y.pressure) < 1e-9);
    }
}

fn split(data: &DatasetContainer) -> (Vec<StanceSample>, Vec<StanceSample>) {
    let (a, b) = data.samples.split_at(data.samples.len() * 4 / 5);
    (a.to_vec(), b.to_vec())
}

fn small_config() -> TrainConfig {
    TrainConfig {
        max_epochs: 6,
        patience: 6,
        batch_size: 8,
        seed: 2,
        ..Default::default()
    }
}

#[test]
fn checkpoint_probe_is_bit_identical_after_reload() {
    let data = common::small_synth(2, 12, 4);
    let (tr, va) = split(&data);
    let art = build_priors(&tr, &PartitionOptions::default()).unwrap();
    let cfg = ModelConfig::desk(Variant::Dprgnet, 16, 8, 8);
    let tc = TrainConfig {
        max_epochs: 2,
        patience: 2,
        ..small_config()
    };
    let out = train(cfg, &tr, &va, &art.partition, &art.temporal, tc).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    save_checkpoint(&out.checkpoint, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, out.checkpoint);

    let probe: Vec<&StanceSample> = va.iter().take(3).collect();
    let batch = Batch::from_samples(&probe).unwrap();
    let model = plantar_grf::model::Model::new(out.checkpoint.model_config.clone(), &out.checkpoint.partition).unwrap();
    let before = model.predict(&out.checkpoint.params, &batch).unwrap();
    let after = model.predict(&back.params, &batch).unwrap();
    let bits = |t: &plantar_grf::autodiff::Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&before.y_hat), bits(&after.y_hat));

    let mut bad = std::fs::read(&path).unwrap();
    let mid = bad.len() / 2;
    bad[mid] ^= 1;
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Integrity(_))));
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let data = common::small_synth(2, 12, 4);
    let (tr, va) = split(&data);
    let art = build_priors(&tr, &PartitionOptions::default()).unwrap();
    let cfg = ModelConfig::desk(Variant::Dprgnet, 16, 8, 8);
    let full = train(cfg.clone(), &tr, &va, &art.partition, &art.temporal, small_config()).unwrap();

    let mut first = Trainer::new(cfg, &tr, &va, &art.partition, &art.temporal, small_config()).unwrap();
    for _ in 0..3 {
        first.run_epoch().unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.bin");
    save_checkpoint(&first.checkpoint(), &path).unwrap();
    drop(first);

    let ckpt = load_checkpoint(&path).unwrap();
    let resumed = Trainer::resume(&ckpt, &tr, &va).unwrap().run().unwrap();
    assert_eq!(resumed.history, full.history);
    assert_eq!(resumed.checkpoint.params, full.checkpoint.params);
    assert_eq!(resumed.best_epoch, full.best_epoch);
}
