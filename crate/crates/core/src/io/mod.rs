//! File formats, raw-text ingest and the synthetic gait generator.

pub mod binfmt;
mod checkpoint;
mod dataset;
mod raw;
mod synth;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dataset::{load_dataset, save_dataset, DatasetContainer, DatasetHeader, DATASET_MAGIC, DATASET_VERSION};
pub use raw::{format_raw_trial, load_raw_trial, parse_raw_trial, read_table, TrialMeta};
pub use synth::{generate_synthetic_dataset, generate_with_truth, synth_trial, SynthConfig, TrialTruth};
