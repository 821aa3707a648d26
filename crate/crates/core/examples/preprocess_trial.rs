//! Raw insole + force-plate text files → stance samples.
//!
//! Writes a synthetic trial as the plain-text ingest format, reads it back and
//! runs event detection, synchronization, filtering and segmentation.
//!
//! ```text
//! cargo run --example preprocess_trial
//! ```

use plantar_grf::io::{format_raw_trial, parse_raw_trial, synth_trial, SynthConfig, TrialMeta};
use plantar_grf::preprocess::{process_trial, PreprocessConfig, CHANNEL_LABELS};

fn main() -> plantar_grf::Result<()> {
    let cfg = SynthConfig {
        num_subjects: 1,
        steps_per_subject: 6,
        noise: 0.03,
        seed: 42,
        ..Default::default()
    };
    let (trial, truth) = synth_trial(&cfg, 0)?;
    let (pressure_txt, plate_txt, meta_txt) = format_raw_trial(&trial)?;
    println!("meta.toml:\n{meta_txt}");
    println!("pressure file: {} lines, plate file: {} lines", pressure_txt.lines().count(), plate_txt.lines().count());

    let parsed = parse_raw_trial(&pressure_txt, &plate_txt, &TrialMeta::from_toml(&meta_txt)?)?;
    let out = process_trial(&parsed, &PreprocessConfig::default())?;
    println!("heel strikes {:?}", out.insole_events.heel_strikes);
    println!("toe offs     {:?}", out.insole_events.toe_offs);
    println!("plate offset {} frames (generator used {})", out.offset_frames, truth.offset_frames);
    println!("{} stances kept, {} skipped", out.segmentation.samples.len(), out.segmentation.skipped);

    let s = &out.segmentation.samples[0];
    println!("\nfirst stance, normalized targets every 8th frame:");
    println!("{:>5} {}", "frame", CHANNEL_LABELS.map(|l| format!("{l:>8}")).join(""));
    for t in (0..s.stance_len()).step_by(8) {
        let row: String = (0..6).map(|c| format!("{:>8.3}", s.targets.at(&[t, c]))).collect();
        println!("{t:>5} {row}");
    }
    Ok(())
}
