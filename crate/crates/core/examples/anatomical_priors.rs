//! Mean pressure map, Otsu mask, six-region partition and temporal prior.
//!
//! ```text
//! cargo run --example anatomical_priors
//! ```

use plantar_grf::io::{generate_synthetic_dataset, SynthConfig};
use plantar_grf::priors::{build_priors, PartitionOptions, REGION_NAMES};

fn main() -> plantar_grf::Result<()> {
    let data = generate_synthetic_dataset(&SynthConfig {
        num_subjects: 3,
        steps_per_subject: 20,
        seed: 7,
        ..Default::default()
    })?;
    let art = build_priors(&data.samples, &PartitionOptions::default())?;
    println!("otsu threshold {:.3}, {} active cells", art.mask.threshold, art.mask.count());
    println!("{}", art.partition.summary());
    println!("labels (toe at the top, '.' is background):");
    print!("{}", art.partition.to_text());

    println!("\ntemporal prior P (region with most mass per frame):");
    for (t, k) in art.temporal.argmax_per_frame().into_iter().enumerate() {
        let row: Vec<String> = art.temporal.row(t).iter().map(|v| format!("{v:.2}")).collect();
        println!("{t:>3}  {}  {}", row.join(" "), REGION_NAMES[k]);
    }
    Ok(())
}
