//! Five-fold cross-validation of a network variant against the constant-mean baseline.
//!
//! ```text
//! cargo run --release --example cross_validation -- cnn_lstm 20 subject
//! ```

use plantar_grf::io::{generate_synthetic_dataset, SynthConfig};
use plantar_grf::model::{ModelConfig, Variant};
use plantar_grf::train::{cross_validate, ConstantPredictor, CvOptions, FoldMode, NetworkModel, TrainConfig};

fn main() -> plantar_grf::Result<()> {
    let mut args = std::env::args().skip(1);
    let variant: Variant = args
        .next()
        .unwrap_or_else(|| "dprgnet".into())
        .parse()
        .map_err(plantar_grf::Error::Config)?;
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(15);
    let mode: FoldMode = args
        .next()
        .unwrap_or_else(|| "step".into())
        .parse()
        .map_err(plantar_grf::Error::Config)?;

    let data = generate_synthetic_dataset(&SynthConfig {
        num_subjects: 5,
        steps_per_subject: 20,
        seed: 1,
        ..Default::default()
    })?;
    let opts = CvOptions {
        mode,
        ..Default::default()
    };
    let baseline = cross_validate(&ConstantPredictor::TrainMean, &data.samples, &opts)?;
    println!("{}", baseline.metrics.to_table());

    let net = NetworkModel::new(
        ModelConfig::desk(variant, 32, 16, 20),
        TrainConfig {
            max_epochs: epochs,
            patience: epochs.min(10),
            ..Default::default()
        },
    );
    let report = cross_validate(&net, &data.samples, &opts)?;
    println!("{}", report.metrics.to_table());
    let (b, bsd) = baseline.metrics.overall_nrmse();
    let (m, sd) = report.metrics.overall_nrmse();
    println!("six-channel NRMSE: constant mean {b:.2}% ({bsd:.2}), {variant} {m:.2}% ({sd:.2})");
    Ok(())
}
