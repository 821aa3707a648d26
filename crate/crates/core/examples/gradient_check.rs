//! Finite-difference verification of every parameter gradient.
//!
//! ```text
//! cargo run --release --example gradient_check -- cnn_lstm
//! ```

use plantar_grf::autodiff::GradCheck;
use plantar_grf::model::Variant;
use plantar_grf::train::gradcheck_variant;

fn main() -> plantar_grf::Result<()> {
    let variant: Variant = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "cnn".into())
        .parse()
        .map_err(plantar_grf::Error::Config)?;
    let check = GradCheck {
        refine_above: Some(1e-6),
        ..Default::default()
    };
    let (names, report) = gradcheck_variant(variant, 0, check)?;
    for (name, err) in names.iter().zip(&report.per_input) {
        println!("{name:<28} {err:.2e}");
    }
    println!(
        "{}: max relative error {:.2e} over {} elements ({} refined)",
        variant, report.max_relative_error, report.elements_checked, report.elements_refined
    );
    Ok(())
}
