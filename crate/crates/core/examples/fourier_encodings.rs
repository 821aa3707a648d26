//! Centre of pressure and Fourier encodings of positions and CoP.
//!
//! ```text
//! cargo run --example fourier_encodings
//! ```

use plantar_grf::autodiff::Tape;
use plantar_grf::encoding::{cop_trajectory, encode_cop, fourier_features, FourierConfig};
use plantar_grf::io::{generate_synthetic_dataset, SynthConfig};
use plantar_grf::model::{Bound, Mlp, ModelConfig, ParameterStore, Variant};

fn main() -> plantar_grf::Result<()> {
    let f = fourier_features([0.5, -0.25], FourierConfig { num_bands: 2 });
    println!("γ(0.5, -0.25) with 2 bands = {f:.4?}");

    let data = generate_synthetic_dataset(&SynthConfig {
        num_subjects: 1,
        steps_per_subject: 3,
        seed: 1,
        ..Default::default()
    })?;
    let s = &data.samples[0];
    let traj = cop_trajectory(&s.pressure)?;
    println!("\nCoP over one stance (x across the foot, y runs from +1 at the heel to -1 at the toe):");
    for (t, (c, ok)) in traj.cop.iter().zip(&traj.valid).enumerate() {
        println!("{t:>3}  x {:+.3}  y {:+.3}{}", c[0], c[1], if *ok { "" } else { "  (carried)" });
    }

    let cfg = ModelConfig::desk(Variant::Dprgnet, 32, 16, 20);
    let store = ParameterStore::init(&cfg, 0)?;
    let mut tape = Tape::new();
    let bound: Bound = store.bind(&mut tape, false);
    let mlp = Mlp::bind(&bound, "cop")?;
    let z = encode_cop(&mut tape, &traj, FourierConfig::for_dim(cfg.cop_dim), &mlp)?;
    let z = tape.value(z);
    println!("\nZ_cop is {:?}; frame 0 = {:.3?}", z.shape(), &z.data()[..cfg.cop_dim]);
    Ok(())
}
