//! OAM spectra of the built-in phase plates and a stepped variant.
//!
//! `cargo run --release --example mode_spectrum`

use oamturb::modes::{dimensionality_no_turbulence, plate_spectrum, PhasePlate, DEFAULT_L_MAX};

fn main() -> oamturb::Result<()> {
    let plates = [
        ("uniform", PhasePlate::uniform()),
        ("half", PhasePlate::half()),
        ("quadrant", PhasePlate::quadrant()),
        (
            "quadrant, step 1.03 pi",
            PhasePlate::quadrant_with_step(1.03 * std::f64::consts::PI),
        ),
    ];
    for (label, plate) in plates {
        let spectrum = plate_spectrum(&plate, DEFAULT_L_MAX)?;
        let low: Vec<String> = (-4..=4)
            .map(|l| format!("{:.4}", spectrum.weight(l)))
            .collect();
        println!(
            "{label}: lambda_-4..4 = [{}], retained {:.5}, D = {:.4}",
            low.join(" "),
            spectrum.total(),
            dimensionality_no_turbulence(&spectrum)?
        );
    }
    Ok(())
}
