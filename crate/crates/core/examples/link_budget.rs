//! Converting between link distance and the turbulence ratio `w₀/r₀`.
//!
//! `cargo run --release --example link_budget`

use oamturb::turbulence::{link_distance_for_ratio, link_ratio, LinkBudget};

fn main() -> oamturb::Result<()> {
    let (wavelength, cn2, waist) = (1550e-9, 1e-14, 0.06);
    println!("target ratio -> distance (m), r0 (m), Rayleigh range (m), near field");
    for ratio in [0.3, 0.65, 1.0] {
        let e = link_distance_for_ratio(wavelength, cn2, waist, ratio)?;
        println!(
            "  {ratio:.2} -> {:.1}, {:.4}, {:.1}, {}",
            e.distance, e.fried, e.rayleigh_range, e.valid
        );
    }
    println!("distance (m) -> ratio");
    for distance in [500.0, 2000.0, 10_000.0] {
        let e = link_ratio(&LinkBudget::new(wavelength, cn2, waist, distance)?);
        println!(
            "  {distance:.0} -> {:.4}{}",
            e.ratio,
            if e.valid {
                ""
            } else {
                " (beyond Rayleigh range)"
            }
        );
    }
    Ok(())
}
