//! Shannon dimensionality of quadrant and half plates as turbulence grows.
//!
//! Run with `cargo run --release --example dimensionality_decay`.

use oamturb::channel::{dimensionality_scan, Method, ScanOptions};
use oamturb::modes::{plate_spectrum, PhasePlate, DEFAULT_L_MAX};

fn main() -> oamturb::Result<()> {
    let ratios: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    for (label, plate) in [
        ("quadrant", PhasePlate::quadrant()),
        ("half", PhasePlate::half()),
    ] {
        let spectrum = plate_spectrum(&plate, DEFAULT_L_MAX)?;
        let opts = ScanOptions {
            plate_label: label.into(),
            ..ScanOptions::default()
        };
        println!("{label}: ratio  D_operator  D_curve  purity  tail");
        for r in dimensionality_scan(&spectrum, &ratios, Method::Both, &opts)? {
            println!(
                "  {:.2}  {:.4}  {:.4}  {:.4}  {:.2e}",
                r.ratio,
                r.d_operator.unwrap_or(f64::NAN),
                r.d_curve.unwrap_or(f64::NAN),
                r.purity,
                r.angular_tail.unwrap_or(0.0),
            );
        }
    }
    Ok(())
}
