//! Quadrant-plate coincidence curves flattening under turbulence.
//!
//! `cargo run --release --example coincidence_curves`

use std::f64::consts::PI;

use oamturb::channel::{coincidence_curve, default_grid, shannon_from_curve};
use oamturb::modes::{plate_spectrum, PhasePlate, DEFAULT_L_MAX};
use oamturb::scattering::{coupling_table, DEFAULT_DL_MAX};
use oamturb::turbulence::TurbulenceModel;

fn main() -> oamturb::Result<()> {
    let spectrum = plate_spectrum(&PhasePlate::quadrant(), DEFAULT_L_MAX)?;
    let probes = [0.0, PI / 8.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0, PI];
    println!("ratio  P(0)  P(pi/8)  P(pi/4)  P(pi/2)  P(3pi/4)  P(pi)  D_curve");
    for ratio in [0.0, 0.3, 0.65, 1.0] {
        let table = coupling_table(&TurbulenceModel::new(ratio)?, DEFAULT_DL_MAX)?;
        let curve = coincidence_curve(&spectrum, &table, &default_grid())?;
        let cells: Vec<String> = probes
            .iter()
            .map(|&d| format!("{:.4}", curve.at(d)))
            .collect();
        println!(
            "{ratio:.2}  {}  {:.3}",
            cells.join("  "),
            shannon_from_curve(&curve)?
        );
    }
    Ok(())
}
