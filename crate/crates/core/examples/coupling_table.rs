//! Turbulent scattering weights `T_Δ` at a few strengths.
//!
//! `cargo run --release --example coupling_table`

use oamturb::scattering::coupling_table;
use oamturb::turbulence::TurbulenceModel;

fn main() -> oamturb::Result<()> {
    for ratio in [0.1, 0.3, 0.65, 1.0] {
        let table = coupling_table(&TurbulenceModel::new(ratio)?, 6)?;
        let head: Vec<String> = table.values().iter().map(|t| format!("{t:.5}")).collect();
        println!(
            "w0/r0 = {ratio}: T = [{}], window sum {:.4}, total {:.4}, tail {:.1e}",
            head.join(" "),
            table.windowed_sum(),
            table.total().unwrap_or(f64::NAN),
            table.angular_tail().unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
