//! Long-exposure far-field broadening under phase screens, inverted back to
//! the turbulence strength.
//!
//! `cargo run --release --example beam_broadening -- [ratio] [realizations]`

use oamturb::screens::{long_exposure_broadening, BroadeningOptions};
use oamturb::turbulence::{ratio_from_broadening, TurbulenceModel};

fn main() -> oamturb::Result<()> {
    let mut args = std::env::args().skip(1);
    let ratio: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.65);
    let realizations: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(4000);
    let model = TurbulenceModel::new(ratio)?;
    let b = long_exposure_broadening(&model, realizations, 1, &BroadeningOptions::default())?;
    println!("w0/r0          {ratio}");
    println!("realizations   {}", b.realizations);
    println!("w_dl           {:.5} cycles/w0", b.w_dl);
    println!(
        "w_le           {:.5} ± {:.5} cycles/w0",
        b.w_le, b.w_le_stderr
    );
    println!("anisotropy     {:.3}%", 100.0 * b.anisotropy);
    println!(
        "recovered      {:.4}",
        ratio_from_broadening(b.w_dl, b.w_le)?
    );
    if let Some(w) = &b.warning {
        println!("warning        {w}");
    }
    Ok(())
}
