//! Simulation of orbital-angular-momentum entanglement carried through
//! Kolmogorov atmospheric turbulence.
//!
//! Modules, bottom-up:
//!
//! - [`modes`]: phase plates, their OAM spectra and analyzer states.
//! - [`turbulence`]: coherence kernel, Fried-parameter relations, link budgets.
//! - [`scattering`]: coupling table `T_Δ` and averaged detection operators.
//! - [`channel`]: coincidence curves and Shannon dimensionality.
//! - [`screens`]: Monte Carlo phase screens, the independent oracle.
//! - [`cli`]: scenario configuration and CSV emission for the `oamturb` binary.
//!
//! ```
//! use oamturb::channel::shannon_operator;
//! use oamturb::modes::{plate_spectrum, PhasePlate, DEFAULT_L_MAX};
//! use oamturb::scattering::{coupling_table, DEFAULT_DL_MAX};
//! use oamturb::turbulence::TurbulenceModel;
//!
//! let spectrum = plate_spectrum(&PhasePlate::quadrant(), DEFAULT_L_MAX)?;
//! let table = coupling_table(&TurbulenceModel::new(0.65)?, DEFAULT_DL_MAX)?;
//! let d = shannon_operator(&spectrum, &table)?;
//! assert!((d - 3.33).abs() < 0.01);
//! # Ok::<(), oamturb::Error>(())
//! ```

pub mod channel;
pub mod cli;
pub mod error;
pub mod modes;
pub mod quadrature;
pub mod scattering;
pub mod screens;
pub mod turbulence;

pub use error::{Error, Result};
