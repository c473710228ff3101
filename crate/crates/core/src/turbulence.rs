//! Kolmogorov turbulence: the two-point phase coherence, Fried-parameter
//! calibrations and the horizontal-link distance mapping.

use std::f64::consts::{PI, TAU};

use crate::error::{Error, Result};

/// Calibration constants of the Kolmogorov model. The defaults are the
/// standard values; they are overridable for sensitivity studies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KolmogorovConstants {
    /// Phase structure-function prefactor: `D(s) = 6.88 (s/r₀)^{5/3}`.
    pub structure: f64,
    /// Divisor in the long-exposure broadening relation.
    pub broadening: f64,
    /// Prefactor of `r₀ = 3.02 (k² L C_n²)^{-3/5}` for horizontal paths.
    pub horizontal: f64,
}

impl Default for KolmogorovConstants {
    fn default() -> Self {
        Self {
            structure: 6.88,
            broadening: 3.0,
            horizontal: 3.02,
        }
    }
}

/// Turbulence strength expressed as `w₀/r₀`.
///
/// All scattering quantities depend on this ratio only; separations passed to
/// [`TurbulenceModel::coherence`] are in units of the fiber-mode radius `w₀`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurbulenceModel {
    ratio: f64,
    scales: Option<(f64, f64)>,
    pub constants: KolmogorovConstants,
}

impl TurbulenceModel {
    pub fn new(ratio: f64) -> Result<Self> {
        if !(ratio.is_finite() && ratio >= 0.0) {
            return Err(Error::invalid(format!("w0/r0 must be ≥ 0, got {ratio}")));
        }
        Ok(Self {
            ratio,
            scales: None,
            constants: KolmogorovConstants::default(),
        })
    }

    pub fn none() -> Self {
        Self::new(0.0).expect("zero ratio is valid")
    }

    /// Model pinned to physical beam size and Fried parameter (meters).
    pub fn from_scales(waist: f64, fried: f64) -> Result<Self> {
        if !(waist > 0.0 && fried > 0.0 && waist.is_finite() && fried.is_finite()) {
            return Err(Error::invalid("w0 and r0 must be positive"));
        }
        Ok(Self {
            ratio: waist / fried,
            scales: Some((waist, fried)),
            constants: KolmogorovConstants::default(),
        })
    }

    pub fn with_constants(mut self, constants: KolmogorovConstants) -> Self {
        self.constants = constants;
        self
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn waist(&self) -> Option<f64> {
        self.scales.map(|s| s.0)
    }

    pub fn fried(&self) -> Option<f64> {
        self.scales.map(|s| s.1)
    }

    pub fn is_turbulence_free(&self) -> bool {
        self.ratio == 0.0
    }

    /// Fried parameter in `w₀` units; infinite without turbulence.
    pub fn fried_in_waists(&self) -> f64 {
        1.0 / self.ratio
    }

    /// Phase structure function `6.88 (s·w₀/r₀)^{5/3}` at separation `s` (`w₀` units).
    pub fn structure_function(&self, s: f64) -> f64 {
        self.constants.structure * (s * self.ratio).powf(5.0 / 3.0)
    }

    /// Time-averaged coherence `⟨e^{iφ(r₁) - iφ(r₂)}⟩ = exp(-½ D(|r₁ - r₂|))`.
    pub fn coherence(&self, s: f64) -> f64 {
        if self.ratio == 0.0 || s == 0.0 {
            return 1.0;
        }
        (-0.5 * self.structure_function(s)).exp()
    }
}

/// `w₀/r₀` from the far-field radii of the diffraction-limited (`w_dl`) and
/// long-exposure (`w_le`) beams.
pub fn ratio_from_broadening(w_dl: f64, w_le: f64) -> Result<f64> {
    ratio_from_broadening_with(w_dl, w_le, &KolmogorovConstants::default())
}

pub fn ratio_from_broadening_with(
    w_dl: f64,
    w_le: f64,
    constants: &KolmogorovConstants,
) -> Result<f64> {
    if !(w_dl > 0.0 && w_dl.is_finite() && w_le.is_finite()) {
        return Err(Error::domain("beam radii must be positive and finite"));
    }
    if w_le < w_dl {
        return Err(Error::domain(format!(
            "long-exposure radius {w_le} below diffraction limit {w_dl}"
        )));
    }
    let x = w_le / w_dl;
    Ok((x * x - 1.0).sqrt() / constants.broadening)
}

/// Horizontal free-space link parameters (SI units).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub wavelength: f64,
    /// Refractive-index structure constant `C_n²` in m^(-2/3).
    pub cn2: f64,
    /// Beam (fiber-mode) radius `w₀`.
    pub waist: f64,
    pub distance: f64,
}

impl LinkBudget {
    pub fn new(wavelength: f64, cn2: f64, waist: f64, distance: f64) -> Result<Self> {
        let b = Self {
            wavelength,
            cn2,
            waist,
            distance,
        };
        b.validate()?;
        Ok(b)
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("wavelength", self.wavelength),
            ("cn2", self.cn2),
            ("w0", self.waist),
            ("distance", self.distance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn wavenumber(&self) -> f64 {
        TAU / self.wavelength
    }

    /// Diffraction length `z_R = π w₀² / λ`.
    pub fn rayleigh_range(&self) -> f64 {
        rayleigh_range(self.waist, self.wavelength)
    }

    /// Near-field validity: `L < z_R`.
    pub fn is_near_field(&self) -> bool {
        self.distance < self.rayleigh_range()
    }
}

pub fn rayleigh_range(waist: f64, wavelength: f64) -> f64 {
    PI * waist * waist / wavelength
}

/// `r₀ = 3.02 (k² L C_n²)^{-3/5}`.
pub fn fried_from_link(budget: &LinkBudget) -> f64 {
    fried_from_link_with(budget, &KolmogorovConstants::default())
}

pub fn fried_from_link_with(budget: &LinkBudget, constants: &KolmogorovConstants) -> f64 {
    let k = budget.wavenumber();
    constants.horizontal * (k * k * budget.distance * budget.cn2).powf(-0.6)
}

/// Result of inverting the horizontal-path Fried relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEstimate {
    pub distance: f64,
    pub fried: f64,
    pub ratio: f64,
    pub rayleigh_range: f64,
    /// `false` when `L ≥ z_R` and the near-field model no longer applies.
    pub valid: bool,
}

/// Propagation distance at which a beam of radius `waist` sees
/// `w₀/r₀ = target_ratio`.
pub fn link_distance_for_ratio(
    wavelength: f64,
    cn2: f64,
    waist: f64,
    target_ratio: f64,
) -> Result<LinkEstimate> {
    link_distance_for_ratio_with(
        wavelength,
        cn2,
        waist,
        target_ratio,
        &KolmogorovConstants::default(),
    )
}

pub fn link_distance_for_ratio_with(
    wavelength: f64,
    cn2: f64,
    waist: f64,
    target_ratio: f64,
    constants: &KolmogorovConstants,
) -> Result<LinkEstimate> {
    // distance is a placeholder for validating the other fields
    LinkBudget::new(wavelength, cn2, waist, 1.0)?;
    if !(target_ratio > 0.0 && target_ratio.is_finite()) {
        return Err(Error::invalid(format!(
            "target w0/r0 must be positive, got {target_ratio}"
        )));
    }
    let fried = waist / target_ratio;
    let k = TAU / wavelength;
    let distance = (fried / constants.horizontal).powf(-5.0 / 3.0) / (k * k * cn2);
    let z_r = rayleigh_range(waist, wavelength);
    Ok(LinkEstimate {
        distance,
        fried,
        ratio: target_ratio,
        rayleigh_range: z_r,
        valid: distance < z_r,
    })
}

/// Forward query: the turbulence ratio reached over the budget's distance.
pub fn link_ratio(budget: &LinkBudget) -> LinkEstimate {
    let fried = fried_from_link(budget);
    let z_r = budget.rayleigh_range();
    LinkEstimate {
        distance: budget.distance,
        fried,
        ratio: budget.waist / fried,
        rayleigh_range: z_r,
        valid: budget.distance < z_r,
    }
}
