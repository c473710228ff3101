//! Coincidence curves and Shannon dimensionality for a photon pair whose
//! `A` photon crosses the turbulence.
//!
//! The source is taken as a flat azimuthal superposition `Σ_l |l⟩|−l⟩` with
//! the fiber's radial profile on both sides. The coincidence rate at plate
//! orientations `α`, `β` then depends on `δ = α − β` only:
//!
//! ```text
//! P(δ) = Σ_Δ T_Δ |f_Δ(δ)|²,   f_Δ(δ) = Σ_m c_{m+Δ} c_{−m} e^{imδ}
//! ```
//!
//! which is the bilinear form `⟨b(β)|ρ̄_A(α)|b(β)⟩` with `b_l = c*_{−l} e^{ilβ}`
//! the `B` analyzer seen through the pair correlation.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::modes::{dimensionality_no_turbulence, AngularSpectrum};
use crate::scattering::{
    self, check_window, coupling_table_with, AveragedDetectionOperator, CouplingTable,
    QuadratureOptions, DEFAULT_DL_MAX,
};
use crate::turbulence::TurbulenceModel;

/// Number of points of the default `δ` grid: 0.5° steps over `[−π, π]`.
pub const DEFAULT_GRID_POINTS: usize = 721;

/// Uniform grid of `n` points covering `[−π, π]` inclusive.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|k| -PI + TAU * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub fn default_grid() -> Vec<f64> {
    uniform_grid(DEFAULT_GRID_POINTS)
}

/// How a curve's values are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    /// Divided by the turbulence-free peak `P(0)` of the same plate, so peak
    /// heights compare across turbulence strengths.
    NoTurbulencePeak,
}

/// Sampled coincidence probability versus relative plate orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceCurve {
    pub deltas: Vec<f64>,
    pub values: Vec<f64>,
    pub normalization: Normalization,
    /// Unnormalized turbulence-free peak used as the scale.
    pub scale: f64,
    pub ratio: f64,
    pub l_max: i64,
    pub dl_max: usize,
}

impl CoincidenceCurve {
    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Area under the curve by the trapezoid rule on the stored grid.
    pub fn area(&self) -> f64 {
        self.deltas
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(d, v)| 0.5 * (d[1] - d[0]) * (v[0] + v[1]))
            .sum()
    }

    /// Value at the grid point nearest to `delta`.
    pub fn at(&self, delta: f64) -> f64 {
        let i = self
            .deltas
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - delta).abs().total_cmp(&(b.1 - delta).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.values[i]
    }
}

fn check_compatible(spectrum: &AngularSpectrum) -> Result<()> {
    if !spectrum.is_centered() {
        return Err(Error::invalid(format!(
            "spectrum window [{}, {}] must be symmetric about l = 0 for the partner analyzer",
            spectrum.l_min(),
            spectrum.l_max()
        )));
    }
    check_window(spectrum)
}

/// `f_Δ(δ) = Σ_m c_{m+Δ} c_{−m} e^{imδ}`.
fn pair_overlap(spectrum: &AngularSpectrum, delta_l: i64, delta: f64) -> Complex64 {
    const RESYNC: usize = 512;
    let step = Complex64::from_polar(1.0, delta);
    let mut phase = Complex64::new(0.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    let lo = spectrum.l_min().max(spectrum.l_min() - delta_l);
    let hi = spectrum.l_max().min(spectrum.l_max() - delta_l);
    for (i, m) in (lo..=hi).enumerate() {
        if i % RESYNC == 0 {
            phase = Complex64::from_polar(1.0, m as f64 * delta);
        }
        acc += spectrum.amplitude(m + delta_l) * spectrum.amplitude(-m) * phase;
        phase *= step;
    }
    acc
}

/// Unnormalized `P(δ)`.
fn raw_coincidence(spectrum: &AngularSpectrum, table: &CouplingTable, delta: f64) -> f64 {
    table
        .offsets()
        .filter(|(_, t)| *t > 0.0)
        .map(|(d, t)| t * pair_overlap(spectrum, d, delta).norm_sqr())
        .sum()
}

/// Turbulence-free peak `|Σ_m c_m c_{−m}|²` used to normalize curves.
pub fn no_turbulence_peak(spectrum: &AngularSpectrum) -> f64 {
    pair_overlap(spectrum, 0, 0.0).norm_sqr()
}

/// Coincidence curve on `grid`, scaled by the turbulence-free peak.
pub fn coincidence_curve(
    spectrum: &AngularSpectrum,
    table: &CouplingTable,
    grid: &[f64],
) -> Result<CoincidenceCurve> {
    if grid.is_empty() {
        return Err(Error::invalid("coincidence grid is empty"));
    }
    check_compatible(spectrum)?;
    let scale = no_turbulence_peak(spectrum);
    if scale <= 0.0 {
        return Err(Error::domain(
            "plate has no turbulence-free coincidence peak",
        ));
    }
    let values = grid
        .par_iter()
        .map(|&d| raw_coincidence(spectrum, table, d) / scale)
        .collect();
    Ok(CoincidenceCurve {
        deltas: grid.to_vec(),
        values,
        normalization: Normalization::NoTurbulencePeak,
        scale,
        ratio: table.ratio(),
        l_max: spectrum.l_max(),
        dl_max: table.dl_max(),
    })
}

/// Partner-analyzer coefficients `b_l = c*_{−l} e^{ilβ}` in the `A` basis.
pub fn partner_coefficient(spectrum: &AngularSpectrum, l: i64, beta: f64) -> Complex64 {
    spectrum.amplitude(-l).conj() * Complex64::from_polar(1.0, l as f64 * beta)
}

/// Unnormalized coincidence `⟨b(β)|ρ̄_A(α)|b(β)⟩` evaluated on an explicit
/// operator; the plate orientation `α` is the one baked into `op`.
pub fn coincidence_bilinear(
    op: &AveragedDetectionOperator,
    spectrum: &AngularSpectrum,
    beta: f64,
) -> f64 {
    op.expectation(|l| partner_coefficient(spectrum, l, beta))
}

/// Operator form of the Shannon dimensionality for one turbulent arm:
/// `Tr(ρ̄_A ρ_B) / Tr(⟨ρ̄_A⟩_α ⟨ρ_B⟩_β)` at aligned plates.
///
/// The numerator is the coincidence peak `Σ_Δ T_Δ |f_Δ(0)|²`; averaging over
/// orientations makes both operators diagonal, leaving
/// `Σ_m (Σ_Δ λ_{m+Δ} T_Δ) λ_{−m}` in the denominator.
pub fn shannon_operator(spectrum: &AngularSpectrum, table: &CouplingTable) -> Result<f64> {
    check_compatible(spectrum)?;
    let numerator = raw_coincidence(spectrum, table, 0.0);
    let denominator = orientation_averaged_overlap(spectrum, table);
    if !(denominator > 0.0) {
        return Err(Error::domain("orientation-averaged overlap vanishes"));
    }
    Ok(numerator / denominator)
}

/// `Tr(⟨ρ̄_A⟩_α ⟨ρ_B⟩_β) = Σ_Δ T_Δ Σ_m λ_{m+Δ} λ_{−m}`.
fn orientation_averaged_overlap(spectrum: &AngularSpectrum, table: &CouplingTable) -> f64 {
    table
        .offsets()
        .filter(|(_, t)| *t > 0.0)
        .map(|(d, t)| {
            t * spectrum
                .ls()
                .map(|m| spectrum.weight(m + d) * spectrum.weight(-m))
                .sum::<f64>()
        })
        .sum()
}

/// `D = 2π N_max / A` from a sampled curve.
pub fn shannon_from_curve(curve: &CoincidenceCurve) -> Result<f64> {
    if curve.deltas.len() < 2 {
        return Err(Error::domain("curve needs at least two samples"));
    }
    let area = curve.area();
    let peak = curve.max();
    if !(area > 0.0 && peak > 0.0) {
        return Err(Error::domain("all-zero coincidence curve"));
    }
    Ok(TAU * peak / area)
}

/// Which dimensionality estimates a scan computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Operator,
    Curve,
    Both,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "operator" => Ok(Method::Operator),
            "curve" => Ok(Method::Curve),
            "both" => Ok(Method::Both),
            other => Err(Error::invalid(format!(
                "unknown method {other:?} (expected operator, curve or both)"
            ))),
        }
    }
}

/// Channel metrics at one turbulence strength.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionalityReport {
    pub ratio: f64,
    pub d_operator: Option<f64>,
    pub d_curve: Option<f64>,
    /// `Tr ρ̄²` of the time-averaged detection operator.
    pub purity: f64,
    pub plate: String,
    /// Coupling weight beyond `±dl_max`, when known.
    pub angular_tail: Option<f64>,
}

/// Settings shared by every point of a scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanOptions {
    pub dl_max: usize,
    pub quadrature: QuadratureOptions,
    pub grid: Vec<f64>,
    pub plate_label: String,
    /// Allowed increase of `D_operator` between consecutive ratios.
    pub monotone_slack: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            dl_max: DEFAULT_DL_MAX,
            quadrature: QuadratureOptions::default(),
            grid: default_grid(),
            plate_label: String::from("custom"),
            monotone_slack: 1e-3,
        }
    }
}

/// Metrics for a given coupling table.
pub fn report_for_table(
    spectrum: &AngularSpectrum,
    table: &CouplingTable,
    method: Method,
    opts: &ScanOptions,
) -> Result<DimensionalityReport> {
    let d_operator = match method {
        Method::Operator | Method::Both => Some(shannon_operator(spectrum, table)?),
        Method::Curve => None,
    };
    let d_curve = match method {
        Method::Curve | Method::Both => Some(shannon_from_curve(&coincidence_curve(
            spectrum, table, &opts.grid,
        )?)?),
        Method::Operator => None,
    };
    Ok(DimensionalityReport {
        ratio: table.ratio(),
        d_operator,
        d_curve,
        purity: scattering::purity(spectrum, table),
        plate: opts.plate_label.clone(),
        angular_tail: table.angular_tail(),
    })
}

/// One report per ratio, in input order. Ratios must be non-negative and
/// sorted; the operator dimensionality must not grow with turbulence.
pub fn dimensionality_scan(
    spectrum: &AngularSpectrum,
    ratios: &[f64],
    method: Method,
    opts: &ScanOptions,
) -> Result<Vec<DimensionalityReport>> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::invalid("ratios must be finite and ≥ 0"));
    }
    if ratios.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("ratios must be sorted ascending"));
    }
    let mut reports = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let table =
            coupling_table_with(&TurbulenceModel::new(ratio)?, opts.dl_max, &opts.quadrature)?;
        reports.push(report_for_table(spectrum, &table, method, opts)?);
    }
    for w in reports.windows(2) {
        if let (Some(a), Some(b)) = (w[0].d_operator, w[1].d_operator) {
            if b > a + opts.monotone_slack {
                return Err(Error::Convergence {
                    what: format!(
                        "dimensionality grew between w0/r0 = {} and {}",
                        w[0].ratio, w[1].ratio
                    ),
                    coarse: a,
                    refined: b,
                    tolerance: opts.monotone_slack,
                });
            }
        }
    }
    Ok(reports)
}

/// Turbulence-free dimensionality, for reference alongside scans.
pub fn dimensionality_reference(spectrum: &AngularSpectrum) -> Result<f64> {
    dimensionality_no_turbulence(spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modes::{
        plate_autocorrelation, plate_spectrum, AnalyzerState, PhasePlate, DEFAULT_L_MAX,
    };
    use crate::scattering::{averaged_operator, coupling_table};

    fn quadrant() -> AngularSpectrum {
        plate_spectrum(&PhasePlate::quadrant(), DEFAULT_L_MAX).unwrap()
    }

    #[test]
    fn grid_layout() {
        let g = default_grid();
        assert_eq!(g.len(), 721);
        assert_eq!(g[0], -PI);
        assert_eq!(g[720], PI);
        assert!((g[1] - g[0] - 0.5f64.to_radians()).abs() < 1e-15);
        assert!(g[360].abs() < 1e-15);
    }

    #[test]
    fn turbulence_free_curve_is_piecewise_parabolic() {
        let c =
            coincidence_curve(&quadrant(), &CouplingTable::identity(0), &default_grid()).unwrap();
        assert!((c.at(0.0) - 1.0).abs() < 1e-12);
        let worst = c
            .deltas
            .iter()
            .zip(&c.values)
            .map(|(&d, &p)| {
                let expect = if d.abs() <= PI / 2.0 {
                    (1.0 - 2.0 * d.abs() / PI).powi(2)
                } else {
                    0.0
                };
                (p - expect).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "max error {worst}");
    }

    #[test]
    fn turbulence_free_curve_is_squared_autocorrelation() {
        let skewed = PhasePlate::from_degrees(&[(0.0, 0.0), (100.0, PI), (250.0, 0.0)]).unwrap();
        for plate in [PhasePlate::half(), skewed] {
            let s = plate_spectrum(&plate, 256).unwrap();
            let c = coincidence_curve(&s, &CouplingTable::identity(3), &uniform_grid(97)).unwrap();
            let f0 = plate_autocorrelation(&s, 0.0).value;
            for (&d, &p) in c.deltas.iter().zip(&c.values) {
                let f = plate_autocorrelation(&s, d).value;
                assert!(
                    (p - (f / f0).powi(2)).abs() < 1e-12,
                    "δ = {d}: {p} vs {}",
                    (f / f0).powi(2)
                );
            }
        }
    }

    #[test]
    fn curve_matches_bilinear_form() {
        let s = plate_spectrum(&PhasePlate::quadrant(), 48).unwrap();
        let t = coupling_table(&TurbulenceModel::new(0.65).unwrap(), 8).unwrap();
        let c = coincidence_curve(&s, &t, &[0.0, 0.4, 1.3, PI / 2.0, 2.9]).unwrap();
        for (&d, &p) in c.deltas.iter().zip(&c.values) {
            // same δ realized by different absolute orientations
            for alpha in [0.0, 0.77, -2.1] {
                let op = averaged_operator(&AnalyzerState::new(s.clone(), alpha), &t).unwrap();
                let b = coincidence_bilinear(&op, &s, alpha - d) / c.scale;
                assert!((b - p).abs() < 1e-10, "δ = {d}, α = {alpha}: {b} vs {p}");
            }
        }
    }

    #[test]
    fn turbulent_curve_has_wiggles_at_quarter_turn() {
        let t = coupling_table(&TurbulenceModel::new(0.65).unwrap(), DEFAULT_DL_MAX).unwrap();
        let c = coincidence_curve(&quadrant(), &t, &default_grid()).unwrap();
        assert!(c.values.iter().all(|v| *v >= 0.0));
        assert!(c.at(PI / 2.0) > 0.005 * c.at(0.0));
        for (k, &v) in c.values.iter().enumerate() {
            assert!((v - c.values[720 - k]).abs() < 1e-12);
        }
    }

    #[test]
    fn incompatible_inputs_rejected() {
        let shifted = quadrant().shifted(1);
        let t = CouplingTable::identity(2);
        assert!(matches!(
            coincidence_curve(&shifted, &t, &default_grid()),
            Err(Error::Invalid(_))
        ));
        assert!(coincidence_curve(&quadrant(), &t, &[]).is_err());
        assert!(shannon_operator(&shifted, &t).is_err());
    }

    #[test]
    fn shannon_without_turbulence() {
        let t = CouplingTable::identity(DEFAULT_DL_MAX);
        let q = shannon_operator(&quadrant(), &t).unwrap();
        assert!((q - 6.0).abs() < 0.05, "{q}");
        let h = plate_spectrum(&PhasePlate::half(), DEFAULT_L_MAX).unwrap();
        let d = shannon_operator(&h, &t).unwrap();
        assert!((d - 3.0).abs() < 0.05, "{d}");
        // coincides with the participation ratio
        assert!((q - dimensionality_no_turbulence(&quadrant()).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn curve_dimensionality_without_turbulence() {
        let t = CouplingTable::identity(0);
        let c = coincidence_curve(&quadrant(), &t, &default_grid()).unwrap();
        let d = shannon_from_curve(&c).unwrap();
        assert!((d - 6.0).abs() < 0.05, "{d}");
        assert!((d - shannon_operator(&quadrant(), &t).unwrap()).abs() < 1e-3);
        let h = plate_spectrum(&PhasePlate::half(), DEFAULT_L_MAX).unwrap();
        let c = coincidence_curve(&h, &t, &default_grid()).unwrap();
        assert!((shannon_from_curve(&c).unwrap() - 3.0).abs() < 0.05);
    }

    #[test]
    fn flat_coupling_drives_dimensionality_to_one() {
        let s = plate_spectrum(&PhasePlate::quadrant(), 256).unwrap();
        let t = CouplingTable::from_values(9.9, vec![1e-3; 1025]).unwrap();
        let c = coincidence_curve(&s, &t, &default_grid()).unwrap();
        let d = shannon_from_curve(&c).unwrap();
        assert!((d - 1.0).abs() < 0.01, "{d}");
        let flatness = c.max() - c.values.iter().copied().fold(f64::INFINITY, f64::min);
        assert!(flatness < 0.05 * c.max(), "{flatness}");
    }

    #[test]
    fn all_zero_curve_is_domain_error() {
        let c = CoincidenceCurve {
            deltas: default_grid(),
            values: vec![0.0; 721],
            normalization: Normalization::NoTurbulencePeak,
            scale: 1.0,
            ratio: 0.0,
            l_max: 1,
            dl_max: 0,
        };
        assert!(matches!(shannon_from_curve(&c), Err(Error::Domain(_))));
    }

    #[test]
    fn curve_area_matches_closed_form() {
        // (1/2π)∫P = Σ_Δ T_Δ Σ_m λ_{m+Δ} λ_{−m} / scale
        let s = quadrant();
        let t = coupling_table(&TurbulenceModel::new(0.3).unwrap(), DEFAULT_DL_MAX).unwrap();
        let dense = coincidence_curve(&s, &t, &uniform_grid(2881)).unwrap();
        let closed = TAU * orientation_averaged_overlap(&s, &t) / dense.scale;
        assert!((dense.area() - closed).abs() < 5e-3 * closed);
        let coarse = coincidence_curve(&s, &t, &default_grid()).unwrap();
        assert!((coarse.area() - closed).abs() < 5e-3 * closed);
        let peak = raw_coincidence(&s, &t, 0.0) / dense.scale;
        assert!((coarse.max() - peak).abs() < 5e-3 * peak);
    }

    #[test]
    fn scan_rejects_bad_ratio_lists() {
        let s = plate_spectrum(&PhasePlate::quadrant(), 64).unwrap();
        let o = ScanOptions::default();
        assert!(dimensionality_scan(&s, &[0.3, 0.1], Method::Operator, &o).is_err());
        assert!(dimensionality_scan(&s, &[-0.1], Method::Operator, &o).is_err());
    }

    #[test]
    fn single_point_scan_without_turbulence() {
        let s = quadrant();
        let r = dimensionality_scan(&s, &[0.0], Method::Both, &ScanOptions::default()).unwrap();
        assert_eq!(r.len(), 1);
        let d0 = dimensionality_no_turbulence(&s).unwrap();
        assert!((r[0].d_operator.unwrap() - d0).abs() < 1e-9);
        assert!((r[0].d_curve.unwrap() - d0).abs() < 1e-3);
        assert!((r[0].purity - s.total().powi(2)).abs() < 1e-9);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("both".parse::<Method>().unwrap(), Method::Both);
        assert!("fast".parse::<Method>().is_err());
    }
}
