//! Angular phase plates, their OAM spectra, and analyzer detection states.
//!
//! A plate is a piecewise-constant azimuthal phase imprint. Its transmission
//! `t(θ) = exp(iφ(θ))` expands as `Σ_l c_l exp(ilθ)`; the weights
//! `λ_l = |c_l|²` are the analyzer's mode content. The complex amplitudes are
//! kept alongside the weights because the turbulent channel depends on their
//! relative phases.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Default truncation `l ∈ [-1024, 1024]` of the OAM sum. Sector plates have
/// `λ_l ~ 1/l²`, so the missing weight is about `0.41 / l_max`.
pub const DEFAULT_L_MAX: i64 = 1024;

/// One sector of a plate: starts at `start` (radians) and runs
/// counter-clockwise to the next sector's start, imprinting `phase`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub start: f64,
    pub phase: f64,
}

/// Piecewise-constant azimuthal phase plate.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePlate {
    sectors: Vec<Sector>,
}

impl PhasePlate {
    /// Builds a plate from sectors with strictly increasing start angles in
    /// `[0, 2π)`. The last sector wraps around to the first.
    pub fn new(sectors: Vec<Sector>) -> Result<Self> {
        if sectors.is_empty() {
            return Err(Error::invalid("phase plate needs at least one sector"));
        }
        for s in &sectors {
            if !(s.start.is_finite() && s.phase.is_finite()) {
                return Err(Error::invalid("sector angles and phases must be finite"));
            }
            if !(0.0..TAU).contains(&s.start) {
                return Err(Error::invalid(format!(
                    "sector start {} outside [0, 2π)",
                    s.start
                )));
            }
        }
        if let Some(w) = sectors.windows(2).find(|w| w[1].start <= w[0].start) {
            return Err(Error::invalid(format!(
                "sector starts must be strictly increasing ({} then {})",
                w[0].start, w[1].start
            )));
        }
        Ok(Self { sectors })
    }

    /// Sectors given as `(start in degrees, phase in radians)`.
    pub fn from_degrees(sectors: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            sectors
                .iter()
                .map(|&(deg, phase)| Sector {
                    start: deg.to_radians(),
                    phase,
                })
                .collect(),
        )
    }

    pub fn uniform() -> Self {
        Self {
            sectors: vec![Sector {
                start: 0.0,
                phase: 0.0,
            }],
        }
    }

    /// One elevated quarter sector with an ideal π step.
    pub fn quadrant() -> Self {
        Self::quadrant_with_step(PI)
    }

    /// Quadrant plate with an arbitrary (possibly non-ideal) phase step.
    pub fn quadrant_with_step(step: f64) -> Self {
        Self {
            sectors: vec![
                Sector {
                    start: 0.0,
                    phase: step,
                },
                Sector {
                    start: PI / 2.0,
                    phase: 0.0,
                },
            ],
        }
    }

    /// One semicircle shifted by π.
    pub fn half() -> Self {
        Self::half_with_step(PI)
    }

    pub fn half_with_step(step: f64) -> Self {
        Self {
            sectors: vec![
                Sector {
                    start: 0.0,
                    phase: step,
                },
                Sector {
                    start: PI,
                    phase: 0.0,
                },
            ],
        }
    }

    pub fn sectors(&self) -> &[Sector] {
        &self.sectors
    }

    /// `(start, end, phase)` for each sector; `end` may exceed 2π for the
    /// sector that wraps.
    pub fn arcs(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let n = self.sectors.len();
        (0..n).map(move |i| {
            let s = self.sectors[i];
            let end = if i + 1 < n {
                self.sectors[i + 1].start
            } else {
                self.sectors[0].start + TAU
            };
            (s.start, end, s.phase)
        })
    }

    /// Phase imprint at azimuth `theta` (any real angle).
    pub fn phase_at(&self, theta: f64) -> f64 {
        let t = theta.rem_euclid(TAU);
        // the sector containing t is the last one starting at or before t;
        // angles before the first start belong to the wrapping sector
        match self.sectors.iter().rposition(|s| s.start <= t) {
            Some(i) => self.sectors[i].phase,
            None => self.sectors[self.sectors.len() - 1].phase,
        }
    }

    pub fn transmission(&self, theta: f64) -> Complex64 {
        Complex64::from_polar(1.0, self.phase_at(theta))
    }

    /// Direct geometric overlap `(1/2π)∫ t(θ+δ) t*(θ) dθ` of the plate with
    /// itself rotated by `δ`, computed exactly from the sector layout.
    pub fn rotated_overlap(&self, delta: f64) -> Complex64 {
        let mut cuts: Vec<f64> = self
            .sectors
            .iter()
            .flat_map(|s| [s.start, (s.start - delta).rem_euclid(TAU)])
            .collect();
        cuts.push(0.0);
        cuts.push(TAU);
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();
        let mut acc = Complex64::new(0.0, 0.0);
        for w in cuts.windows(2) {
            let width = w[1] - w[0];
            if width <= 0.0 {
                continue;
            }
            let mid = 0.5 * (w[0] + w[1]);
            acc += self.transmission(mid + delta) * self.transmission(mid).conj() * width;
        }
        acc / TAU
    }
}

/// `exp(-i·l·θ)`, exact on quarter turns so that symmetric plates give exact
/// zeros in their spectra.
fn unit_phase(l: i64, theta: f64) -> Complex64 {
    quarter_exact(l as f64 * theta / TAU)
}

/// `exp(-2πi·turns)` with exact values on multiples of a quarter turn.
fn quarter_exact(turns: f64) -> Complex64 {
    let turns = turns.rem_euclid(1.0);
    let quarters = turns * 4.0;
    let nearest = quarters.round();
    if (quarters - nearest).abs() < 1e-12 {
        return match (nearest as i64).rem_euclid(4) {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, -1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, 1.0),
        };
    }
    let (s, c) = (TAU * turns).sin_cos();
    Complex64::new(c, -s)
}

/// OAM content of a detection state over the window `[l_min, l_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularSpectrum {
    l_min: i64,
    amplitudes: Vec<Complex64>,
    weights: Vec<f64>,
}

impl AngularSpectrum {
    /// Spectrum from complex mode amplitudes `c_l`, starting at `l_min`.
    pub fn from_amplitudes(l_min: i64, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::invalid("empty spectrum window"));
        }
        if amplitudes.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite spectrum amplitude"));
        }
        let weights = amplitudes.iter().map(|c| c.norm_sqr()).collect();
        Ok(Self {
            l_min,
            amplitudes,
            weights,
        })
    }

    /// Spectrum with real non-negative amplitudes `√λ_l`.
    pub fn from_weights(l_min: i64, weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::invalid(format!("spectrum weight {w} is not ≥ 0")));
        }
        Self::from_amplitudes(
            l_min,
            weights
                .iter()
                .map(|w| Complex64::new(w.sqrt(), 0.0))
                .collect(),
        )
    }

    /// A single OAM eigenmode `l0` (windowed to `[l0 - half_width, l0 + half_width]`).
    pub fn single_mode(l0: i64, half_width: i64) -> Self {
        let n = (2 * half_width + 1) as usize;
        let mut amps = vec![Complex64::new(0.0, 0.0); n];
        amps[half_width as usize] = Complex64::new(1.0, 0.0);
        Self::from_amplitudes(l0 - half_width, amps).expect("non-empty window")
    }

    pub fn l_min(&self) -> i64 {
        self.l_min
    }

    pub fn l_max(&self) -> i64 {
        self.l_min + self.weights.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn ls(&self) -> impl Iterator<Item = i64> {
        self.l_min..=self.l_max()
    }

    /// `λ_l`, zero outside the window.
    pub fn weight(&self, l: i64) -> f64 {
        self.index(l).map_or(0.0, |i| self.weights[i])
    }

    /// `c_l`, zero outside the window.
    pub fn amplitude(&self, l: i64) -> Complex64 {
        self.index(l)
            .map_or(Complex64::new(0.0, 0.0), |i| self.amplitudes[i])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Same content relabelled `l → l + shift`.
    pub fn shifted(&self, shift: i64) -> Self {
        Self {
            l_min: self.l_min + shift,
            ..self.clone()
        }
    }

    /// True when the window is `[-L, L]`.
    pub fn is_centered(&self) -> bool {
        self.l_min == -self.l_max()
    }

    fn index(&self, l: i64) -> Option<usize> {
        let i = l - self.l_min;
        (0..self.weights.len() as i64)
            .contains(&i)
            .then_some(i as usize)
    }
}

/// Angular spectrum of `plate` over `l ∈ [-l_max, l_max]`, from closed-form
/// arc integrals of each sector.
pub fn plate_spectrum(plate: &PhasePlate, l_max: i64) -> Result<AngularSpectrum> {
    if l_max < 1 {
        return Err(Error::invalid(format!("l_max must be ≥ 1, got {l_max}")));
    }
    // re-validate: PhasePlate fields are private, but keep the contract local
    let plate = PhasePlate::new(plate.sectors.clone())?;
    let amps = (-l_max..=l_max)
        .map(|l| plate_coefficient(&plate, l))
        .collect();
    AngularSpectrum::from_amplitudes(-l_max, amps)
}

fn plate_coefficient(plate: &PhasePlate, l: i64) -> Complex64 {
    if plate.sectors.len() == 1 {
        return if l == 0 {
            quarter_exact(-plate.sectors[0].phase / TAU)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, b, phase) in plate.arcs() {
        let arc = if l == 0 {
            Complex64::new(b - a, 0.0)
        } else {
            // ∫_a^b e^{-ilθ} dθ = i (e^{-ilb} - e^{-ila}) / l
            Complex64::i() * (unit_phase(l, b) - unit_phase(l, a)) / l as f64
        };
        acc += quarter_exact(-phase / TAU) * arc;
    }
    acc / TAU
}

/// Value of the turbulence-free autocorrelation `F(δ) = Σ λ_l e^{ilδ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Autocorrelation {
    pub value: f64,
    /// Imaginary part of the sum; vanishes for l-symmetric spectra.
    pub imag_residual: f64,
}

pub fn plate_autocorrelation(spectrum: &AngularSpectrum, delta: f64) -> Autocorrelation {
    const RESYNC: usize = 512;
    let step = Complex64::from_polar(1.0, delta);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut phase = Complex64::new(0.0, 0.0);
    for (i, (l, &w)) in spectrum.ls().zip(spectrum.weights()).enumerate() {
        if i % RESYNC == 0 {
            phase = Complex64::from_polar(1.0, l as f64 * delta);
        }
        sum += phase * w;
        phase *= step;
    }
    Autocorrelation {
        value: sum.re,
        imag_residual: sum.im,
    }
}

/// Participation ratio `(Σλ)² / Σλ²`, the number of modes a rotating
/// analyzer scans without turbulence.
pub fn dimensionality_no_turbulence(spectrum: &AngularSpectrum) -> Result<f64> {
    let total = spectrum.total();
    let sq: f64 = spectrum.weights().iter().map(|w| w * w).sum();
    if total <= 0.0 || sq <= 0.0 {
        return Err(Error::domain("all-zero spectrum has no dimensionality"));
    }
    Ok(total * total / sq)
}

/// Analyzer detection state: plate spectrum rotated by `orientation`, with
/// the fiber's Gaussian radial profile of field radius `waist`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzerState {
    pub spectrum: AngularSpectrum,
    pub orientation: f64,
    pub waist: f64,
}

impl AnalyzerState {
    /// State with unit waist: all scattering quantities are expressed in
    /// units of the fiber-mode radius.
    pub fn new(spectrum: AngularSpectrum, orientation: f64) -> Self {
        Self {
            spectrum,
            orientation,
            waist: 1.0,
        }
    }

    pub fn with_waist(mut self, waist: f64) -> Self {
        self.waist = waist;
        self
    }

    pub fn rotated(&self, orientation: f64) -> Self {
        Self {
            orientation,
            ..self.clone()
        }
    }

    /// Coefficient of `|l⟩`: `c_l e^{ilα}`.
    pub fn coefficient(&self, l: i64) -> Complex64 {
        self.spectrum.amplitude(l) * Complex64::from_polar(1.0, l as f64 * self.orientation)
    }

    /// Radial profile `g(r) = (2/w₀) exp(-r²/w₀²)`.
    pub fn radial(&self, r: f64) -> f64 {
        fiber_mode_radial(r, self.waist)
    }
}

pub fn fiber_mode_radial(r: f64, waist: f64) -> f64 {
    2.0 / waist * (-(r * r) / (waist * waist)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quadrant_zero_mode_is_a_quarter() {
        let s = plate_spectrum(&PhasePlate::quadrant(), 8).unwrap();
        assert!((s.weight(0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn quadrant_matches_numerical_quadrature() {
        let plate = PhasePlate::quadrant();
        let s = plate_spectrum(&plate, 8).unwrap();
        // midpoint rule on a grid aligned to quarter turns integrates the
        // sector-constant transmission exactly per cell up to O(h^2)
        let n = 1 << 16;
        for l in -8i64..=8 {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..n {
                let th = (k as f64 + 0.5) * TAU / n as f64;
                acc += plate.transmission(th) * Complex64::from_polar(1.0, -(l as f64) * th);
            }
            acc /= n as f64;
            assert!((acc - s.amplitude(l)).norm() < 1e-8, "l = {l}");
        }
    }

    #[test]
    fn uniform_plate_is_single_mode() {
        let s = plate_spectrum(&PhasePlate::uniform(), 10).unwrap();
        assert_eq!(s.weight(0), 1.0);
        for l in s.ls().filter(|&l| l != 0) {
            assert_eq!(s.weight(l), 0.0);
        }
    }

    #[test]
    fn half_plate_odd_modes_only() {
        let s = plate_spectrum(&PhasePlate::half(), 16).unwrap();
        let expect = 4.0 / (PI * PI);
        assert!((s.weight(1) - expect).abs() < 1e-15);
        assert!((s.weight(-1) - expect).abs() < 1e-15);
        for l in (-16i64..=16).filter(|l| l % 2 == 0) {
            assert_eq!(s.weight(l), 0.0, "l = {l}");
        }
    }

    #[test]
    fn malformed_plates_rejected() {
        let bad = [
            vec![],
            vec![
                Sector {
                    start: 1.0,
                    phase: 0.0,
                },
                Sector {
                    start: 0.5,
                    phase: PI,
                },
            ],
            vec![
                Sector {
                    start: 1.0,
                    phase: 0.0,
                },
                Sector {
                    start: 1.0,
                    phase: PI,
                },
            ],
            vec![Sector {
                start: 7.0,
                phase: 0.0,
            }],
            vec![Sector {
                start: -0.1,
                phase: 0.0,
            }],
        ];
        for sectors in bad {
            assert!(matches!(PhasePlate::new(sectors), Err(Error::Invalid(_))));
        }
        assert!(plate_spectrum(&PhasePlate::quadrant(), 0).is_err());
    }

    #[test]
    fn autocorrelation_examples() {
        let s = plate_spectrum(&PhasePlate::quadrant(), DEFAULT_L_MAX).unwrap();
        let f0 = plate_autocorrelation(&s, 0.0);
        assert!((f0.value - 1.0).abs() < 5e-3);
        let f = plate_autocorrelation(&s, PI / 4.0);
        assert!((f.value - 0.5).abs() < 1e-3);
        assert!(f.imag_residual.abs() < 1e-12);
        let f = plate_autocorrelation(&s, PI);
        assert!(f.value.abs() < 1e-3);
    }

    #[test]
    fn autocorrelation_matches_geometric_overlap() {
        // Fourier route vs. exact sector intersection. The truncation error
        // is bounded by the missing weight 1 - Σλ, so pick a window where
        // that bound is below the tolerance.
        for plate in [PhasePlate::quadrant(), PhasePlate::half()] {
            let s = plate_spectrum(&plate, 450_000).unwrap();
            assert!(1.0 - s.total() < 1e-6, "tail {}", 1.0 - s.total());
            for k in 0..720 {
                let d = -PI + TAU * k as f64 / 720.0;
                let fourier = plate_autocorrelation(&s, d);
                let direct = plate.rotated_overlap(d);
                assert!(
                    (fourier.value - direct.re).abs() < 1e-6,
                    "δ = {d}: {} vs {}",
                    fourier.value,
                    direct.re
                );
                assert!(direct.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn geometric_overlap_quadrant_closed_form() {
        let plate = PhasePlate::quadrant();
        for k in 0..=90 {
            let d = (k as f64).to_radians();
            let expect = 1.0 - 2.0 * d / PI;
            assert!((plate.rotated_overlap(d).re - expect).abs() < 1e-12);
            assert!((plate.rotated_overlap(-d).re - expect).abs() < 1e-12);
        }
        assert!(plate.rotated_overlap(PI).re.abs() < 1e-12);
    }

    #[test]
    fn dimensionality_examples() {
        let q = plate_spectrum(&PhasePlate::quadrant(), DEFAULT_L_MAX).unwrap();
        assert!((dimensionality_no_turbulence(&q).unwrap() - 6.0).abs() < 0.01);
        let h = plate_spectrum(&PhasePlate::half(), DEFAULT_L_MAX).unwrap();
        assert!((dimensionality_no_turbulence(&h).unwrap() - 3.0).abs() < 0.01);
        let one = AngularSpectrum::single_mode(0, 3);
        assert_eq!(dimensionality_no_turbulence(&one).unwrap(), 1.0);
        let zero = AngularSpectrum::from_weights(-2, vec![0.0; 5]).unwrap();
        assert!(matches!(
            dimensionality_no_turbulence(&zero),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn tail_bound() {
        // measured: L·(1 - Σλ) → 2·2/π² ≈ 0.405 for both plates
        for plate in [PhasePlate::quadrant(), PhasePlate::half()] {
            for l_max in [64i64, 128, 512, DEFAULT_L_MAX] {
                let s = plate_spectrum(&plate, l_max).unwrap();
                let tail = 1.0 - s.total();
                assert!(
                    tail >= 0.0 && tail <= 0.41 / l_max as f64,
                    "L = {l_max}: {tail}"
                );
            }
            assert!(plate_spectrum(&plate, 128).unwrap().total() >= 0.995);
        }
    }

    #[test]
    fn non_ideal_step_breaks_even_suppression() {
        let s = plate_spectrum(&PhasePlate::half_with_step(PI * 0.97), 8).unwrap();
        assert!(s.weight(0) > 0.0);
        assert!(s.total() <= 1.0);
    }

    #[test]
    fn analyzer_radial_profile_is_normalized() {
        let st = AnalyzerState::new(AngularSpectrum::single_mode(0, 0), 0.0).with_waist(0.37);
        let rule = crate::quadrature::gauss_legendre_on(64, 0.0, 0.37 * 6.0);
        let norm = rule.integrate(|r| st.radial(r).powi(2) * r);
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rotation_is_phase_only() {
        let s = plate_spectrum(&PhasePlate::quadrant(), 8).unwrap();
        let a = AnalyzerState::new(s.clone(), 0.0);
        let b = a.rotated(0.7);
        for l in s.ls() {
            let ratio = b.coefficient(l) / a.coefficient(l);
            if s.weight(l) > 0.0 {
                assert!((ratio - Complex64::from_polar(1.0, 0.7 * l as f64)).norm() < 1e-12);
            }
            assert!((b.coefficient(l).norm_sqr() - s.weight(l)).abs() < 1e-15);
        }
    }

    fn plate_strategy() -> impl Strategy<Value = PhasePlate> {
        prop::collection::btree_set(0u32..360, 1..6).prop_flat_map(|starts| {
            let n = starts.len();
            (Just(starts), prop::collection::vec(prop::bool::ANY, n)).prop_map(|(starts, steps)| {
                let sectors = starts
                    .into_iter()
                    .zip(steps)
                    .map(|(deg, up)| (deg as f64, if up { PI } else { 0.0 }))
                    .collect::<Vec<_>>();
                PhasePlate::from_degrees(&sectors).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn real_plates_have_symmetric_spectra(plate in plate_strategy()) {
            let s = plate_spectrum(&plate, 24).unwrap();
            for l in 1..=24 {
                prop_assert!((s.weight(l) - s.weight(-l)).abs() < 1e-14);
            }
            prop_assert!(s.total() <= 1.0 + 1e-12);
        }

        #[test]
        fn dimensionality_invariant_under_rotation_and_shift(
            plate in plate_strategy(), rot in 0.0..TAU, shift in -5i64..5
        ) {
            let s = plate_spectrum(&plate, 32).unwrap();
            let d = dimensionality_no_turbulence(&s).unwrap();
            let rotated = plate_spectrum(&rotate_plate(&plate, rot), 32).unwrap();
            prop_assert!((dimensionality_no_turbulence(&rotated).unwrap() - d).abs() < 1e-9);
            prop_assert!((dimensionality_no_turbulence(&s.shifted(shift)).unwrap() - d).abs() < 1e-12);
        }
    }

    fn rotate_plate(plate: &PhasePlate, rot: f64) -> PhasePlate {
        let mut sectors: Vec<Sector> = plate
            .sectors()
            .iter()
            .map(|s| Sector {
                start: (s.start + rot).rem_euclid(TAU),
                phase: s.phase,
            })
            .collect();
        sectors.sort_by(|a, b| a.start.total_cmp(&b.start));
        PhasePlate::new(sectors).unwrap()
    }
}
