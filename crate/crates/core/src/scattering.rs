//! Time-averaged action of Kolmogorov turbulence on fiber-coupled OAM modes.
//!
//! The averaged detection operator of an analyzer with mode amplitudes `c_l`
//! reduces, through the azimuthal symmetry of the coherence kernel, to
//!
//! ```text
//! ρ̄_{m,m'} = e^{i(m-m')α} Σ_Δ c_{m+Δ} c*_{m'+Δ} T_Δ
//! T_Δ      = ∫∫ g²(r₁) g²(r₂) K_Δ(r₁, r₂) r₁ r₂ dr₁ dr₂
//! K_Δ      = (1/2π) ∫ cos(Δφ) C(|r₁ - r₂|) dφ
//! ```
//!
//! with `g(r) = 2 exp(-r²)` in units of the fiber-mode radius. `T_Δ` is the
//! probability that turbulence moves a detection mode by `Δ` while keeping it
//! in the fiber's radial mode; `Σ T_Δ < 1` because the rest leaks into radial
//! modes the fiber rejects.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::modes::{AnalyzerState, AngularSpectrum};
use crate::quadrature::{self, Rule};
use crate::turbulence::TurbulenceModel;

pub const DEFAULT_DL_MAX: usize = 12;

/// Largest boundary weight `λ` tolerated at the edge of a spectrum window.
pub const WINDOW_TAIL_THRESHOLD: f64 = 1e-3;

/// Node counts for the coupling-table quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions {
    /// Gauss-Legendre nodes per radial axis.
    pub radial_nodes: usize,
    /// Radial cutoff in `w₀` units.
    pub radial_extent: f64,
    /// Uniform panels on `[π/4, π]`.
    pub angular_uniform_panels: usize,
    /// Geometrically graded panels on `[0, π/4]`.
    pub angular_graded_panels: usize,
    /// Gauss-Legendre order per angular panel.
    pub angular_order: usize,
    /// Largest change in any `T_Δ` allowed when all node counts double.
    pub convergence_tol: f64,
    pub check_convergence: bool,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            radial_nodes: 64,
            radial_extent: 4.0,
            angular_uniform_panels: 6,
            angular_graded_panels: 14,
            angular_order: 10,
            convergence_tol: 1e-4,
            check_convergence: true,
        }
    }
}

impl QuadratureOptions {
    /// Same rule family with every node count doubled.
    pub fn doubled(&self) -> Self {
        Self {
            radial_nodes: 2 * self.radial_nodes,
            angular_order: 2 * self.angular_order,
            ..*self
        }
    }

    fn angular_rule(&self) -> Rule {
        quadrature::graded_half_period(
            self.angular_uniform_panels,
            self.angular_graded_panels,
            self.angular_order,
        )
    }

    fn angular_nodes(&self) -> usize {
        (self.angular_uniform_panels + self.angular_graded_panels + 1) * self.angular_order
    }
}

/// Quadrature bookkeeping attached to a table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureInfo {
    pub radial_nodes: usize,
    pub angular_nodes: usize,
    /// Largest `|T_Δ(refined) - T_Δ(coarse)|`; `None` if no check ran.
    pub max_change: Option<f64>,
}

/// OAM transfer weights `T_Δ`, `Δ = 0..=dl_max`, extended by `T_{-Δ} = T_Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingTable {
    ratio: f64,
    values: Vec<f64>,
    /// `Σ_Δ T_Δ` over all offsets (fiber-coupled fraction); `None` when unknown.
    total: Option<f64>,
    /// Standard errors from Monte Carlo estimates.
    stderr: Option<Vec<f64>>,
    quadrature: Option<QuadratureInfo>,
}

impl CouplingTable {
    /// Table from explicit values (e.g. for what-if studies or Monte Carlo).
    pub fn from_values(ratio: f64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("coupling table needs T_0"));
        }
        if let Some(v) = values
            .iter()
            .find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(Error::invalid(format!(
                "coupling weight {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            ratio,
            values,
            total: None,
            stderr: None,
            quadrature: None,
        })
    }

    /// The turbulence-free table `T_Δ = δ_{Δ0}`.
    pub fn identity(dl_max: usize) -> Self {
        let mut values = vec![0.0; dl_max + 1];
        values[0] = 1.0;
        Self {
            ratio: 0.0,
            values,
            total: Some(1.0),
            stderr: None,
            quadrature: None,
        }
    }

    pub(crate) fn with_stderr(mut self, stderr: Vec<f64>) -> Self {
        self.stderr = Some(stderr);
        self
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn dl_max(&self) -> usize {
        self.values.len() - 1
    }

    /// `T_Δ` for `Δ ≥ 0`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `T_Δ` for any integer offset; zero beyond `dl_max`.
    pub fn get(&self, delta: i64) -> f64 {
        self.values
            .get(delta.unsigned_abs() as usize)
            .copied()
            .unwrap_or(0.0)
    }

    pub fn stderr(&self) -> Option<&[f64]> {
        self.stderr.as_deref()
    }

    pub fn quadrature(&self) -> Option<QuadratureInfo> {
        self.quadrature
    }

    /// `Σ_{|Δ| ≤ dl_max} T_Δ`.
    pub fn windowed_sum(&self) -> f64 {
        self.values[0] + 2.0 * self.values[1..].iter().sum::<f64>()
    }

    /// Fiber-coupled fraction summed over all offsets, when computed.
    pub fn total(&self) -> Option<f64> {
        self.total
    }

    /// Coupling weight beyond `±dl_max`, when the total is known.
    pub fn angular_tail(&self) -> Option<f64> {
        self.total.map(|t| (t - self.windowed_sum()).max(0.0))
    }

    /// Intensity scattered out of the fiber's radial mode.
    pub fn radial_leakage(&self) -> Option<f64> {
        self.total.map(|t| 1.0 - t)
    }

    /// Iterator over `(Δ, T_Δ)` for `Δ ∈ [-dl_max, dl_max]`.
    pub fn offsets(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        let d = self.dl_max() as i64;
        (-d..=d).map(move |k| (k, self.get(k)))
    }
}

/// Angular kernel `K_Δ(r₁, r₂)` using the default graded rule.
pub fn angular_kernel(model: &TurbulenceModel, delta: i64, r1: f64, r2: f64) -> f64 {
    let rule = QuadratureOptions::default().angular_rule();
    angular_kernel_with(model, delta, r1, r2, &rule)
}

pub fn angular_kernel_with(
    model: &TurbulenceModel,
    delta: i64,
    r1: f64,
    r2: f64,
    rule: &Rule,
) -> f64 {
    if model.is_turbulence_free() {
        return if delta == 0 { 1.0 } else { 0.0 };
    }
    let d = delta as f64;
    rule.integrate(|phi| (d * phi).cos() * model.coherence(separation(r1, r2, phi)))
        / std::f64::consts::PI
}

/// `|r₁ - r₂|` for two points at azimuthal offset `phi`, written to stay
/// accurate near the coincidence cusp.
fn separation(r1: f64, r2: f64, phi: f64) -> f64 {
    let d = r1 - r2;
    let s = (0.5 * phi).sin();
    (d * d + 4.0 * r1 * r2 * s * s).sqrt()
}

/// Coupling table with the default quadrature and doubling check.
pub fn coupling_table(model: &TurbulenceModel, dl_max: usize) -> Result<CouplingTable> {
    coupling_table_with(model, dl_max, &QuadratureOptions::default())
}

pub fn coupling_table_with(
    model: &TurbulenceModel,
    dl_max: usize,
    opts: &QuadratureOptions,
) -> Result<CouplingTable> {
    if model.is_turbulence_free() {
        let mut t = CouplingTable::identity(dl_max);
        t.quadrature = Some(QuadratureInfo {
            radial_nodes: opts.radial_nodes,
            angular_nodes: opts.angular_nodes(),
            max_change: Some(0.0),
        });
        return Ok(t);
    }
    let coarse = evaluate(model, dl_max, opts);
    let (est, max_change, used) = if opts.check_convergence {
        let fine_opts = opts.doubled();
        let fine = evaluate(model, dl_max, &fine_opts);
        let (worst, change) = coarse
            .values
            .iter()
            .zip(&fine.values)
            .enumerate()
            .map(|(k, (a, b))| (k, (a - b).abs()))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if change > opts.convergence_tol {
            return Err(Error::Convergence {
                what: format!("T_{worst} at w0/r0 = {}", model.ratio()),
                coarse: coarse.values[worst],
                refined: fine.values[worst],
                tolerance: opts.convergence_tol,
            });
        }
        (fine, Some(change), fine_opts)
    } else {
        (coarse, None, *opts)
    };
    Ok(CouplingTable {
        ratio: model.ratio(),
        values: est.values.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        total: Some(est.total.clamp(0.0, 1.0)),
        stderr: None,
        quadrature: Some(QuadratureInfo {
            radial_nodes: used.radial_nodes,
            angular_nodes: used.angular_nodes(),
            max_change,
        }),
    })
}

struct RawTable {
    values: Vec<f64>,
    total: f64,
}

fn evaluate(model: &TurbulenceModel, dl_max: usize, opts: &QuadratureOptions) -> RawTable {
    let radial = quadrature::gauss_legendre_on(opts.radial_nodes, 0.0, opts.radial_extent);
    // radial weight g²(r) r dr with g = 2 exp(-r²)
    let w: Vec<f64> = radial
        .nodes
        .iter()
        .zip(&radial.weights)
        .map(|(&r, &wr)| 4.0 * (-2.0 * r * r).exp() * r * wr)
        .collect();
    let angular = opts.angular_rule();
    let n_ang = angular.len();
    let nd = dl_max + 1;
    // cos(Δφ_j) w_j / π, laid out per node
    let mut cos_table = vec![0.0; n_ang * nd];
    for (j, (&phi, &wj)) in angular.nodes.iter().zip(&angular.weights).enumerate() {
        for d in 0..nd {
            cos_table[j * nd + d] = (d as f64 * phi).cos() * wj / std::f64::consts::PI;
        }
    }
    let r = &radial.nodes;
    let n = r.len();
    // one row per r₁ node; upper triangle by symmetry; rows reduced in order
    let rows: Vec<(Vec<f64>, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = vec![0.0; nd];
            let mut kern = vec![0.0; nd];
            let mut total = 0.0;
            for j in i..n {
                let sym = if i == j { 1.0 } else { 2.0 };
                let wij = sym * w[i] * w[j];
                kern.iter_mut().for_each(|k| *k = 0.0);
                for (a, &phi) in angular.nodes.iter().enumerate() {
                    let c = model.coherence(separation(r[i], r[j], phi));
                    let row = &cos_table[a * nd..(a + 1) * nd];
                    for (k, &cw) in kern.iter_mut().zip(row) {
                        *k += c * cw;
                    }
                }
                for (a, k) in acc.iter_mut().zip(&kern) {
                    *a += wij * k;
                }
                total += wij * model.coherence((r[i] - r[j]).abs());
            }
            (acc, total)
        })
        .collect();
    let mut values = vec![0.0; nd];
    let mut total = 0.0;
    for (row, t) in rows {
        for (v, x) in values.iter_mut().zip(row) {
            *v += x;
        }
        total += t;
    }
    RawTable { values, total }
}

/// Time-averaged (unnormalized) detection operator on the fiber-coupled OAM
/// modes `m ∈ [l_min, l_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedDetectionOperator {
    l_min: i64,
    matrix: DMatrix<Complex64>,
    ratio: f64,
    orientation: f64,
}

impl AveragedDetectionOperator {
    pub fn l_min(&self) -> i64 {
        self.l_min
    }

    pub fn l_max(&self) -> i64 {
        self.l_min + self.matrix.nrows() as i64 - 1
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// `ρ̄_{m,m'}`, zero outside the window.
    pub fn entry(&self, m: i64, mp: i64) -> Complex64 {
        let (i, j) = (m - self.l_min, mp - self.l_min);
        let n = self.matrix.nrows() as i64;
        if (0..n).contains(&i) && (0..n).contains(&j) {
            self.matrix[(i as usize, j as usize)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    /// `Tr ρ̄² = Σ |ρ̄_{m,m'}|²`.
    pub fn purity(&self) -> f64 {
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Largest `|ρ̄_{m,m'} - conj(ρ̄_{m',m})|`.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let eig = self.matrix.clone().symmetric_eigenvalues();
        let mut v: Vec<f64> = eig.iter().copied().collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    /// `⟨v|ρ̄|v⟩` for a vector given by its OAM coefficients.
    pub fn expectation(&self, coefficient: impl Fn(i64) -> Complex64) -> f64 {
        let n = self.matrix.nrows();
        let v: Vec<Complex64> = (0..n).map(|i| coefficient(self.l_min + i as i64)).collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..n {
                row += self.matrix[(i, j)] * v[j];
            }
            acc += v[i].conj() * row;
        }
        acc.re
    }
}

/// Builds `ρ̄` from the analyzer state and a coupling table. The operator
/// window is the spectrum window widened by `dl_max` on both sides so that
/// no scattered weight is dropped.
pub fn averaged_operator(
    state: &AnalyzerState,
    table: &CouplingTable,
) -> Result<AveragedDetectionOperator> {
    let spec = &state.spectrum;
    check_window(spec)?;
    let dl = table.dl_max() as i64;
    let l_min = spec.l_min() - dl;
    let l_max = spec.l_max() + dl;
    let n = (l_max - l_min + 1) as usize;
    let mut rho = DMatrix::<Complex64>::zeros(n, n);
    for (delta, t) in table.offsets() {
        if t == 0.0 {
            continue;
        }
        // ρ̄ += T_Δ |v_Δ⟩⟨v_Δ| with (v_Δ)_m = c_{m+Δ} e^{imα}
        let v: Vec<Complex64> = (0..n)
            .map(|i| {
                let m = l_min + i as i64;
                spec.amplitude(m + delta) * Complex64::from_polar(1.0, m as f64 * state.orientation)
            })
            .collect();
        let nz: Vec<usize> = (0..n).filter(|&i| v[i].norm_sqr() > 0.0).collect();
        for &i in &nz {
            let vi = v[i] * t;
            for &j in &nz {
                rho[(i, j)] += vi * v[j].conj();
            }
        }
    }
    Ok(AveragedDetectionOperator {
        l_min,
        matrix: rho,
        ratio: table.ratio(),
        orientation: state.orientation,
    })
}

pub(crate) fn check_window(spec: &AngularSpectrum) -> Result<()> {
    let edge = spec.weight(spec.l_min()).max(spec.weight(spec.l_max()));
    if spec.len() > 1 && edge > WINDOW_TAIL_THRESHOLD {
        return Err(Error::invalid(format!(
            "spectrum window [{}, {}] too small: boundary weight {edge:.3e} exceeds {WINDOW_TAIL_THRESHOLD:.0e}",
            spec.l_min(),
            spec.l_max()
        )));
    }
    Ok(())
}

/// `R(k) = Σ_n c_{n+k} c*_n`.
pub(crate) fn amplitude_autocorrelation(spec: &AngularSpectrum, k: i64) -> Complex64 {
    spec.ls()
        .map(|l| spec.amplitude(l + k) * spec.amplitude(l).conj())
        .sum()
}

/// Purity `Tr ρ̄²` straight from spectrum and table:
/// `Σ_{Δ,Δ'} T_Δ T_{Δ'} |R(Δ - Δ')|²`. Independent of the orientation.
pub fn purity(spectrum: &AngularSpectrum, table: &CouplingTable) -> f64 {
    let dl = table.dl_max() as i64;
    let r2: Vec<f64> = (0..=2 * dl)
        .map(|k| amplitude_autocorrelation(spectrum, k).norm_sqr())
        .collect();
    let mut acc = 0.0;
    for (d1, t1) in table.offsets() {
        for (d2, t2) in table.offsets() {
            acc += t1 * t2 * r2[(d1 - d2).unsigned_abs() as usize];
        }
    }
    acc
}
