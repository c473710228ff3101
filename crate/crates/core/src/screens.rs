//! Monte Carlo phase screens: an independent check on the analytic coupling
//! table and an emulation of the long-exposure beam broadening.
//!
//! Screens are sampled on an `N × N` grid spanning `extent` fiber-mode radii.
//! The Fourier-series part uses the Kolmogorov spectral density
//! `Φ(f) ≈ 0.0229 r₀^{-5/3} f^{-11/3}` (`f` in cycles per unit length); cells
//! near the origin get the `|f|²`-weighted cell integral of `Φ` instead of a
//! point sample, and nested 3×3 subharmonic layers fill the central cell.
//! One complex FFT yields two independent screens (real and imaginary parts).
//!
//! Realization `i` draws from a ChaCha stream keyed by `(seed, i / 2)`, and
//! every ensemble reduction runs in realization order, so results depend on
//! neither scheduling nor worker count.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::modes::{fiber_mode_radial, PhasePlate};
use crate::quadrature::gauss_legendre_on;
use crate::scattering::CouplingTable;
use crate::turbulence::TurbulenceModel;

pub const DEFAULT_GRID: usize = 512;
pub const DEFAULT_EXTENT: f64 = 8.0;
pub const DEFAULT_SUBHARMONIC_LEVELS: usize = 16;
pub const MIN_COUPLING_REALIZATIONS: usize = 100;
pub const MIN_BROADENING_REALIZATIONS: usize = 500;

/// Spectral prefactor giving `D(r₀) = 6.88` exactly:
/// `6.88 · (5/3) Γ(11/6) / (4π · π^{5/3} · Γ(1/6))`.
const SPECTRAL_PREFACTOR: f64 = 0.022_882_691_706_357_70;
/// Cells with `max(|kx|, |ky|)` up to this use the weighted cell integral.
const LOW_FREQUENCY_CELLS: i64 = 2;
const CELL_QUADRATURE: usize = 16;
/// Realizations per deterministic reduction chunk.
const CHUNK: usize = 16;

/// Sampling grid and spectral depth of a screen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenOptions {
    pub n: usize,
    /// Side length in `w₀` units.
    pub extent: f64,
    pub subharmonic_levels: usize,
}

impl Default for ScreenOptions {
    fn default() -> Self {
        Self {
            n: DEFAULT_GRID,
            extent: DEFAULT_EXTENT,
            subharmonic_levels: DEFAULT_SUBHARMONIC_LEVELS,
        }
    }
}

impl ScreenOptions {
    pub fn with_grid(n: usize, extent: f64) -> Self {
        Self {
            n,
            extent,
            ..Self::default()
        }
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.n as f64
    }

    fn validate(&self) -> Result<()> {
        if self.n < 128 || !self.n.is_power_of_two() {
            return Err(Error::invalid(format!(
                "grid size must be a power of two ≥ 128, got {}",
                self.n
            )));
        }
        if !(self.extent.is_finite() && self.extent >= 8.0) {
            return Err(Error::invalid(format!(
                "screen extent must be ≥ 8 w0, got {}",
                self.extent
            )));
        }
        Ok(())
    }

    /// Pixel-center coordinate of index `i`, centered on the optical axis.
    fn coordinate(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.spacing() - 0.5 * self.extent
    }
}

/// One sampled phase screen, row-major (`values[iy * n + ix]`), radians.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScreen {
    pub options: ScreenOptions,
    pub ratio: f64,
    pub seed: u64,
    pub realization: u64,
    pub values: Vec<f64>,
}

impl PhaseScreen {
    pub fn n(&self) -> usize {
        self.options.n
    }

    pub fn at(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.options.n + ix]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Header written next to raw dumps.
    pub fn header(&self) -> String {
        format!(
            "n = {}\nextent = {}\nratio = {}\nseed = {}\nrealization = {}\nlayout = row-major f64 little-endian\n",
            self.options.n, self.options.extent, self.ratio, self.seed, self.realization
        )
    }

    /// Writes the values as little-endian `f64` to `path` and the header to
    /// `path` with extension `hdr`. Returns the header path.
    pub fn write_raw(&self, path: &Path) -> Result<PathBuf> {
        let mut out = BufWriter::new(File::create(path)?);
        for v in &self.values {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()?;
        let header = path.with_extension("hdr");
        std::fs::write(&header, self.header())?;
        Ok(header)
    }
}

/// `|f|²`-weighted integral of `Φ` over a square cell, divided by `|f_c|²`.
fn weighted_cell_variance(center: (f64, f64), width: f64, spectral: f64) -> f64 {
    let rx = gauss_legendre_on(
        CELL_QUADRATURE,
        center.0 - 0.5 * width,
        center.0 + 0.5 * width,
    );
    let ry = gauss_legendre_on(
        CELL_QUADRATURE,
        center.1 - 0.5 * width,
        center.1 + 0.5 * width,
    );
    let mut acc = 0.0;
    for (fy, wy) in ry.nodes.iter().zip(&ry.weights) {
        for (fx, wx) in rx.nodes.iter().zip(&rx.weights) {
            // Φ |f|² = c |f|^{-5/3}
            acc += wx * wy * spectral * (fx * fx + fy * fy).powf(-5.0 / 6.0);
        }
    }
    acc / (center.0 * center.0 + center.1 * center.1)
}

/// One subharmonic layer: eight cells around the origin at spacing `df`.
#[derive(Debug, Clone)]
struct SubharmonicLayer {
    /// Standard deviations for `(i, j) ∈ {-1,0,1}²`, row-major, centre zero.
    sigma: [f64; 9],
    /// `e^{2πi·k·df·x} − 1` for `k = -1, +1` at every coordinate.
    minus: Vec<Complex64>,
    plus: Vec<Complex64>,
}

fn expm1_i(a: f64) -> Complex64 {
    // e^{ia} − 1 without cancellation for tiny a
    let h = (0.5 * a).sin();
    Complex64::new(-2.0 * h * h, a.sin())
}

/// Precomputed spectral amplitudes and FFT plan for one model and grid.
pub struct ScreenGenerator {
    options: ScreenOptions,
    model: TurbulenceModel,
    amplitude: Vec<f64>,
    layers: Vec<SubharmonicLayer>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ScreenGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ScreenGenerator")
            .field("options", &self.options)
            .field("ratio", &self.model.ratio())
            .finish()
    }
}

impl ScreenGenerator {
    pub fn new(model: &TurbulenceModel, options: &ScreenOptions) -> Result<Self> {
        options.validate()?;
        let n = options.n;
        let df = 1.0 / options.extent;
        let spectral =
            SPECTRAL_PREFACTOR * model.constants.structure / 6.88 * model.ratio().powf(5.0 / 3.0);
        let signed = |k: usize| -> i64 {
            if k < n / 2 {
                k as i64
            } else {
                k as i64 - n as i64
            }
        };
        let mut amplitude = vec![0.0; n * n];
        if spectral > 0.0 {
            for ky in 0..n {
                for kx in 0..n {
                    let (sx, sy) = (signed(kx), signed(ky));
                    if sx == 0 && sy == 0 {
                        continue;
                    }
                    let (fx, fy) = (sx as f64 * df, sy as f64 * df);
                    let var = if sx.abs().max(sy.abs()) <= LOW_FREQUENCY_CELLS {
                        weighted_cell_variance((fx, fy), df, spectral)
                    } else {
                        spectral * (fx * fx + fy * fy).powf(-11.0 / 6.0) * df * df
                    };
                    amplitude[ky * n + kx] = var.sqrt();
                }
            }
        }
        let coords: Vec<f64> = (0..n).map(|i| options.coordinate(i)).collect();
        let mut layers = Vec::new();
        if spectral > 0.0 {
            for p in 1..=options.subharmonic_levels {
                let dfp = df / 3f64.powi(p as i32);
                let mut sigma = [0.0; 9];
                for j in -1i32..=1 {
                    for i in -1i32..=1 {
                        if i == 0 && j == 0 {
                            continue;
                        }
                        let c = (i as f64 * dfp, j as f64 * dfp);
                        sigma[((j + 1) * 3 + i + 1) as usize] =
                            weighted_cell_variance(c, dfp, spectral).sqrt();
                    }
                }
                layers.push(SubharmonicLayer {
                    sigma,
                    minus: coords.iter().map(|x| expm1_i(-TAU * dfp * x)).collect(),
                    plus: coords.iter().map(|x| expm1_i(TAU * dfp * x)).collect(),
                });
            }
        }
        let fft = FftPlanner::new().plan_fft_inverse(n);
        Ok(Self {
            options: *options,
            model: *model,
            amplitude,
            layers,
            fft,
        })
    }

    pub fn options(&self) -> &ScreenOptions {
        &self.options
    }

    pub fn ratio(&self) -> f64 {
        self.model.ratio()
    }

    /// The two independent screens of pair `pair` under `seed`.
    pub fn pair(&self, seed: u64, pair: u64) -> [Vec<f64>; 2] {
        let n = self.options.n;
        if self.model.is_turbulence_free() {
            return [vec![0.0; n * n], vec![0.0; n * n]];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(pair);
        let mut gauss = move || -> Complex64 {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        };

        let mut field: Vec<Complex64> = self.amplitude.iter().map(|&a| gauss() * a).collect();
        self.inverse_fft_2d(&mut field);

        // Subharmonics: e^{i(a+b)} − 1 = u + v + uv with u, v the 1D factors.
        let mut along_x = vec![Complex64::new(0.0, 0.0); n];
        let mut along_y = vec![Complex64::new(0.0, 0.0); n];
        let mut separable: Vec<(Vec<Complex64>, &[Complex64])> = Vec::new();
        for layer in &self.layers {
            let mut w = [Complex64::new(0.0, 0.0); 9];
            for (k, s) in layer.sigma.iter().enumerate() {
                if *s > 0.0 {
                    w[k] = gauss() * *s;
                }
            }
            let factor = |k: i32| -> Option<&[Complex64]> {
                match k {
                    -1 => Some(&layer.minus),
                    1 => Some(&layer.plus),
                    _ => None,
                }
            };
            for j in -1i32..=1 {
                let mut h = vec![Complex64::new(0.0, 0.0); n];
                for i in -1i32..=1 {
                    let wij = w[((j + 1) * 3 + i + 1) as usize];
                    if let Some(u) = factor(i) {
                        for (acc, ui) in along_x.iter_mut().zip(u) {
                            *acc += wij * ui;
                        }
                        if j != 0 {
                            for (acc, ui) in h.iter_mut().zip(u) {
                                *acc += wij * ui;
                            }
                        }
                    }
                    if let Some(v) = factor(j) {
                        for (acc, vj) in along_y.iter_mut().zip(v) {
                            *acc += wij * vj;
                        }
                    }
                }
                if let Some(v) = factor(j) {
                    separable.push((h, v));
                }
            }
        }
        for iy in 0..n {
            let row = &mut field[iy * n..(iy + 1) * n];
            for (ix, z) in row.iter_mut().enumerate() {
                let mut s = along_x[ix] + along_y[iy];
                for (h, v) in &separable {
                    s += h[ix] * v[iy];
                }
                *z += s;
            }
        }

        let count = (n * n) as f64;
        let mean = field.iter().sum::<Complex64>() / count;
        let re = field.iter().map(|z| z.re - mean.re).collect();
        let im = field.iter().map(|z| z.im - mean.im).collect();
        [re, im]
    }

    /// Screen for realization `index`: pair `index / 2`, real or imaginary part.
    pub fn realization(&self, seed: u64, index: u64) -> PhaseScreen {
        let [re, im] = self.pair(seed, index / 2);
        PhaseScreen {
            options: self.options,
            ratio: self.ratio(),
            seed,
            realization: index,
            values: if index % 2 == 0 { re } else { im },
        }
    }

    fn inverse_fft_2d(&self, data: &mut [Complex64]) {
        let n = self.options.n;
        self.fft.process(data);
        transpose(data, n);
        self.fft.process(data);
        transpose(data, n);
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in i + 1..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Single phase screen (realization 0) with default subharmonic depth.
pub fn generate_screen(
    model: &TurbulenceModel,
    n: usize,
    extent: f64,
    seed: u64,
) -> Result<PhaseScreen> {
    let generator = ScreenGenerator::new(model, &ScreenOptions::with_grid(n, extent))?;
    Ok(generator.realization(seed, 0))
}

/// Runs `map` on each realization and folds the results in index order.
/// Chunks are fixed-size, so the fold order never depends on threads.
fn ordered_fold<T, M, F>(realizations: usize, map: M, mut fold: F)
where
    T: Send,
    M: Fn(usize) -> T + Sync,
    F: FnMut(T),
{
    let mut start = 0;
    while start < realizations {
        let end = (start + CHUNK * rayon::current_num_threads().max(1)).min(realizations);
        let batch: Vec<T> = (start..end).into_par_iter().map(&map).collect();
        for item in batch {
            fold(item);
        }
        start = end;
    }
}

/// Streams screens pair by pair: realizations `2k` and `2k + 1` come from a
/// single FFT. `map` gets `(index, screen values)`.
fn fold_screens<T, M, F>(
    generator: &ScreenGenerator,
    seed: u64,
    realizations: usize,
    map: M,
    fold: F,
) where
    T: Send,
    M: Fn(usize, &[f64]) -> T + Sync,
    F: FnMut(T),
{
    let pairs = realizations.div_ceil(2);
    let mut fold = fold;
    ordered_fold(
        pairs,
        |p| {
            let [re, im] = generator.pair(seed, p as u64);
            let mut out = vec![map(2 * p, &re)];
            if 2 * p + 1 < realizations {
                out.push(map(2 * p + 1, &im));
            }
            out
        },
        |items| items.into_iter().for_each(&mut fold),
    );
}

/// Ensemble statistics of screens against the Kolmogorov targets.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreenValidation {
    pub ratio: f64,
    pub realizations: usize,
    /// Separations in `w₀` units.
    pub separations: Vec<f64>,
    pub structure: Vec<f64>,
    pub structure_target: Vec<f64>,
    pub coherence: Vec<f64>,
    pub coherence_target: Vec<f64>,
    /// Magnitude of the ensemble-mean phase, averaged over pixels.
    pub mean_phase: f64,
}

/// Relative band for the structure function.
pub const STRUCTURE_TOLERANCE: f64 = 0.10;
/// Coherence band, as a fraction of its zero-separation value of 1.
pub const COHERENCE_TOLERANCE: f64 = 0.05;

impl ScreenValidation {
    pub fn structure_errors(&self) -> Vec<f64> {
        self.structure
            .iter()
            .zip(&self.structure_target)
            .map(|(e, t)| (e - t).abs() / t)
            .collect()
    }

    pub fn coherence_errors(&self) -> Vec<f64> {
        self.coherence
            .iter()
            .zip(&self.coherence_target)
            .map(|(e, t)| (e - t).abs())
            .collect()
    }

    pub fn max_structure_error(&self) -> f64 {
        self.structure_errors().into_iter().fold(0.0, f64::max)
    }

    pub fn max_coherence_error(&self) -> f64 {
        self.coherence_errors().into_iter().fold(0.0, f64::max)
    }

    /// Error naming the first separation outside the band, if any.
    pub fn check(&self) -> Result<()> {
        let band = |k: usize| {
            let lo = if k == 0 {
                self.separations[0]
            } else {
                self.separations[k - 1]
            };
            format!("[{lo:.4}, {:.4}] w0", self.separations[k])
        };
        if let Some(k) = self
            .structure_errors()
            .iter()
            .position(|e| *e > STRUCTURE_TOLERANCE)
        {
            return Err(Error::Calibration(format!(
                "structure function off by {:.1}% in separation band {} (w0/r0 = {})",
                100.0 * self.structure_errors()[k],
                band(k),
                self.ratio
            )));
        }
        if let Some(k) = self
            .coherence_errors()
            .iter()
            .position(|e| *e > COHERENCE_TOLERANCE)
        {
            return Err(Error::Calibration(format!(
                "coherence off by {:.3} in separation band {} (w0/r0 = {})",
                self.coherence_errors()[k],
                band(k),
                self.ratio
            )));
        }
        Ok(())
    }
}

/// Pixel lags spanning `[0.1 r₀, min(2 r₀, extent/4)]`, roughly log-spaced.
fn validation_lags(model: &TurbulenceModel, options: &ScreenOptions) -> Vec<usize> {
    let r0 = model.fried_in_waists();
    let lo = 0.1 * r0 / options.spacing();
    let hi = (2.0 * r0).min(0.25 * options.extent) / options.spacing();
    if !(hi >= lo.ceil().max(1.0)) {
        return Vec::new();
    }
    let count = 10;
    let mut lags: Vec<usize> = (0..count)
        .map(|k| {
            let t = k as f64 / (count - 1) as f64;
            (lo.ln() + t * (hi.ln() - lo.ln()))
                .exp()
                .round()
                .clamp(lo.ceil().max(1.0), hi.floor()) as usize
        })
        .collect();
    lags.dedup();
    lags
}

/// Empirical structure function and coherence over an ensemble of screens.
pub fn validate_screens(
    model: &TurbulenceModel,
    options: &ScreenOptions,
    realizations: usize,
    seed: u64,
) -> Result<ScreenValidation> {
    if realizations == 0 {
        return Err(Error::invalid("need at least one realization"));
    }
    let generator = ScreenGenerator::new(model, options)?;
    let n = options.n;
    let lags = validation_lags(model, options);
    // rows and columns sampled every `stride` lines keep the cost linear in n
    let stride = (n / 128).max(1);
    let lines: Vec<usize> = (0..n).step_by(stride).collect();
    let mut sq = vec![0.0; lags.len()];
    let mut cs = vec![0.0; lags.len()];
    let mut weight = vec![0.0; lags.len()];
    let mut mean = vec![0.0; n * n];
    fold_screens(
        &generator,
        seed,
        realizations,
        |_, phi| {
            let mut s = vec![0.0; lags.len()];
            let mut c = vec![0.0; lags.len()];
            for (k, &lag) in lags.iter().enumerate() {
                for &line in &lines {
                    for a in 0..n - lag {
                        let dx = phi[line * n + a + lag] - phi[line * n + a];
                        let dy = phi[(a + lag) * n + line] - phi[a * n + line];
                        s[k] += dx * dx + dy * dy;
                        c[k] += dx.cos() + dy.cos();
                    }
                }
                let pairs = (2 * lines.len() * (n - lag)) as f64;
                s[k] /= pairs;
                c[k] /= pairs;
            }
            (s, c, phi.to_vec())
        },
        |(s, c, phi)| {
            for k in 0..lags.len() {
                sq[k] += s[k];
                cs[k] += c[k];
                weight[k] += 1.0;
            }
            for (m, p) in mean.iter_mut().zip(&phi) {
                *m += p;
            }
        },
    );
    let r = realizations as f64;
    let separations: Vec<f64> = lags.iter().map(|&l| l as f64 * options.spacing()).collect();
    Ok(ScreenValidation {
        ratio: model.ratio(),
        realizations,
        structure: sq.iter().map(|v| v / r).collect(),
        structure_target: separations
            .iter()
            .map(|&s| model.structure_function(s))
            .collect(),
        coherence: cs.iter().map(|v| v / r).collect(),
        coherence_target: separations.iter().map(|&s| model.coherence(s)).collect(),
        separations,
        mean_phase: mean.iter().map(|m| (m / r).abs()).sum::<f64>() / (n * n) as f64,
    })
}

/// Field launched through the screens.
#[derive(Debug, Clone, PartialEq)]
pub enum InputField {
    /// Fiber-mode OAM eigenmode `u_l`.
    Eigenmode(i64),
    /// Fiber mode behind a phase plate, i.e. an analyzer detection state.
    Plate(PhasePlate),
}

/// Grid geometry of the projection: pixels inside the disc `r < extent/2`.
struct ProjectionGrid {
    /// `g(r)² dA / 2π` per pixel.
    weight: Vec<f64>,
    /// `e^{-iθ}` per pixel.
    rotor: Vec<Complex64>,
    theta: Vec<f64>,
    index: Vec<usize>,
}

impl ProjectionGrid {
    fn new(options: &ScreenOptions) -> Self {
        let n = options.n;
        let radius = 0.5 * options.extent;
        let area = options.spacing() * options.spacing();
        let mut grid = ProjectionGrid {
            weight: Vec::new(),
            rotor: Vec::new(),
            theta: Vec::new(),
            index: Vec::new(),
        };
        for iy in 0..n {
            for ix in 0..n {
                let (x, y) = (options.coordinate(ix), options.coordinate(iy));
                let r = x.hypot(y);
                if r >= radius {
                    continue;
                }
                let g = fiber_mode_radial(r, 1.0);
                let theta = y.atan2(x);
                grid.weight.push(g * g * area / TAU);
                grid.rotor.push(Complex64::from_polar(1.0, -theta));
                grid.theta.push(theta);
                grid.index.push(iy * n + ix);
            }
        }
        grid
    }

    /// `Σ g² dA / 2π`: the turbulence-free norm of any fiber-mode field.
    fn norm(&self) -> f64 {
        self.weight.iter().sum::<f64>()
    }
}

/// Mean and standard error of fiber-mode populations `|⟨u_l|e^{iφ}|in⟩|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePopulations {
    pub l_min: i64,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub realizations: usize,
}

impl ModePopulations {
    pub fn get(&self, l: i64) -> Option<(f64, f64)> {
        let k = usize::try_from(l - self.l_min).ok()?;
        Some((*self.mean.get(k)?, self.stderr[k]))
    }
}

fn mean_and_stderr(sum: &[f64], sum_sq: &[f64], count: usize) -> (Vec<f64>, Vec<f64>) {
    let r = count as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / r).collect();
    let stderr = sum_sq
        .iter()
        .zip(&mean)
        .map(|(q, m)| {
            let var = ((q / r - m * m) * r / (r - 1.0)).max(0.0);
            (var / r).sqrt()
        })
        .collect();
    (mean, stderr)
}

/// Projections of the screened input onto `u_l` for `l ∈ [l_min, l_max]`,
/// one vector of `|overlap|²` per realization streamed into `fold`.
fn project_ensemble<F: FnMut(Vec<f64>)>(
    model: &TurbulenceModel,
    input: &InputField,
    l_range: (i64, i64),
    realizations: usize,
    seed: u64,
    options: &ScreenOptions,
    fold: F,
) -> Result<()> {
    let generator = ScreenGenerator::new(model, options)?;
    let grid = ProjectionGrid::new(options);
    let norm = grid.norm();
    if (norm - 1.0).abs() > 1e-3 {
        return Err(Error::Calibration(format!(
            "turbulence-free self-projection {norm} differs from 1 by more than 1e-3; refine or enlarge the grid"
        )));
    }
    let source: Vec<Complex64> = match input {
        InputField::Eigenmode(l0) => grid
            .theta
            .iter()
            .zip(&grid.weight)
            .map(|(t, w)| Complex64::from_polar(*w, *l0 as f64 * t))
            .collect(),
        InputField::Plate(plate) => grid
            .theta
            .iter()
            .zip(&grid.weight)
            .map(|(t, w)| plate.transmission(*t) * *w)
            .collect(),
    };
    let start: Vec<Complex64> = grid
        .rotor
        .iter()
        .map(|r| r.powi(l_range.0 as i32))
        .collect();
    let count = (l_range.1 - l_range.0 + 1) as usize;
    fold_screens(
        &generator,
        seed,
        realizations,
        |_, phi| {
            let mut overlaps = vec![Complex64::new(0.0, 0.0); count];
            for (p, &idx) in grid.index.iter().enumerate() {
                let z = source[p] * Complex64::from_polar(1.0, phi[idx]);
                let mut basis = start[p];
                for o in overlaps.iter_mut() {
                    *o += z * basis;
                    basis *= grid.rotor[p];
                }
            }
            overlaps.iter().map(|o| o.norm_sqr()).collect::<Vec<f64>>()
        },
        fold,
    );
    Ok(())
}

/// Monte Carlo populations of fiber modes `l ∈ [l_min, l_max]` for any input.
pub fn mc_mode_populations(
    model: &TurbulenceModel,
    input: &InputField,
    l_min: i64,
    l_max: i64,
    realizations: usize,
    seed: u64,
    options: &ScreenOptions,
) -> Result<ModePopulations> {
    if l_max < l_min {
        return Err(Error::invalid("empty mode window"));
    }
    if realizations < 2 {
        return Err(Error::invalid(
            "need at least two realizations for a standard error",
        ));
    }
    let count = (l_max - l_min + 1) as usize;
    let mut sum = vec![0.0; count];
    let mut sum_sq = vec![0.0; count];
    project_ensemble(
        model,
        input,
        (l_min, l_max),
        realizations,
        seed,
        options,
        |pops| {
            for (k, p) in pops.into_iter().enumerate() {
                sum[k] += p;
                sum_sq[k] += p * p;
            }
        },
    )?;
    let (mean, stderr) = mean_and_stderr(&sum, &sum_sq, realizations);
    Ok(ModePopulations {
        l_min,
        mean,
        stderr,
        realizations,
    })
}

/// Monte Carlo coupling table `T_Δ` for an eigenmode input `u_{l₀}`.
///
/// Each realization contributes `(|o_{l₀+Δ}|² + |o_{l₀−Δ}|²)/2`, the two
/// offsets being equal in expectation.
pub fn mc_coupling(
    model: &TurbulenceModel,
    l0: i64,
    dl_max: usize,
    realizations: usize,
    seed: u64,
    options: &ScreenOptions,
) -> Result<CouplingTable> {
    if realizations < MIN_COUPLING_REALIZATIONS {
        return Err(Error::invalid(format!(
            "Monte Carlo coupling needs ≥ {MIN_COUPLING_REALIZATIONS} realizations, got {realizations}"
        )));
    }
    let d = dl_max as i64;
    let mut sum = vec![0.0; dl_max + 1];
    let mut sum_sq = vec![0.0; dl_max + 1];
    project_ensemble(
        model,
        &InputField::Eigenmode(l0),
        (l0 - d, l0 + d),
        realizations,
        seed,
        options,
        |pops| {
            for k in 0..=dl_max {
                let t = 0.5 * (pops[dl_max + k] + pops[dl_max - k]);
                sum[k] += t;
                sum_sq[k] += t * t;
            }
        },
    )?;
    let (mean, stderr) = mean_and_stderr(&sum, &sum_sq, realizations);
    let values = mean.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(CouplingTable::from_values(model.ratio(), values)?.with_stderr(stderr))
}

/// Far-field spot radii of the fiber-mode Gaussian, in cycles per `w₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadeningEstimate {
    pub w_dl: f64,
    pub w_le: f64,
    /// Standard error of `w_le` from eight contiguous batches.
    pub w_le_stderr: f64,
    /// `|w_x − w_y| / mean` of the long-exposure spot.
    pub anisotropy: f64,
    pub warning: Option<String>,
    pub realizations: usize,
}

const BATCHES: usize = 8;

/// Anisotropy above which a warning is attached.
pub const ANISOTROPY_WARNING: f64 = 0.02;

/// Grid for the long-exposure average.
///
/// The aperture autocorrelation of the Gaussian reaches separations of
/// about `3 w₀`, where a period-8 screen already loses several percent of
/// its structure function; the default therefore samples screens over
/// `16 w₀` and propagates only the central `aperture` window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadeningOptions {
    pub screen: ScreenOptions,
    /// Side of the propagated window in `w₀` units.
    pub aperture: f64,
    /// Sampling stride of the window in screen pixels.
    pub stride: usize,
    /// Zero-padding factor of the far-field transform.
    pub padding: usize,
}

impl Default for BroadeningOptions {
    fn default() -> Self {
        Self {
            screen: ScreenOptions::with_grid(512, 16.0),
            aperture: 8.0,
            stride: 1,
            padding: 2,
        }
    }
}

impl BroadeningOptions {
    /// Propagates the whole screen.
    pub fn full(screen: ScreenOptions) -> Self {
        Self {
            screen,
            aperture: screen.extent,
            ..Self::default()
        }
    }
}

/// Far-field sampling of the aperture window. Intensities are stored in
/// transposed order, which the isotropic radius and the wedge pair ignore.
struct FarField {
    n: usize,
    offset: usize,
    stride: usize,
    decimated: usize,
    padded: usize,
    fft: Arc<dyn Fft<f64>>,
    aperture: Vec<f64>,
    df: f64,
}

#[derive(Clone, Copy)]
enum Wedge {
    All,
    /// Within 45° of the first storage axis.
    First,
    Second,
}

impl FarField {
    fn new(options: &BroadeningOptions) -> Result<Self> {
        let screen = &options.screen;
        let window = (options.aperture / screen.spacing()).round() as usize;
        let stride = options.stride;
        if !(options.aperture > 0.0) || window > screen.n || stride == 0 || window % stride != 0 {
            return Err(Error::invalid(format!(
                "aperture window {} w0 does not fit a {} w0 screen at stride {stride}",
                options.aperture, screen.extent
            )));
        }
        let decimated = window / stride;
        if decimated < 64 || options.padding < 2 {
            return Err(Error::invalid(
                "far field needs ≥ 64 samples and padding ≥ 2",
            ));
        }
        let offset = (screen.n - window) / 2;
        let padded = options.padding * decimated;
        let step = stride as f64 * screen.spacing();
        let aperture = (0..decimated * decimated)
            .map(|k| {
                let (ix, iy) = (k % decimated, k / decimated);
                let x = screen.coordinate(offset + stride * ix);
                let y = screen.coordinate(offset + stride * iy);
                (-(x * x + y * y)).exp()
            })
            .collect();
        Ok(Self {
            n: screen.n,
            offset,
            stride,
            decimated,
            padded,
            fft: FftPlanner::new().plan_fft_forward(padded),
            aperture,
            df: 1.0 / (padded as f64 * step),
        })
    }

    /// `|FFT|²` of the aperture field times `e^{iφ}`.
    fn intensity(&self, phi: Option<&[f64]>) -> Vec<f64> {
        let (m, p, n, st) = (self.decimated, self.padded, self.n, self.stride);
        let mut buf = vec![Complex64::new(0.0, 0.0); p * p];
        for iy in 0..m {
            let row = (self.offset + st * iy) * n + self.offset;
            for ix in 0..m {
                let a = self.aperture[iy * m + ix];
                let phase = phi.map_or(0.0, |s| s[row + st * ix]);
                buf[iy * p + ix] = Complex64::from_polar(a, phase);
            }
        }
        // rows first: only the first m rows are non-zero
        for row in buf.chunks_mut(p).take(m) {
            self.fft.process(row);
        }
        transpose(&mut buf, p);
        self.fft.process(&mut buf);
        buf.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Radius where the azimuthal mean over `wedge` falls to `e^{-2}` of the
    /// peak, i.e. the `1/e` radius of the far-field amplitude.
    fn radius(&self, intensity: &[f64], wedge: Wedge) -> f64 {
        let p = self.padded;
        let signed = |k: usize| {
            if k < p / 2 {
                k as f64
            } else {
                k as f64 - p as f64
            }
        };
        let bins = p / 2;
        let mut sum = vec![0.0; bins];
        let mut rad = vec![0.0; bins];
        let mut cnt = vec![0.0; bins];
        for a in 0..p {
            for b in 0..p {
                let (u, v) = (signed(b), signed(a));
                let keep = match wedge {
                    Wedge::All => true,
                    Wedge::First => u.abs() >= v.abs(),
                    Wedge::Second => v.abs() >= u.abs(),
                };
                let r = u.hypot(v);
                let k = r.round() as usize;
                if keep && k < bins {
                    sum[k] += intensity[a * p + b];
                    rad[k] += r;
                    cnt[k] += 1.0;
                }
            }
        }
        let profile: Vec<(f64, f64)> = (0..bins)
            .filter(|&k| cnt[k] > 0.0)
            .map(|k| (rad[k] / cnt[k], sum[k] / cnt[k]))
            .collect();
        self.df * crossing(&profile, profile[0].1)
    }
}

/// First radius where a sampled profile drops below `e^{-2}·peak`,
/// interpolating `ln I` linearly in `r²` (exact for a Gaussian).
fn crossing(profile: &[(f64, f64)], peak: f64) -> f64 {
    let level = peak * (-2.0f64).exp();
    for w in profile.windows(2) {
        let ((r0, i0), (r1, i1)) = (w[0], w[1]);
        if i1 < level {
            let (l0, l1) = (i0.ln(), i1.ln());
            let t = (l0 - level.ln()) / (l0 - l1);
            return (r0 * r0 + t * (r1 * r1 - r0 * r0)).sqrt();
        }
    }
    profile.last().map_or(f64::NAN, |p| p.0)
}

/// Long-exposure far-field broadening of the Gaussian mode under screens.
///
/// Radii are `1/e` radii of the far-field amplitude (`e^{-2}` of the peak
/// intensity), the convention under which `w₀` itself is defined; the
/// diffraction-limited value is `1/π` cycles per `w₀`. Anisotropy compares
/// the radii of the two 90° wedges around the grid axes.
pub fn long_exposure_broadening(
    model: &TurbulenceModel,
    realizations: usize,
    seed: u64,
    options: &BroadeningOptions,
) -> Result<BroadeningEstimate> {
    if realizations < MIN_BROADENING_REALIZATIONS {
        return Err(Error::invalid(format!(
            "long-exposure average needs ≥ {MIN_BROADENING_REALIZATIONS} realizations, got {realizations}"
        )));
    }
    let generator = ScreenGenerator::new(model, &options.screen)?;
    let far = FarField::new(options)?;
    let reference = far.intensity(None);
    let w_dl = far.radius(&reference, Wedge::All);
    let cells = far.padded * far.padded;
    let mut batches = vec![vec![0.0; cells]; BATCHES];
    let mut mean = vec![0.0; cells];
    let mut w_le_stderr = 0.0;
    if model.is_turbulence_free() {
        mean = reference;
    } else {
        fold_screens(
            &generator,
            seed,
            realizations,
            |i, phi| (i * BATCHES / realizations, far.intensity(Some(phi))),
            |(b, frame)| {
                for (m, v) in batches[b].iter_mut().zip(&frame) {
                    *m += v;
                }
            },
        );
        for batch in &batches {
            for (m, v) in mean.iter_mut().zip(batch) {
                *m += v;
            }
        }
        let radii: Vec<f64> = batches.iter().map(|b| far.radius(b, Wedge::All)).collect();
        let k = BATCHES as f64;
        let avg = radii.iter().sum::<f64>() / k;
        let var = radii.iter().map(|r| (r - avg).powi(2)).sum::<f64>() / (k - 1.0);
        w_le_stderr = (var / k).sqrt();
    }
    let w_le = far.radius(&mean, Wedge::All);
    let (wx, wy) = (
        far.radius(&mean, Wedge::First),
        far.radius(&mean, Wedge::Second),
    );
    let anisotropy = (wx - wy).abs() / (0.5 * (wx + wy));
    let warning = (anisotropy > ANISOTROPY_WARNING).then(|| {
        format!(
            "long-exposure spot anisotropy {:.2}% exceeds {:.0}%",
            100.0 * anisotropy,
            100.0 * ANISOTROPY_WARNING
        )
    });
    Ok(BroadeningEstimate {
        w_dl,
        w_le,
        w_le_stderr,
        anisotropy,
        warning,
        realizations,
    })
}
