//! Command-line front end: scenario configuration, command execution and
//! CSV emission for the `oamturb` binary.
//!
//! Scenarios are TOML files with sections; flags override file values.
//! Every command is a pure function from a [`ScenarioConfig`] to CSV text,
//! so identical invocations produce byte-identical output.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::channel::{coincidence_curve, dimensionality_scan, uniform_grid, Method, ScanOptions};
use crate::error::{Error, Result};
use crate::modes::{plate_spectrum, PhasePlate, DEFAULT_L_MAX};
use crate::scattering::{coupling_table_with, QuadratureOptions, DEFAULT_DL_MAX};
use crate::screens::{generate_screen, mc_coupling, ScreenOptions, DEFAULT_EXTENT, DEFAULT_GRID};
use crate::turbulence::{
    link_distance_for_ratio, link_ratio, LinkBudget, LinkEstimate, TurbulenceModel,
};

/// Named phase-plate layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlatePreset {
    Quadrant,
    Half,
    Uniform,
}

/// One sector of a custom plate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectorConfig {
    /// Sector start angle in degrees.
    pub start_deg: f64,
    /// Phase imprinted on the sector in radians.
    pub phase_rad: f64,
}

/// Either a preset (optionally with a non-ideal phase step) or a sector
/// list; a section naming neither means the quadrant preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateConfig {
    #[serde(default)]
    pub preset: Option<PlatePreset>,
    /// Phase step between adjacent preset sectors, radians.
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub sectors: Option<Vec<SectorConfig>>,
}

impl Default for PlateConfig {
    fn default() -> Self {
        Self {
            preset: Some(PlatePreset::Quadrant),
            step: None,
            sectors: None,
        }
    }
}

impl PlateConfig {
    pub fn build(&self) -> Result<PhasePlate> {
        match (&self.preset, &self.sectors) {
            (Some(_), Some(_)) => Err(Error::Config(
                "plate: give either `preset` or `sectors`, not both".into(),
            )),
            (None, None) => Self {
                preset: Some(PlatePreset::Quadrant),
                ..self.clone()
            }
            .build(),
            (None, Some(sectors)) => {
                if self.step.is_some() {
                    return Err(Error::Config(
                        "plate: `step` applies to presets only".into(),
                    ));
                }
                let list: Vec<(f64, f64)> =
                    sectors.iter().map(|s| (s.start_deg, s.phase_rad)).collect();
                PhasePlate::from_degrees(&list)
            }
            (Some(preset), None) => Ok(match (preset, self.step) {
                (PlatePreset::Quadrant, None) => PhasePlate::quadrant(),
                (PlatePreset::Quadrant, Some(s)) => PhasePlate::quadrant_with_step(s),
                (PlatePreset::Half, None) => PhasePlate::half(),
                (PlatePreset::Half, Some(s)) => PhasePlate::half_with_step(s),
                (PlatePreset::Uniform, None) => PhasePlate::uniform(),
                (PlatePreset::Uniform, Some(_)) => {
                    return Err(Error::Config("plate: the uniform plate has no step".into()))
                }
            }),
        }
    }

    pub fn label(&self) -> String {
        match (
            self.preset
                .or(self.sectors.is_none().then_some(PlatePreset::Quadrant)),
            self.step,
        ) {
            (Some(p), None) => preset_name(p).into(),
            (Some(p), Some(s)) => format!("{}(step={})", preset_name(p), format_number(s)),
            (None, None) => "sectors".into(),
            (None, Some(s)) => format!("quadrant(step={})", format_number(s)),
        }
    }

    /// Parses the `--plate` flag: a preset name or
    /// `sectors:START_DEG@PHASE_RAD,START_DEG@PHASE_RAD,...`.
    pub fn from_flag(flag: &str) -> Result<Self> {
        let preset = match flag {
            "quadrant" => Some(PlatePreset::Quadrant),
            "half" => Some(PlatePreset::Half),
            "uniform" => Some(PlatePreset::Uniform),
            _ => None,
        };
        if let Some(p) = preset {
            return Ok(Self {
                preset: Some(p),
                ..Self::default()
            });
        }
        let list = flag.strip_prefix("sectors:").ok_or_else(|| {
            Error::Config(format!(
                "unknown plate {flag:?}; use quadrant, half, uniform or sectors:DEG@RAD,..."
            ))
        })?;
        let sectors = list
            .split(',')
            .map(|item| {
                let (deg, phase) = item.split_once('@').ok_or_else(|| {
                    Error::Config(format!("sector {item:?} must be START_DEG@PHASE_RAD"))
                })?;
                Ok(SectorConfig {
                    start_deg: parse_f64(deg, "sector start")?,
                    phase_rad: parse_f64(phase, "sector phase")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            preset: None,
            step: None,
            sectors: Some(sectors),
        })
    }
}

fn preset_name(p: PlatePreset) -> &'static str {
    match p {
        PlatePreset::Quadrant => "quadrant",
        PlatePreset::Half => "half",
        PlatePreset::Uniform => "uniform",
    }
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{what}: {s:?} is not a number")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TurbulenceConfig {
    /// Values of `w₀/r₀`, ascending.
    pub ratios: Vec<f64>,
}

impl Default for TurbulenceConfig {
    fn default() -> Self {
        Self { ratios: vec![0.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruncationConfig {
    pub l_max: i64,
    pub dl_max: usize,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self {
            l_max: DEFAULT_L_MAX,
            dl_max: DEFAULT_DL_MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureConfig {
    pub radial_nodes: usize,
    pub radial_extent: f64,
    pub angular_uniform_panels: usize,
    pub angular_graded_panels: usize,
    pub angular_order: usize,
    pub convergence_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        let q = QuadratureOptions::default();
        Self {
            radial_nodes: q.radial_nodes,
            radial_extent: q.radial_extent,
            angular_uniform_panels: q.angular_uniform_panels,
            angular_graded_panels: q.angular_graded_panels,
            angular_order: q.angular_order,
            convergence_tol: q.convergence_tol,
        }
    }
}

impl QuadratureConfig {
    pub fn options(&self) -> QuadratureOptions {
        QuadratureOptions {
            radial_nodes: self.radial_nodes,
            radial_extent: self.radial_extent,
            angular_uniform_panels: self.angular_uniform_panels,
            angular_graded_panels: self.angular_graded_panels,
            angular_order: self.angular_order,
            convergence_tol: self.convergence_tol,
            check_convergence: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Points of the uniform `δ` grid on `[−π, π]`.
    pub points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            points: crate::channel::DEFAULT_GRID_POINTS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloConfig {
    pub enabled: bool,
    pub realizations: usize,
    pub seed: u64,
    /// Input eigenmode of the coupling oracle.
    pub l0: i64,
    pub n: usize,
    pub extent: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            realizations: 2000,
            seed: 1,
            l0: 0,
            n: DEFAULT_GRID,
            extent: DEFAULT_EXTENT,
        }
    }
}

impl MonteCarloConfig {
    fn screen_options(&self) -> ScreenOptions {
        ScreenOptions::with_grid(self.n, self.extent)
    }
}

/// Horizontal link, SI units. Either `distance` (forward) or `ratio`
/// (inverse) selects the query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkConfig {
    pub wavelength: f64,
    pub cn2: f64,
    pub waist: f64,
    pub distance: Option<f64>,
    pub ratio: Option<f64>,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            wavelength: 1550e-9,
            cn2: 1e-14,
            waist: 0.06,
            distance: None,
            ratio: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
}

/// Everything a command needs, as read from a scenario file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub plate: PlateConfig,
    pub turbulence: TurbulenceConfig,
    pub truncation: TruncationConfig,
    pub quadrature: QuadratureConfig,
    pub grid: GridConfig,
    pub monte_carlo: MonteCarloConfig,
    pub link: LinkConfig,
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| with_path(e, path))?;
        Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
    }

    fn single_ratio(&self, command: &str) -> Result<f64> {
        match self.turbulence.ratios.as_slice() {
            [r] => Ok(*r),
            other => Err(Error::Config(format!(
                "{command} takes exactly one ratio, got {}",
                other.len()
            ))),
        }
    }

    fn spectrum(&self) -> Result<crate::modes::AngularSpectrum> {
        plate_spectrum(&self.plate.build()?, self.truncation.l_max)
    }
}

impl Error {
    fn message(&self) -> String {
        match self {
            Error::Config(m) => m.clone(),
            other => other.to_string(),
        }
    }
}

/// CSV number format: `%.9g` with at least one fractional digit, so
/// `0.25`, `1.0`, `0.0`, `1.5e-07`, `-3.0e+09`.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0.0".into();
    }
    const DIGITS: usize = 9;
    let sci = format!("{:.*e}", DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: String| -> String {
        if let Some(dot) = s.find('.') {
            let t = s.trim_end_matches('0');
            if t.len() == dot + 1 {
                format!("{t}0")
            } else {
                t.to_string()
            }
        } else {
            format!("{s}.0")
        }
    };
    if (-5..DIGITS as i32).contains(&exp) {
        let decimals = (DIGITS as i32 - 1 - exp).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa.to_string()), exp.abs())
    }
}

fn csv_row(out: &mut String, cells: &[String]) {
    out.push_str(&cells.join(","));
    out.push('\n');
}

/// `l,lambda_l` for every `l` in `[−l_max, l_max]`.
pub fn cmd_spectrum(config: &ScenarioConfig) -> Result<String> {
    let spectrum = config.spectrum()?;
    let mut out = String::from("l,lambda_l\n");
    let l_max = config.truncation.l_max;
    for l in -l_max..=l_max {
        csv_row(
            &mut out,
            &[l.to_string(), format_number(spectrum.weight(l))],
        );
    }
    Ok(out)
}

/// `delta,T` (analytic) or `delta,T,stderr` (Monte Carlo) for `Δ = 0..=dl_max`.
pub fn cmd_coupling(config: &ScenarioConfig) -> Result<String> {
    let model = TurbulenceModel::new(config.single_ratio("coupling")?)?;
    let dl_max = config.truncation.dl_max;
    let mc = &config.monte_carlo;
    let table = if mc.enabled {
        mc_coupling(
            &model,
            mc.l0,
            dl_max,
            mc.realizations,
            mc.seed,
            &mc.screen_options(),
        )?
    } else {
        coupling_table_with(&model, dl_max, &config.quadrature.options())?
    };
    let mut out = String::new();
    match table.stderr() {
        Some(se) => {
            out.push_str("delta,T,stderr\n");
            for (d, (t, e)) in table.values().iter().zip(se).enumerate() {
                csv_row(
                    &mut out,
                    &[d.to_string(), format_number(*t), format_number(*e)],
                );
            }
        }
        None => {
            out.push_str("delta,T\n");
            for (d, t) in table.values().iter().enumerate() {
                csv_row(&mut out, &[d.to_string(), format_number(*t)]);
            }
        }
    }
    Ok(out)
}

fn table_for(config: &ScenarioConfig, ratio: f64) -> Result<crate::scattering::CouplingTable> {
    coupling_table_with(
        &TurbulenceModel::new(ratio)?,
        config.truncation.dl_max,
        &config.quadrature.options(),
    )
}

/// `delta_rad,P` on the configured grid.
pub fn cmd_coincidence(config: &ScenarioConfig) -> Result<String> {
    let spectrum = config.spectrum()?;
    let table = table_for(config, config.single_ratio("coincidence")?)?;
    let curve = coincidence_curve(&spectrum, &table, &uniform_grid(config.grid.points))?;
    let mut out = String::from("delta_rad,P\n");
    for (d, p) in curve.deltas.iter().zip(&curve.values) {
        csv_row(&mut out, &[format_number(*d), format_number(*p)]);
    }
    Ok(out)
}

/// `ratio,D_operator,D_curve,purity`; a column not requested by the method
/// is left empty.
pub fn cmd_dimensionality(config: &ScenarioConfig, method: Method) -> Result<String> {
    let spectrum = config.spectrum()?;
    let opts = ScanOptions {
        dl_max: config.truncation.dl_max,
        quadrature: config.quadrature.options(),
        grid: uniform_grid(config.grid.points),
        plate_label: config.plate.label(),
        ..ScanOptions::default()
    };
    let reports = dimensionality_scan(&spectrum, &config.turbulence.ratios, method, &opts)?;
    let mut out = String::from("ratio,D_operator,D_curve,purity\n");
    let cell = |v: Option<f64>| v.map(format_number).unwrap_or_default();
    for r in reports {
        csv_row(
            &mut out,
            &[
                format_number(r.ratio),
                cell(r.d_operator),
                cell(r.d_curve),
                format_number(r.purity),
            ],
        );
    }
    Ok(out)
}

/// Link report as a one-row CSV.
pub fn cmd_link(config: &ScenarioConfig) -> Result<String> {
    let link = &config.link;
    let estimate: LinkEstimate = match (link.distance, link.ratio) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "link: give either a distance or a ratio, not both".into(),
            ))
        }
        (Some(distance), None) => link_ratio(&LinkBudget::new(
            link.wavelength,
            link.cn2,
            link.waist,
            distance,
        )?),
        (None, Some(ratio)) => {
            link_distance_for_ratio(link.wavelength, link.cn2, link.waist, ratio)?
        }
        (None, None) => return Err(Error::Config("link: need a distance or a ratio".into())),
    };
    let mut out = String::from("wavelength,cn2,w0,r0,distance,ratio,rayleigh_range,near_field\n");
    csv_row(
        &mut out,
        &[
            format_number(link.wavelength),
            format_number(link.cn2),
            format_number(link.waist),
            format_number(estimate.fried),
            format_number(estimate.distance),
            format_number(estimate.ratio),
            format_number(estimate.rayleigh_range),
            estimate.valid.to_string(),
        ],
    );
    Ok(out)
}

const AFTER_HELP: &str = "\
Output:
  CSV with a header row, to standard output or --out. Numbers use 9
  significant digits (%.9g) with at least one fractional digit: 0.25, 1.0,
  0.0, 1.5e-07.

Configuration:
  --config reads a TOML scenario with sections [plate], [turbulence],
  [truncation], [quadrature], [grid], [monte_carlo], [link], [output].
  Unknown keys are rejected. Flags override file values.

Exit codes:
  0 success, 2 usage or configuration error, 3 numerical failure, 4 I/O error.";

#[derive(Debug, Parser)]
#[command(name = "oamturb", version, about = "OAM entanglement through Kolmogorov turbulence", after_help = AFTER_HELP)]
struct Cli {
    /// TOML scenario file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Plate: quadrant, half, uniform or sectors:DEG@RAD,DEG@RAD,...
    #[arg(long, global = true)]
    plate: Option<String>,
    /// Phase step of the plate preset in radians (what-if studies).
    #[arg(long, global = true, allow_hyphen_values = true)]
    step: Option<f64>,
    /// Single turbulence strength w0/r0.
    #[arg(long, global = true, allow_hyphen_values = true)]
    ratio: Option<f64>,
    /// OAM truncation of the plate spectrum.
    #[arg(long = "l-max", global = true)]
    l_max: Option<i64>,
    /// Largest coupling offset.
    #[arg(long = "dl-max", global = true)]
    dl_max: Option<usize>,
    /// Output file instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Plate OAM spectrum: l,lambda_l
    Spectrum,
    /// Coupling table: delta,T[,stderr]
    Coupling(CouplingArgs),
    /// Coincidence curve: delta_rad,P
    Coincidence,
    /// Dimensionality scan: ratio,D_operator,D_curve,purity
    Dimensionality(DimensionalityArgs),
    /// Link budget: r0, distance or ratio, Rayleigh range, validity
    Link(LinkArgs),
    /// Dump one phase screen as raw little-endian f64 plus a .hdr sidecar
    Screen(ScreenArgs),
    /// Print the effective scenario as TOML
    Config,
}

#[derive(Debug, Args)]
struct MonteCarloArgs {
    /// Realizations of the Monte Carlo oracle.
    #[arg(long)]
    realizations: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct CouplingArgs {
    /// Estimate with phase screens instead of quadrature.
    #[arg(long)]
    mc: bool,
    #[command(flatten)]
    monte_carlo: MonteCarloArgs,
    /// Input eigenmode of the Monte Carlo estimate.
    #[arg(long, allow_hyphen_values = true)]
    l0: Option<i64>,
}

#[derive(Debug, Args)]
struct DimensionalityArgs {
    /// Ratio range a:b:step, inclusive.
    #[arg(long)]
    ratios: Option<String>,
    /// operator, curve or both.
    #[arg(long, default_value = "both")]
    method: String,
}

#[derive(Debug, Args)]
struct LinkArgs {
    /// Wavelength in meters.
    #[arg(long)]
    wavelength: Option<f64>,
    /// Refractive-index structure constant in m^(-2/3).
    #[arg(long)]
    cn2: Option<f64>,
    /// Beam radius w0 in meters.
    #[arg(long)]
    w0: Option<f64>,
    /// Propagation distance in meters (forward query).
    #[arg(long)]
    distance: Option<f64>,
}

#[derive(Debug, Args)]
struct ScreenArgs {
    #[command(flatten)]
    monte_carlo: MonteCarloArgs,
}

/// Parses `a:b:step` into an inclusive ascending list.
pub fn parse_ratio_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, step] = parts.as_slice() else {
        return Err(Error::Config(format!("--ratios {spec:?} must be a:b:step")));
    };
    let (a, b, step) = (
        parse_f64(a, "ratio start")?,
        parse_f64(b, "ratio end")?,
        parse_f64(step, "ratio step")?,
    );
    if !(step > 0.0) || b < a {
        return Err(Error::Config(format!(
            "--ratios {spec:?} needs b ≥ a and step > 0"
        )));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| a + k as f64 * step).collect())
}

fn apply_flags(cli: &Cli) -> Result<ScenarioConfig> {
    let mut config = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(p) = &cli.plate {
        config.plate = PlateConfig::from_flag(p)?;
    }
    if let Some(s) = cli.step {
        config.plate.step = Some(s);
    }
    if let Some(r) = cli.ratio {
        config.turbulence.ratios = vec![r];
        config.link.ratio = Some(r);
    }
    if let Some(l) = cli.l_max {
        config.truncation.l_max = l;
    }
    if let Some(d) = cli.dl_max {
        config.truncation.dl_max = d;
    }
    if let Some(o) = &cli.out {
        config.output.path = Some(o.clone());
    }
    let mc = |config: &mut ScenarioConfig, args: &MonteCarloArgs| {
        if let Some(r) = args.realizations {
            config.monte_carlo.realizations = r;
        }
        if let Some(s) = args.seed {
            config.monte_carlo.seed = s;
        }
    };
    match &cli.command {
        Command::Coupling(args) => {
            config.monte_carlo.enabled |= args.mc;
            mc(&mut config, &args.monte_carlo);
            if let Some(l0) = args.l0 {
                config.monte_carlo.l0 = l0;
            }
        }
        Command::Dimensionality(args) => {
            if let Some(r) = &args.ratios {
                config.turbulence.ratios = parse_ratio_range(r)?;
            }
        }
        Command::Link(args) => {
            let link = &mut config.link;
            link.wavelength = args.wavelength.unwrap_or(link.wavelength);
            link.cn2 = args.cn2.unwrap_or(link.cn2);
            link.waist = args.w0.unwrap_or(link.waist);
            if let Some(d) = args.distance {
                link.distance = Some(d);
                if cli.ratio.is_none() {
                    link.ratio = None;
                }
            }
        }
        Command::Screen(args) => mc(&mut config, &args.monte_carlo),
        Command::Spectrum | Command::Coincidence | Command::Config => {}
    }
    if config.truncation.l_max < 0 {
        return Err(Error::Config("l_max must be ≥ 0".into()));
    }
    Ok(config)
}

fn execute(cli: &Cli, config: &ScenarioConfig) -> Result<Option<String>> {
    Ok(Some(match &cli.command {
        Command::Spectrum => cmd_spectrum(config)?,
        Command::Coupling(_) => cmd_coupling(config)?,
        Command::Coincidence => cmd_coincidence(config)?,
        Command::Dimensionality(args) => {
            let method: Method = args
                .method
                .parse()
                .map_err(|e: Error| Error::Config(e.to_string()))?;
            cmd_dimensionality(config, method)?
        }
        Command::Link(_) => cmd_link(config)?,
        Command::Config => config.to_toml()?,
        Command::Screen(_) => {
            let path = config
                .output
                .path
                .clone()
                .ok_or_else(|| Error::Config("screen needs --out for the raw dump".into()))?;
            let mc = &config.monte_carlo;
            let screen = generate_screen(
                &TurbulenceModel::new(config.single_ratio("screen")?)?,
                mc.n,
                mc.extent,
                mc.seed,
            )?;
            screen.write_raw(&path).map_err(|e| match e {
                Error::Io(io) => with_path(io, &path),
                other => other,
            })?;
            return Ok(None);
        }
    }))
}

fn with_path(e: std::io::Error, path: &std::path::Path) -> Error {
    Error::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

/// Exit code for an error: 2 usage/config, 3 numerical, 4 I/O.
pub fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Invalid(_) | Error::Config(_) => 2,
        Error::Domain(_) | Error::Convergence { .. } | Error::Calibration(_) => 3,
        Error::Io(_) => 4,
    }
}

/// Runs the command line `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = sink.write_all(text.as_bytes());
            return code;
        }
    };
    let result = apply_flags(&cli).and_then(|config| {
        let text = execute(&cli, &config)?;
        match (text, &config.output.path) {
            (Some(t), Some(path)) if !matches!(cli.command, Command::Screen(_)) => {
                std::fs::write(path, t).map_err(|e| with_path(e, path))?;
            }
            (Some(t), _) => stdout.write_all(t.as_bytes())?,
            (None, _) => {}
        }
        Ok(())
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            let mut msg = String::new();
            let _ = writeln!(msg, "oamturb: {e}");
            let _ = stderr.write_all(msg.as_bytes());
            exit_code(&e)
        }
    }
}
