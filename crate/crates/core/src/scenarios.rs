//! Experiment pipelines driven by a TOML configuration: transmittance
//! spectra, visibility sweeps, polarization maps and the monomode channel.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Matrix4;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::film::{FilmError, FilmModel, ResonanceFamily};
use crate::jones::{JonesMatrix, JonesVector};
use crate::optics::{
    FieldMap, GridSpec, OpticsError, Quadrature, QuadratureScheme, SetupParams, TransferMap,
};
use crate::quantum::{
    concurrence, postselect_channel, visibility_map, visibility_state, DetectorWeights, GramMatrix,
    PostselectedState, QuantumError,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize configuration: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error(transparent)]
    Film(#[from] FilmError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl ScenarioError {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        match self {
            ScenarioError::Optics(e) => matches!(
                e,
                OpticsError::Convergence { .. } | OpticsError::StationaryPointOutside { .. }
            ),
            ScenarioError::Quantum(e) => matches!(e, QuantumError::UndefinedVisibility),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ScenarioError + '_ {
    move |source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Fixed scientific notation with 9 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.8e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Spectrum,
    VisibilitySweep,
    Polmap,
    Channel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SetupConfig {
    pub wavelength_nm: f64,
    pub focal_length_mm: f64,
    pub substrate_index: f64,
    pub substrate_thickness_mm: f64,
    pub semiaperture_deg: f64,
}

impl Default for SetupConfig {
    fn default() -> Self {
        Self {
            wavelength_nm: 797.0,
            focal_length_mm: 15.0,
            substrate_index: 1.52,
            substrate_thickness_mm: 0.5,
            semiaperture_deg: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrderSet {
    /// `"diagonal"` or `"axial"`.
    Named(String),
    Explicit(Vec<[i32; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub orders: OrderSet,
    pub lambda0_nm: f64,
    pub width_nm: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase_deg: f64,
}

impl FamilyConfig {
    pub fn build(&self) -> Result<ResonanceFamily> {
        let amp = Complex64::from_polar(self.amplitude, self.phase_deg.to_radians());
        let fam = match &self.orders {
            OrderSet::Named(name) => match name.as_str() {
                "diagonal" => ResonanceFamily::diagonal(self.lambda0_nm, self.width_nm, amp)?,
                "axial" => ResonanceFamily::axial(self.lambda0_nm, self.width_nm, amp)?,
                other => {
                    return Err(ScenarioError::Config(format!(
                        "unknown order set '{other}' (expected diagonal or axial)"
                    )))
                }
            },
            OrderSet::Explicit(list) => ResonanceFamily::new(
                list.iter().map(|m| (m[0], m[1])).collect(),
                self.lambda0_nm,
                self.width_nm,
                amp,
            )?,
        };
        Ok(fam)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilmConfig {
    pub period_nm: f64,
    /// `[re, im]`.
    pub direct_amplitude: [f64; 2],
    pub thickness_nm: f64,
    pub hole_diameter_nm: f64,
    /// CSV table replacing the analytic model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tabulated: Option<PathBuf>,
    pub families: Vec<FamilyConfig>,
}

impl Default for FilmConfig {
    fn default() -> Self {
        let film = FilmModel::calibrated();
        let families = film
            .families()
            .iter()
            .zip(["diagonal", "axial"])
            .map(|(f, name)| FamilyConfig {
                orders: OrderSet::Named(name.into()),
                lambda0_nm: f.lambda0_nm(),
                width_nm: f.width_nm(),
                amplitude: f.amplitude().norm(),
                phase_deg: round_deg(f.amplitude().arg().to_degrees()),
            })
            .collect();
        Self {
            period_nm: film.period_nm(),
            direct_amplitude: [film.direct_amplitude().re, film.direct_amplitude().im],
            thickness_nm: film.thickness_nm,
            hole_diameter_nm: film.hole_diameter_nm,
            tabulated: None,
            families,
        }
    }
}

fn round_deg(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

impl FilmConfig {
    pub fn build(&self) -> Result<FilmModel> {
        let mut film = match &self.tabulated {
            Some(path) => FilmModel::load_tabulated(path, self.period_nm)?,
            None => {
                let families = self
                    .families
                    .iter()
                    .map(FamilyConfig::build)
                    .collect::<Result<Vec<_>>>()?;
                FilmModel::new(
                    self.period_nm,
                    Complex64::new(self.direct_amplitude[0], self.direct_amplitude[1]),
                    families,
                )?
            }
        };
        film.thickness_nm = self.thickness_nm;
        film.hole_diameter_nm = self.hole_diameter_nm;
        Ok(film)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeConfig {
    Polar,
    Cartesian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuadratureConfig {
    pub scheme: SchemeConfig,
    pub refine: u32,
    pub tolerance: f64,
    pub check_convergence: bool,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        let q = Quadrature::default();
        Self {
            scheme: SchemeConfig::Polar,
            refine: q.refine,
            tolerance: q.tolerance,
            check_convergence: q.check_convergence,
        }
    }
}

impl QuadratureConfig {
    pub fn build(&self) -> Quadrature {
        Quadrature {
            scheme: match self.scheme {
                SchemeConfig::Polar => QuadratureScheme::Polar,
                SchemeConfig::Cartesian => QuadratureScheme::Cartesian,
            },
            refine: self.refine,
            tolerance: self.tolerance,
            check_convergence: self.check_convergence,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub lambda_min_nm: f64,
    pub lambda_max_nm: f64,
    pub lambda_step_nm: f64,
    pub tilts_deg: Vec<f64>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            lambda_min_nm: 650.0,
            lambda_max_nm: 900.0,
            lambda_step_nm: 0.1,
            tilts_deg: (0..=6).map(f64::from).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisibilityConfig {
    pub semiaperture_min_deg: f64,
    pub semiaperture_max_deg: f64,
    pub semiaperture_step_deg: f64,
    pub beta2_deg: Vec<f64>,
    pub wavelengths_nm: Vec<f64>,
    pub grid_points: usize,
    /// Detector iris radius as an angle `θ₃`; absent for a bucket detector.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iris_deg: Option<f64>,
}

impl Default for VisibilityConfig {
    fn default() -> Self {
        Self {
            semiaperture_min_deg: 0.0,
            semiaperture_max_deg: 10.0,
            semiaperture_step_deg: 0.5,
            beta2_deg: vec![0.0, 45.0],
            wavelengths_nm: vec![797.0, 728.0],
            grid_points: GridSpec::default().points,
            iris_deg: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolmapConfig {
    pub input_pol_deg: f64,
    pub grid_points: usize,
    /// Half-extent of the map as `θ₃`; absent for `θ_ap / M`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_extent_deg: Option<f64>,
    pub stem: String,
}

impl Default for PolmapConfig {
    fn default() -> Self {
        Self {
            input_pol_deg: -45.0,
            grid_points: GridSpec::default().points,
            half_extent_deg: None,
            stem: "polmap".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GramConfig {
    /// `"identical"` or `"orthogonal"`.
    Named(String),
    /// Common real overlap between distinct solid states.
    Coherence(f64),
    /// Full 4×4 matrix of `[re, im]` pairs in `xx, yx, xy, yy` order.
    Full(Vec<Vec<[f64; 2]>>),
}

impl GramConfig {
    pub fn build(&self) -> Result<GramMatrix> {
        Ok(match self {
            GramConfig::Named(n) => match n.as_str() {
                "identical" => GramMatrix::identical(),
                "orthogonal" => GramMatrix::orthogonal(),
                other => {
                    return Err(ScenarioError::Config(format!(
                        "unknown Gram matrix '{other}' (expected identical or orthogonal)"
                    )))
                }
            },
            GramConfig::Coherence(c) => GramMatrix::uniform(*c)?,
            GramConfig::Full(rows) => {
                if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
                    return Err(ScenarioError::Config("Gram matrix must be 4x4".into()));
                }
                GramMatrix::new(Matrix4::from_fn(|i, j| {
                    Complex64::new(rows[i][j][0], rows[i][j][1])
                }))?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// `[re, im]` pairs.
    pub t_xx: [f64; 2],
    pub t_xy: [f64; 2],
    pub t_yx: [f64; 2],
    pub t_yy: [f64; 2],
    pub gram: GramConfig,
    pub beta2_deg: Vec<f64>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            t_xx: [1.0, 0.0],
            t_xy: [0.0, 0.0],
            t_yx: [0.0, 0.0],
            t_yy: [1.0, 0.0],
            gram: GramConfig::Named("identical".into()),
            beta2_deg: vec![0.0, 45.0],
        }
    }
}

impl ChannelConfig {
    pub fn t_matrix(&self) -> JonesMatrix {
        let c = |v: [f64; 2]| Complex64::new(v[0], v[1]);
        JonesMatrix::new(c(self.t_xx), c(self.t_xy), c(self.t_yx), c(self.t_yy))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub output_dir: PathBuf,
    pub setup: SetupConfig,
    pub film: FilmConfig,
    pub quadrature: QuadratureConfig,
    pub spectrum: SpectrumConfig,
    pub visibility: VisibilityConfig,
    pub polmap: PolmapConfig,
    pub channel: ChannelConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::VisibilitySweep,
            output_dir: PathBuf::from("out"),
            setup: SetupConfig::default(),
            film: FilmConfig::default(),
            quadrature: QuadratureConfig::default(),
            spectrum: SpectrumConfig::default(),
            visibility: VisibilityConfig::default(),
            polmap: PolmapConfig::default(),
            channel: ChannelConfig::default(),
        }
    }
}

pub const PRESETS: [&str; 7] = [
    "paper_defaults",
    "fig2",
    "fig3",
    "fig4",
    "fig4b",
    "case_i",
    "case_ii",
];

fn range_ok(lo: f64, hi: f64, step: f64) -> bool {
    lo.is_finite() && hi.is_finite() && lo <= hi && step > 0.0 && step.is_finite()
}

/// `lo, lo + step, …` up to `hi` inclusive (with a small tolerance).
pub fn inclusive_range(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

impl ScenarioConfig {
    pub fn preset(name: &str) -> Option<Self> {
        let base = Self::default();
        let cfg = match name {
            "paper_defaults" | "fig3" => base,
            "fig2" => Self {
                kind: ScenarioKind::Spectrum,
                ..base
            },
            "fig4" => Self {
                kind: ScenarioKind::Polmap,
                polmap: PolmapConfig {
                    input_pol_deg: -45.0,
                    stem: "fig4_m45".into(),
                    ..PolmapConfig::default()
                },
                ..base
            },
            "fig4b" => Self {
                kind: ScenarioKind::Polmap,
                polmap: PolmapConfig {
                    input_pol_deg: 90.0,
                    stem: "fig4_90".into(),
                    ..PolmapConfig::default()
                },
                ..base
            },
            "case_i" => Self {
                kind: ScenarioKind::Channel,
                channel: ChannelConfig {
                    gram: GramConfig::Named("orthogonal".into()),
                    ..ChannelConfig::default()
                },
                ..base
            },
            "case_ii" => Self {
                kind: ScenarioKind::Channel,
                ..base
            },
            _ => return None,
        };
        Some(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Loads a preset by name, or else a TOML file.
    pub fn load(name_or_path: &str) -> Result<Self> {
        if let Some(cfg) = Self::preset(name_or_path) {
            return Ok(cfg);
        }
        let path = Path::new(name_or_path);
        if !path.exists() {
            return Err(ScenarioError::Config(format!(
                "'{name_or_path}' is neither a file nor a preset ({})",
                PRESETS.join(", ")
            )));
        }
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ScenarioError::Config(m));
        let s = &self.spectrum;
        if !range_ok(s.lambda_min_nm, s.lambda_max_nm, s.lambda_step_nm) || s.lambda_min_nm <= 0.0 {
            return bad(
                "spectrum wavelength range must satisfy 0 < min <= max with step > 0".into(),
            );
        }
        if s.tilts_deg.is_empty() || s.tilts_deg.iter().any(|t| !t.is_finite()) {
            return bad("spectrum.tilts_deg must be a nonempty list of finite angles".into());
        }
        let v = &self.visibility;
        if !range_ok(
            v.semiaperture_min_deg,
            v.semiaperture_max_deg,
            v.semiaperture_step_deg,
        ) || v.semiaperture_min_deg < 0.0
        {
            return bad(
                "visibility semiaperture range must satisfy 0 <= min <= max with step > 0".into(),
            );
        }
        if v.beta2_deg.is_empty() || v.wavelengths_nm.is_empty() {
            return bad(
                "visibility.beta2_deg and visibility.wavelengths_nm must be nonempty".into(),
            );
        }
        if v.grid_points == 0 || self.polmap.grid_points == 0 {
            return bad("grid_points must be positive".into());
        }
        if let Some(r) = v.iris_deg {
            if !(r > 0.0) {
                return bad(format!("visibility.iris_deg must be positive, got {r}"));
            }
        }
        if self.channel.beta2_deg.is_empty() {
            return bad("channel.beta2_deg must be nonempty".into());
        }
        self.channel.gram.build()?;
        if !(self.quadrature.tolerance > 0.0) {
            return bad("quadrature.tolerance must be positive".into());
        }
        if self.polmap.stem.is_empty() || self.polmap.stem.contains(['/', '\\']) {
            return bad("polmap.stem must be a plain file stem".into());
        }
        self.setup_params()?.validate()?;
        for lambda in &v.wavelengths_nm {
            self.setup_at(*lambda, self.setup.semiaperture_deg)?
                .validate()?;
        }
        self.setup_at(self.setup.wavelength_nm, v.semiaperture_max_deg)?
            .validate()?;
        Ok(())
    }

    pub fn setup_params(&self) -> Result<SetupParams> {
        self.setup_at(self.setup.wavelength_nm, self.setup.semiaperture_deg)
    }

    fn setup_at(&self, wavelength_nm: f64, semiaperture_deg: f64) -> Result<SetupParams> {
        Ok(SetupParams {
            wavelength_nm,
            focal_length_nm: self.setup.focal_length_mm * 1e6,
            substrate_index: self.setup.substrate_index,
            substrate_thickness_nm: self.setup.substrate_thickness_mm * 1e6,
            semiaperture_rad: semiaperture_deg.to_radians(),
            film: self.film.build()?,
        })
    }
}

/// Numeric table with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.headers.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|x| fmt_num(*x)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
        fs::write(path, self.to_csv()).map_err(io_err(path))
    }
}

/// Incident polarizations for the spectrum scenario, relative to the
/// lattice diagonal along which the tilt moves `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagonalPol {
    Perpendicular,
    Parallel,
}

impl DiagonalPol {
    pub const ALL: [DiagonalPol; 2] = [DiagonalPol::Perpendicular, DiagonalPol::Parallel];

    pub fn vector(&self) -> JonesVector {
        match self {
            DiagonalPol::Perpendicular => JonesVector::real(FRAC_1_SQRT_2, -FRAC_1_SQRT_2),
            DiagonalPol::Parallel => JonesVector::real(FRAC_1_SQRT_2, FRAC_1_SQRT_2),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DiagonalPol::Perpendicular => "perp",
            DiagonalPol::Parallel => "par",
        }
    }
}

/// In-plane wavevector of a plane wave tilted by `tilt` along the (1, 1)
/// lattice diagonal.
pub fn tilt_wavevector(tilt_rad: f64, lambda_nm: f64) -> (f64, f64) {
    let q = 2.0 * PI / lambda_nm * tilt_rad.sin() * FRAC_1_SQRT_2;
    (q, q)
}

pub fn spectrum_column(tilt_deg: f64, pol: DiagonalPol) -> String {
    format!("T_tilt{tilt_deg}_{}", pol.label())
}

/// Transmittance versus wavelength, one column per (tilt, polarization).
pub fn run_spectrum(cfg: &ScenarioConfig) -> Result<Table> {
    cfg.validate()?;
    let s = &cfg.spectrum;
    let film = cfg.film.build()?;
    let lambdas = inclusive_range(s.lambda_min_nm, s.lambda_max_nm, s.lambda_step_nm);
    let mut headers = vec!["lambda_nm".to_string()];
    for t in &s.tilts_deg {
        for p in DiagonalPol::ALL {
            headers.push(spectrum_column(*t, p));
        }
    }
    let rows = lambdas
        .par_iter()
        .map(|&lambda| {
            let mut row = vec![lambda];
            for t in &s.tilts_deg {
                let q = tilt_wavevector(t.to_radians(), lambda);
                let f = film.film_matrix(q, lambda)?;
                for p in DiagonalPol::ALL {
                    row.push((f * p.vector()).intensity());
                }
            }
            Ok(row)
        })
        .collect::<std::result::Result<Vec<_>, FilmError>>()?;
    Ok(Table { headers, rows })
}

/// Local maxima whose topographic prominence is at least `min_rel` times
/// the largest value. Returns indices in ascending order.
pub fn find_peaks(values: &[f64], min_rel: f64) -> Vec<usize> {
    let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let n = values.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if values[i] > values[i - 1] {
            // handle flat tops
            let mut j = i;
            while j + 1 < n && values[j + 1] == values[i] {
                j += 1;
            }
            if j + 1 < n && values[j + 1] < values[i] {
                let h = values[i];
                let mut left = h;
                for k in (0..i).rev() {
                    left = left.min(values[k]);
                    if values[k] > h {
                        break;
                    }
                }
                let mut right = h;
                for &v in &values[j + 1..] {
                    right = right.min(v);
                    if v > h {
                        break;
                    }
                }
                if h - left.max(right) >= min_rel * top {
                    peaks.push((i + j) / 2);
                }
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Relative strength threshold used by [`predicted_peaks`] and the
/// prominence threshold for detected peaks.
pub const PEAK_THRESHOLD: f64 = 0.2;

/// Resonance positions the dyadic model predicts to be visible in the
/// spectrum for a given tilt and polarization, merged when closer than
/// twice the family width.
pub fn predicted_peaks(
    film: &FilmModel,
    tilt_rad: f64,
    pol: DiagonalPol,
    lambda_range: (f64, f64),
) -> Result<Vec<f64>> {
    let e = pol.vector();
    let mut cands: Vec<(f64, f64, f64)> = Vec::new();
    for fam in film.families() {
        for &order in fam.orders() {
            let mut lambda = fam.lambda0_nm();
            for _ in 0..50 {
                let q = tilt_wavevector(tilt_rad, lambda);
                lambda = fam.resonance_wavelength(film.period_nm(), order, q)?;
            }
            let q = tilt_wavevector(tilt_rad, lambda);
            let g = 2.0 * PI / film.period_nm();
            let (px, py) = (q.0 + g * order.0 as f64, q.1 + g * order.1 as f64);
            let norm = px.hypot(py);
            let proj = (e.ex * (px / norm) + e.ey * (py / norm)).norm_sqr();
            cands.push((lambda, fam.amplitude().norm_sqr() * proj, fam.width_nm()));
        }
    }
    let strongest = cands.iter().map(|c| c.1).fold(0.0, f64::max);
    let mut kept: Vec<(f64, f64)> = cands
        .into_iter()
        .filter(|c| c.1 >= PEAK_THRESHOLD * strongest && c.1 > 0.0)
        .filter(|c| c.0 >= lambda_range.0 && c.0 <= lambda_range.1)
        .map(|c| (c.0, c.2))
        .collect();
    kept.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (l, w) in kept {
        match merged.last_mut() {
            Some(last) if l - last.0 < 2.0 * w.max(last.1) => {}
            _ => merged.push((l, w)),
        }
    }
    Ok(merged.into_iter().map(|m| m.0).collect())
}

/// Column name for one sweep curve.
pub fn visibility_column(lambda_nm: f64, beta2_deg: f64) -> String {
    format!("V_{lambda_nm}nm_b2_{beta2_deg}deg")
}

/// Multimode visibility of one (λ, θ_ap) cell for each requested `β₂`.
pub fn multimode_visibilities(
    setup: &SetupParams,
    grid: &GridSpec,
    quad: &Quadrature,
    beta2: &[f64],
    weights: &DetectorWeights,
) -> Result<Vec<f64>> {
    let map = TransferMap::compute(grid, setup, quad)?;
    beta2
        .iter()
        .map(|&b| {
            let fm = map.field_map(&JonesVector::linear(b + FRAC_PI_2))?;
            Ok(visibility_map(&fm, b, weights)?.visibility)
        })
        .collect()
}

/// Visibility versus semiaperture for every (λ, β₂) pair.
pub fn run_visibility_sweep(cfg: &ScenarioConfig) -> Result<Table> {
    cfg.validate()?;
    let v = &cfg.visibility;
    let apertures = inclusive_range(
        v.semiaperture_min_deg,
        v.semiaperture_max_deg,
        v.semiaperture_step_deg,
    );
    let quad = cfg.quadrature.build();
    let grid = GridSpec::new(v.grid_points);
    let weights = match v.iris_deg {
        Some(r) => DetectorWeights::Iris {
            radius_rad: r.to_radians(),
        },
        None => DetectorWeights::Uniform,
    };
    let beta2: Vec<f64> = v.beta2_deg.iter().map(|b| b.to_radians()).collect();
    let cells: Vec<(f64, f64)> = apertures
        .iter()
        .flat_map(|&a| v.wavelengths_nm.iter().map(move |&l| (a, l)))
        .collect();
    let results = cells
        .par_iter()
        .map(|&(a, l)| {
            let setup = cfg.setup_at(l, a)?;
            multimode_visibilities(&setup, &grid, &quad, &beta2, &weights)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut headers = vec!["semiaperture_deg".to_string()];
    for l in &v.wavelengths_nm {
        for b in &v.beta2_deg {
            headers.push(visibility_column(*l, *b));
        }
    }
    let per_row = v.wavelengths_nm.len();
    let rows = apertures
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let mut row = vec![a];
            for r in &results[i * per_row..(i + 1) * per_row] {
                row.extend_from_slice(r);
            }
            row
        })
        .collect();
    Ok(Table { headers, rows })
}

/// Output field map for the configured input polarization.
pub fn run_polmap(cfg: &ScenarioConfig) -> Result<FieldMap> {
    cfg.validate()?;
    let p = &cfg.polmap;
    let grid = GridSpec {
        points: p.grid_points,
        half_extent_rad: p.half_extent_deg.map(f64::to_radians),
    };
    let setup = cfg.setup_params()?;
    let input = JonesVector::linear(p.input_pol_deg.to_radians());
    Ok(crate::optics::field_map(
        &input,
        &grid,
        &setup,
        &cfg.quadrature.build(),
    )?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelReport {
    pub state: PostselectedState,
    pub concurrence: f64,
    /// `(β₂ in degrees, V)`.
    pub visibilities: Vec<(f64, f64)>,
}

impl ChannelReport {
    pub fn visibility(&self, beta2_deg: f64) -> Option<f64> {
        self.visibilities
            .iter()
            .find(|(b, _)| *b == beta2_deg)
            .map(|(_, v)| *v)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("quantity,value\n");
        let _ = writeln!(out, "success_weight,{}", fmt_num(self.state.success_weight));
        let _ = writeln!(out, "concurrence,{}", fmt_num(self.concurrence));
        for (b, v) in &self.visibilities {
            let _ = writeln!(out, "V_b2_{b}deg,{}", fmt_num(*v));
        }
        let labels = ["XX", "XY", "YX", "YY"];
        for i in 0..4 {
            for j in 0..4 {
                let z = self.state.rho[(i, j)];
                let _ = writeln!(out, "rho_{}_{}_re,{}", labels[i], labels[j], fmt_num(z.re));
                let _ = writeln!(out, "rho_{}_{}_im,{}", labels[i], labels[j], fmt_num(z.im));
            }
        }
        out
    }
}

pub fn run_channel(cfg: &ScenarioConfig) -> Result<ChannelReport> {
    cfg.validate()?;
    let c = &cfg.channel;
    let state = postselect_channel(&c.t_matrix(), &c.gram.build()?)?;
    let visibilities = c
        .beta2_deg
        .iter()
        .map(|&b| Ok((b, visibility_state(&state, b.to_radians())?.visibility)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChannelReport {
        concurrence: concurrence(&state),
        state,
        visibilities,
    })
}

/// Wavelengths always checked by [`validate_film`].
pub const CHECK_WAVELENGTHS: [f64; 3] = [728.0, 797.0, 813.0];

#[derive(Debug, Clone, PartialEq)]
pub struct FilmCheck {
    pub wavelength_nm: f64,
    pub film_deviation: f64,
    pub telescope_deviation: f64,
}

impl FilmCheck {
    pub const FILM_TOL: f64 = 1e-12;
    pub const TELESCOPE_TOL: f64 = 1e-8;

    pub fn passed(&self) -> bool {
        self.film_deviation <= Self::FILM_TOL && self.telescope_deviation <= Self::TELESCOPE_TOL
    }
}

/// Checks `F_lab(0, λ) ∝ I` and `T(0, 0) ∝ I` at the configured setup.
pub fn validate_film(cfg: &ScenarioConfig) -> Result<Vec<FilmCheck>> {
    cfg.validate()?;
    let mut lambdas = CHECK_WAVELENGTHS.to_vec();
    if !lambdas.contains(&cfg.setup.wavelength_nm) {
        lambdas.push(cfg.setup.wavelength_nm);
    }
    let quad = cfg.quadrature.build();
    lambdas
        .into_iter()
        .map(|l| {
            let setup = cfg.setup_at(l, cfg.setup.semiaperture_deg)?;
            let f = setup.film.film_matrix((0.0, 0.0), l)?;
            let t = crate::optics::telescope_matrix((0.0, 0.0), &setup, &quad)?;
            Ok(FilmCheck {
                wavelength_nm: l,
                film_deviation: f.identity_deviation(),
                telescope_deviation: t.identity_deviation(),
            })
        })
        .collect()
}

/// Runs the scenario named by `kind` and writes its outputs into `out`.
pub fn run_to_dir(cfg: &ScenarioConfig, kind: ScenarioKind, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    match kind {
        ScenarioKind::Spectrum => {
            let path = out.join("spectrum.csv");
            run_spectrum(cfg)?.write(&path)?;
            Ok(vec![path])
        }
        ScenarioKind::VisibilitySweep => {
            let path = out.join("visibility.csv");
            run_visibility_sweep(cfg)?.write(&path)?;
            Ok(vec![path])
        }
        ScenarioKind::Polmap => Ok(run_polmap(cfg)?.export(out, &cfg.polmap.stem)?),
        ScenarioKind::Channel => {
            let path = out.join("channel.csv");
            fs::write(&path, run_channel(cfg)?.to_csv()).map_err(io_err(&path))?;
            Ok(vec![path])
        }
    }
}
