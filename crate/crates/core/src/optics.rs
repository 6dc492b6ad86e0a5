//! Paraxial multimode propagation through the confocal telescope with the
//! hole-array film at its focus.
//!
//! For a normally incident photon the telescope-plus-film matrix is
//!
//! ```text
//! T(q₃) = ∫_{|q₂| ≤ k sin θ_ap} exp(i·a·|q₂ − M·q₃|²) · F_lab(q₂) d²q₂
//! a = (n − 1)Δ / (2nk),    M = n·f / ((n − 1)Δ)
//! ```
//!
//! `T` is returned in the lab (x, y) basis. The p/s basis of the outgoing
//! mode is reached with [`to_mode_basis`]. The overall scalar of `T` is
//! arbitrary: lens prefactors are dropped and every downstream observable is
//! invariant under a global rescaling.
//!
//! For films that vary slowly across a Fresnel zone, [`telescope_matrix_sp`]
//! evaluates the film only at the stationary point `q₂ = M·q₃`.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::film::{FilmError, FilmModel};
use crate::jones::{ellipse_of, rotation, JonesMatrix, JonesVector, PolarizationEllipse};
use crate::quadrature::{self, Node};

#[derive(Debug, Error)]
pub enum OpticsError {
    #[error("invalid setup: {0}")]
    InvalidSetup(String),
    #[error(transparent)]
    Film(#[from] FilmError),
    #[error(
        "quadrature not converged: relative change {rel_change:.3e} > {tolerance:.1e} \
         (coarse {coarse}, fine {fine})"
    )]
    Convergence {
        rel_change: f64,
        tolerance: f64,
        coarse: Box<JonesMatrix>,
        fine: Box<JonesMatrix>,
    },
    #[error(
        "stationary point |q2*| = {q2:.4e} nm^-1 is not inside the aperture \
         (radius {radius:.4e}, margin {margin:.4e})"
    )]
    StationaryPointOutside { q2: f64, radius: f64, margin: f64 },
    #[error("input polarization must be normalized (intensity {0})")]
    NotNormalized(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, OpticsError>;

/// Largest semiaperture accepted by the paraxial model.
pub const MAX_SEMIAPERTURE: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct SetupParams {
    pub wavelength_nm: f64,
    pub focal_length_nm: f64,
    pub substrate_index: f64,
    pub substrate_thickness_nm: f64,
    /// Half-angle of the focused cone at the film.
    pub semiaperture_rad: f64,
    pub film: FilmModel,
}

impl SetupParams {
    /// f = 15 mm, n = 1.52, Δ = 0.5 mm, θ_ap = 8°, calibrated film.
    pub fn reference(wavelength_nm: f64) -> Self {
        Self {
            wavelength_nm,
            focal_length_nm: 15.0e6,
            substrate_index: 1.52,
            substrate_thickness_nm: 0.5e6,
            semiaperture_rad: 8f64.to_radians(),
            film: FilmModel::calibrated(),
        }
    }

    pub fn with_semiaperture(mut self, rad: f64) -> Self {
        self.semiaperture_rad = rad;
        self
    }

    pub fn with_film(mut self, film: FilmModel) -> Self {
        self.film = film;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("wavelength", self.wavelength_nm),
            ("focal length", self.focal_length_nm),
            ("substrate thickness", self.substrate_thickness_nm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OpticsError::InvalidSetup(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !(self.substrate_index > 1.0 && self.substrate_index.is_finite()) {
            return Err(OpticsError::InvalidSetup(format!(
                "substrate index must exceed 1, got {}",
                self.substrate_index
            )));
        }
        if !(0.0..=MAX_SEMIAPERTURE).contains(&self.semiaperture_rad) {
            return Err(OpticsError::InvalidSetup(format!(
                "semiaperture {} rad outside [0, {MAX_SEMIAPERTURE}]",
                self.semiaperture_rad
            )));
        }
        Ok(())
    }

    /// Vacuum wavenumber `2π/λ` in nm⁻¹.
    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength_nm
    }

    /// Radius of the `q₂` disc collected by the first lens.
    pub fn aperture_radius(&self) -> f64 {
        self.wavenumber() * self.semiaperture_rad.sin()
    }

    /// Chirp coefficient `(n − 1)Δ/(2nk)` in nm².
    pub fn chirp(&self) -> f64 {
        let n = self.substrate_index;
        (n - 1.0) * self.substrate_thickness_nm / (2.0 * n * self.wavenumber())
    }

    /// Angular magnification `n·f/((n − 1)Δ)` between `q₂` and `q₃`.
    pub fn magnification(&self) -> f64 {
        let n = self.substrate_index;
        n * self.focal_length_nm / ((n - 1.0) * self.substrate_thickness_nm)
    }

    /// Stationary point `q₂* = M·q₃` of the telescope integral.
    pub fn stationary_point(&self, q3: (f64, f64)) -> (f64, f64) {
        let m = self.magnification();
        (m * q3.0, m * q3.1)
    }

    /// Default half-extent of the `q₃` map: the aperture angle divided by `M`.
    pub fn default_map_half_angle(&self) -> f64 {
        self.semiaperture_rad / self.magnification()
    }
}

/// Azimuth of a transverse wavevector; 0 for the zero vector.
pub fn azimuth(q: (f64, f64)) -> f64 {
    if q.0 == 0.0 && q.1 == 0.0 {
        0.0
    } else {
        q.1.atan2(q.0)
    }
}

/// Paraxial thin-lens transfer matrix between plane-wave modes.
pub fn lens_matrix(q_out: (f64, f64), q_in: (f64, f64), setup: &SetupParams) -> JonesMatrix {
    let k = setup.wavenumber();
    let f = setup.focal_length_nm;
    let dq2 = (q_out.0 - q_in.0).powi(2) + (q_out.1 - q_in.1).powi(2);
    let prefactor = Complex64::new(f / (2.0 * PI * k), 0.0) / Complex64::new(0.0, 1.0);
    let phase = Complex64::from_polar(1.0, f / (2.0 * k) * dq2);
    (rotation(azimuth(q_out)) * rotation(-azimuth(q_in))).scale(prefactor * phase)
}

/// Paraxial free-propagation phase `exp(−i z |q|²/(2k))` in a medium of
/// wavenumber `k`.
pub fn propagation_phase_in(q: (f64, f64), z: f64, k: f64) -> Complex64 {
    Complex64::from_polar(1.0, -z * (q.0 * q.0 + q.1 * q.1) / (2.0 * k))
}

/// Free-propagation phase in air for the setup wavelength.
pub fn propagation_phase(q: (f64, f64), z: f64, setup: &SetupParams) -> Complex64 {
    propagation_phase_in(q, z, setup.wavenumber())
}

/// Re-expresses a lab-frame output matrix in the p/s basis of mode `q₃`.
pub fn to_mode_basis(q3: (f64, f64), lab: &JonesMatrix) -> JonesMatrix {
    rotation(azimuth(q3)) * *lab
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadratureScheme {
    /// Gauss–Legendre radius × uniform azimuth.
    Polar,
    /// Midpoint rule on a square with a sharp disc mask.
    Cartesian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub scheme: QuadratureScheme,
    /// Number of density doublings applied to the default grid.
    pub refine: u32,
    pub tolerance: f64,
    /// Compare against one further doubling and fail on disagreement.
    pub check_convergence: bool,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            scheme: QuadratureScheme::Polar,
            refine: 0,
            tolerance: 1e-4,
            check_convergence: true,
        }
    }
}

impl Quadrature {
    pub fn unchecked() -> Self {
        Self {
            check_convergence: false,
            ..Self::default()
        }
    }

    pub fn with_refine(mut self, refine: u32) -> Self {
        self.refine = refine;
        self
    }

    pub fn with_scheme(mut self, scheme: QuadratureScheme) -> Self {
        self.scheme = scheme;
        self
    }
}

/// Radial node spacing that resolves both the film resonances and the chirp.
fn base_spacing(setup: &SetupParams) -> f64 {
    let chirp_limit = 0.25 / (setup.chirp() * setup.aperture_radius());
    1.7e-5f64.min(chirp_limit)
}

/// Cubature nodes for refinement level `level`.
pub fn aperture_nodes(setup: &SetupParams, scheme: QuadratureScheme, level: u32) -> Vec<Node> {
    let radius = setup.aperture_radius();
    if radius == 0.0 {
        return vec![Node {
            x: 0.0,
            y: 0.0,
            weight: 1.0,
        }];
    }
    let scale = 1usize << level.min(12);
    let h = base_spacing(setup);
    match scheme {
        QuadratureScheme::Polar => {
            let radial = ((radius / h).ceil() as usize).max(16);
            quadrature::polar_disc(radius, radial * scale, 4 * radial * scale)
        }
        QuadratureScheme::Cartesian => {
            let points = ((1.56 * radius / h).ceil() as usize).max(21) | 1;
            quadrature::cartesian_disc(radius, points * scale)
        }
    }
}

/// Film matrices pre-multiplied by weights and the `exp(i a |q₂|²)` chirp.
struct Kernel {
    nodes: Vec<Node>,
    weighted: Vec<JonesMatrix>,
    chirp: f64,
    magnification: f64,
}

impl Kernel {
    fn new(setup: &SetupParams, scheme: QuadratureScheme, level: u32) -> Result<Self> {
        setup.validate()?;
        let nodes = aperture_nodes(setup, scheme, level);
        let chirp = setup.chirp();
        let lambda = setup.wavelength_nm;
        let weighted = nodes
            .par_iter()
            .map(|n| {
                let f = setup.film.film_matrix((n.x, n.y), lambda)?;
                let c = Complex64::from_polar(n.weight, chirp * (n.x * n.x + n.y * n.y));
                Ok(f.scale(c))
            })
            .collect::<std::result::Result<Vec<_>, FilmError>>()?;
        Ok(Self {
            nodes,
            weighted,
            chirp,
            magnification: setup.magnification(),
        })
    }

    /// Direct evaluation at a single `q₃`.
    fn at(&self, q3: (f64, f64)) -> JonesMatrix {
        let (sx, sy) = (self.magnification * q3.0, self.magnification * q3.1);
        let cross = -2.0 * self.chirp;
        let mut acc = [Complex64::new(0.0, 0.0); 4];
        for (n, g) in self.nodes.iter().zip(&self.weighted) {
            let p = Complex64::from_polar(1.0, cross * (sx * n.x + sy * n.y));
            for (a, e) in acc.iter_mut().zip(g.entries()) {
                *a += p * e;
            }
        }
        let global = Complex64::from_polar(1.0, self.chirp * (sx * sx + sy * sy));
        JonesMatrix::from_entries(acc).scale(global)
    }

    /// Evaluation on the square grid `axis × axis` (x index major).
    fn grid(&self, axis: &[f64]) -> Vec<JonesMatrix> {
        let n = axis.len();
        if n == 0 {
            return Vec::new();
        }
        let m = self.magnification;
        let cross = -2.0 * self.chirp * m;
        let step = if n > 1 { axis[1] - axis[0] } else { 0.0 };
        let y_step: Vec<Complex64> = self
            .nodes
            .iter()
            .map(|node| Complex64::from_polar(1.0, cross * step * node.y))
            .collect();
        let rows: Vec<Vec<JonesMatrix>> = axis
            .par_iter()
            .map(|&sx| {
                let mut h: Vec<[Complex64; 4]> = self
                    .nodes
                    .iter()
                    .zip(&self.weighted)
                    .map(|(node, g)| {
                        let p =
                            Complex64::from_polar(1.0, cross * (sx * node.x + axis[0] * node.y));
                        g.entries().map(|e| e * p)
                    })
                    .collect();
                let mut row = Vec::with_capacity(n);
                for (iv, &sy) in axis.iter().enumerate() {
                    let mut acc = [Complex64::new(0.0, 0.0); 4];
                    for hj in &h {
                        for (a, e) in acc.iter_mut().zip(hj) {
                            *a += *e;
                        }
                    }
                    let global =
                        Complex64::from_polar(1.0, self.chirp * m * m * (sx * sx + sy * sy));
                    row.push(JonesMatrix::from_entries(acc).scale(global));
                    if iv + 1 < n {
                        for (hj, z) in h.iter_mut().zip(&y_step) {
                            for e in hj.iter_mut() {
                                *e *= *z;
                            }
                        }
                    }
                }
                row
            })
            .collect();
        rows.into_iter().flatten().collect()
    }
}

fn relative_change(coarse: &[JonesMatrix], fine: &[JonesMatrix]) -> (f64, usize) {
    let scale = fine.iter().map(JonesMatrix::max_abs).fold(0.0, f64::max);
    let mut worst = (0.0, 0);
    for (i, (c, f)) in coarse.iter().zip(fine).enumerate() {
        let d = (*f - *c).max_abs();
        if d > worst.0 {
            worst = (d, i);
        }
    }
    if scale == 0.0 {
        (0.0, worst.1)
    } else {
        (worst.0 / scale, worst.1)
    }
}

/// Evaluates `T(q₃)` on a set of points with the requested quadrature,
/// checking convergence against one further refinement when asked.
fn evaluate<F>(setup: &SetupParams, quad: &Quadrature, eval: F) -> Result<Vec<JonesMatrix>>
where
    F: Fn(&Kernel) -> Vec<JonesMatrix>,
{
    let coarse = eval(&Kernel::new(setup, quad.scheme, quad.refine)?);
    if !quad.check_convergence || setup.aperture_radius() == 0.0 {
        return Ok(coarse);
    }
    let fine = eval(&Kernel::new(setup, quad.scheme, quad.refine + 1)?);
    let (rel, at) = relative_change(&coarse, &fine);
    if rel > quad.tolerance {
        return Err(OpticsError::Convergence {
            rel_change: rel,
            tolerance: quad.tolerance,
            coarse: Box::new(coarse[at]),
            fine: Box::new(fine[at]),
        });
    }
    Ok(fine)
}

/// Lab-frame telescope-plus-film matrix `T(q₃, 0)` by cubature over the
/// aperture disc.
pub fn telescope_matrix(
    q3: (f64, f64),
    setup: &SetupParams,
    quad: &Quadrature,
) -> Result<JonesMatrix> {
    Ok(evaluate(setup, quad, |k| vec![k.at(q3)])?[0])
}

/// Normalization of the stationary-phase estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpPrefactor {
    /// Chirp integrated over the aperture disc, which keeps the hard-edge
    /// diffraction term.
    #[default]
    Disc,
    /// Infinite-plane Gaussian integral `iπ/a`.
    Plane,
}

/// `∫_{|q₂| ≤ R} exp(i·a·|q₂ − p|²) d²q₂`, the telescope integral of a
/// constant unit film, with `p = M·q₃`.
pub fn disc_fresnel_integral(q3: (f64, f64), setup: &SetupParams) -> Complex64 {
    let a = setup.chirp();
    let radius = setup.aperture_radius();
    let (px, py) = setup.stationary_point(q3);
    let p = px.hypot(py);
    let i = Complex64::new(0.0, 1.0);
    if radius == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    if p == 0.0 {
        return (i * PI / a) * (Complex64::new(1.0, 0.0) - (i * a * radius * radius).exp());
    }
    // 2π e^{iap²} ∫₀^R r e^{iar²} J₀(2apr) dr
    let oscillations = a * radius * radius + 2.0 * a * p * radius;
    let n = 64 + 4 * oscillations.ceil() as usize;
    let (x, w) = quadrature::gauss_legendre(n);
    let half = 0.5 * radius;
    let radial: Complex64 = x
        .iter()
        .zip(&w)
        .map(|(x, w)| {
            let r = half * (x + 1.0);
            Complex64::from_polar(w * half * r * libm::j0(2.0 * a * p * r), a * r * r)
        })
        .sum();
    Complex64::from_polar(2.0 * PI, a * p * p) * radial
}

/// Stationary-phase estimate `Φ·F_lab(M·q₃)` with the prefactor `Φ` of
/// [`telescope_matrix_sp_with`] set to [`SpPrefactor::Disc`].
///
/// Valid only when the stationary point lies inside the aperture by at
/// least `margin` (nm⁻¹); see [`default_sp_margin`].
pub fn telescope_matrix_sp(
    q3: (f64, f64),
    setup: &SetupParams,
    margin: f64,
) -> Result<JonesMatrix> {
    telescope_matrix_sp_with(q3, setup, margin, SpPrefactor::Disc)
}

pub fn telescope_matrix_sp_with(
    q3: (f64, f64),
    setup: &SetupParams,
    margin: f64,
    prefactor: SpPrefactor,
) -> Result<JonesMatrix> {
    setup.validate()?;
    let q2 = setup.stationary_point(q3);
    let radius = setup.aperture_radius();
    let q2n = q2.0.hypot(q2.1);
    if q2n > radius - margin {
        return Err(OpticsError::StationaryPointOutside {
            q2: q2n,
            radius,
            margin,
        });
    }
    let scalar = match prefactor {
        SpPrefactor::Disc => disc_fresnel_integral(q3, setup),
        SpPrefactor::Plane => Complex64::new(0.0, PI / setup.chirp()),
    };
    Ok(setup
        .film
        .film_matrix(q2, setup.wavelength_nm)?
        .scale(scalar))
}

/// One Fresnel-zone width `1/√a`.
pub fn default_sp_margin(setup: &SetupParams) -> f64 {
    1.0 / setup.chirp().sqrt()
}

/// Square sampling grid over `q₃`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Points per side; forced odd so that `q₃ = 0` is sampled.
    pub points: usize,
    /// Half-extent as an angle `θ₃`; `None` uses the mapped aperture.
    pub half_extent_rad: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            points: 41,
            half_extent_rad: None,
        }
    }
}

impl GridSpec {
    pub fn new(points: usize) -> Self {
        Self {
            points,
            half_extent_rad: None,
        }
    }

    pub fn half_angle(&self, setup: &SetupParams) -> f64 {
        self.half_extent_rad
            .unwrap_or_else(|| setup.default_map_half_angle())
    }

    /// Symmetric axis of `q₃` coordinates (nm⁻¹).
    pub fn axis(&self, setup: &SetupParams) -> Vec<f64> {
        let n = self.points.max(1) | 1;
        let qmax = setup.wavenumber() * self.half_angle(setup).sin();
        if n == 1 || qmax == 0.0 {
            return vec![0.0; n];
        }
        let c = (n / 2) as f64;
        let step = qmax / c;
        (0..n).map(|i| (i as f64 - c) * step).collect()
    }
}

/// `T(q₃, 0)` sampled on a square `q₃` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMap {
    pub wavenumber: f64,
    pub half_extent_rad: f64,
    pub axis: Vec<f64>,
    /// Index `ix * n + iy`.
    pub matrices: Vec<JonesMatrix>,
}

impl TransferMap {
    pub fn compute(grid: &GridSpec, setup: &SetupParams, quad: &Quadrature) -> Result<Self> {
        let axis = grid.axis(setup);
        let matrices = evaluate(setup, quad, |k| k.grid(&axis))?;
        Ok(Self {
            wavenumber: setup.wavenumber(),
            half_extent_rad: grid.half_angle(setup),
            axis,
            matrices,
        })
    }

    pub fn side(&self) -> usize {
        self.axis.len()
    }

    pub fn q3(&self, idx: usize) -> (f64, f64) {
        let n = self.side();
        (self.axis[idx / n], self.axis[idx % n])
    }

    pub fn at(&self, ix: usize, iy: usize) -> &JonesMatrix {
        &self.matrices[ix * self.side() + iy]
    }

    pub fn field_map(&self, input_pol: &JonesVector) -> Result<FieldMap> {
        let norm = input_pol.intensity();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(OpticsError::NotNormalized(norm));
        }
        let fields: Vec<JonesVector> = self.matrices.iter().map(|t| *t * *input_pol).collect();
        let ellipses = fields.iter().map(|e| ellipse_of(e).ok()).collect();
        Ok(FieldMap {
            input_pol: *input_pol,
            wavenumber: self.wavenumber,
            half_extent_rad: self.half_extent_rad,
            axis: self.axis.clone(),
            fields,
            ellipses,
        })
    }
}

/// Output field `E(q₃) = T(q₃, 0)·input` over the `q₃` grid.
///
/// Relative phases between grid points are kept but carry no physical
/// meaning: each detector pixel collects a single `q₃` mode.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMap {
    pub input_pol: JonesVector,
    pub wavenumber: f64,
    pub half_extent_rad: f64,
    pub axis: Vec<f64>,
    /// Index `ix * n + iy`.
    pub fields: Vec<JonesVector>,
    /// `None` where the field vanishes.
    pub ellipses: Vec<Option<PolarizationEllipse>>,
}

pub fn field_map(
    input_pol: &JonesVector,
    grid: &GridSpec,
    setup: &SetupParams,
    quad: &Quadrature,
) -> Result<FieldMap> {
    TransferMap::compute(grid, setup, quad)?.field_map(input_pol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapChannel {
    Intensity,
    AxisRatio,
    Orientation,
}

impl MapChannel {
    pub fn name(&self) -> &'static str {
        match self {
            MapChannel::Intensity => "intensity",
            MapChannel::AxisRatio => "axis_ratio",
            MapChannel::Orientation => "orientation",
        }
    }
}

impl FieldMap {
    pub fn side(&self) -> usize {
        self.axis.len()
    }

    pub fn q3(&self, idx: usize) -> (f64, f64) {
        let n = self.side();
        (self.axis[idx / n], self.axis[idx % n])
    }

    /// Propagation angle of a `q₃` component.
    pub fn theta(&self, q: f64) -> f64 {
        (q / self.wavenumber).clamp(-1.0, 1.0).asin()
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.fields.iter().map(JonesVector::intensity).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("q3x,q3y,theta3x_deg,theta3y_deg,intensity,psi_rad,axis_ratio\n");
        for (idx, field) in self.fields.iter().enumerate() {
            let (qx, qy) = self.q3(idx);
            let (psi, ratio) = self.ellipses[idx]
                .map(|e| (e.orientation, e.axis_ratio))
                .unwrap_or((0.0, 0.0));
            let _ = writeln!(
                out,
                "{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
                qx,
                qy,
                self.theta(qx).to_degrees(),
                self.theta(qy).to_degrees(),
                field.intensity(),
                psi,
                ratio
            );
        }
        out
    }

    /// 16-bit binary PGM. Columns run along `q₃x`, rows along `q₃y` with
    /// the top row at the largest `q₃y`.
    pub fn to_pgm(&self, channel: MapChannel) -> Vec<u8> {
        let n = self.side();
        let peak = self.intensities().into_iter().fold(0.0, f64::max);
        let mut out = format!("P5\n{n} {n}\n65535\n").into_bytes();
        for iy in (0..n).rev() {
            for ix in 0..n {
                let idx = ix * n + iy;
                let unit = match channel {
                    MapChannel::Intensity => {
                        if peak > 0.0 {
                            self.fields[idx].intensity() / peak
                        } else {
                            0.0
                        }
                    }
                    MapChannel::AxisRatio => {
                        0.5 * (self.ellipses[idx].map_or(0.0, |e| e.axis_ratio) + 1.0)
                    }
                    MapChannel::Orientation => {
                        self.ellipses[idx].map_or(0.5, |e| e.orientation / PI + 0.5)
                    }
                };
                let v = (unit.clamp(0.0, 1.0) * 65535.0).round() as u16;
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
        out
    }

    /// Writes `<stem>.csv` and one PGM per channel into `dir`.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let csv = dir.join(format!("{stem}.csv"));
        fs::write(&csv, self.to_csv())?;
        written.push(csv);
        for channel in [
            MapChannel::Intensity,
            MapChannel::AxisRatio,
            MapChannel::Orientation,
        ] {
            let path = dir.join(format!("{stem}_{}.pgm", channel.name()));
            fs::write(&path, self.to_pgm(channel))?;
            written.push(path);
        }
        Ok(written)
    }
}
