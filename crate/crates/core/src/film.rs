//! Hole-array film transfer matrix `F(q, λ)`.
//!
//! The film keeps only the zeroth diffracted order, so it is diagonal in the
//! transverse wavevector `q`. The analytic model is a direct transmission
//! term plus one dyadic Lorentzian per reciprocal-lattice order of each
//! surface-plasmon family:
//!
//! ```text
//! F_lab(q, λ) = t_d·I + Σ_fam Σ_G a_fam · iγ/(λ − λ_G(q) + iγ) · ê_G ê_Gᵀ
//! λ_G(q)      = 2π·n_eff / |q + G|,     ê_G = (q + G)/|q + G|
//! ```
//!
//! A film can also be backed by a tabulated grid (e.g. produced by a
//! rigorous modal solver); it is then interpolated multilinearly and never
//! extrapolated.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::jones::{JonesMatrix, JonesVector};

pub const TABULATED_HEADER: [&str; 11] = [
    "qx",
    "qy",
    "lambda_nm",
    "re_xx",
    "im_xx",
    "re_xy",
    "im_xy",
    "re_yx",
    "im_yx",
    "re_yy",
    "im_yy",
];

/// Fraction of the vacuum wavenumber that bounds the paraxial range.
pub const PARAXIAL_LIMIT: f64 = 0.3;

#[derive(Debug, Error)]
pub enum FilmError {
    #[error("invalid resonance family: {0}")]
    InvalidFamily(String),
    #[error("invalid film model: {0}")]
    InvalidModel(String),
    #[error("order ({0}, {1}) is singular at this wavevector (q + G = 0)")]
    SingularOrder(i32, i32),
    #[error("|q| = {q:.4e} nm^-1 exceeds the paraxial limit {limit:.4e} nm^-1")]
    NonParaxial { q: f64, limit: f64 },
    #[error("wavelength must be positive and finite, got {0}")]
    BadWavelength(f64),
    #[error("{axis} = {value} outside tabulated range [{lo}, {hi}]")]
    OutOfRange {
        axis: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("tabulated film line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("tabulated grid is not rectangular: {0}")]
    NonRectangular(String),
    #[error("film model has no tabulated grid")]
    NotTabulated,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FilmError>;

/// Symmetries of the square lattice as integer matrices `[[a, b], [c, d]]`.
pub const POINT_GROUP: [[[i32; 2]; 2]; 8] = [
    [[1, 0], [0, 1]],
    [[0, -1], [1, 0]],
    [[-1, 0], [0, -1]],
    [[0, 1], [-1, 0]],
    [[1, 0], [0, -1]],
    [[-1, 0], [0, 1]],
    [[0, 1], [1, 0]],
    [[0, -1], [-1, 0]],
];

/// The lattice point group as real Jones matrices.
pub fn point_group() -> Vec<JonesMatrix> {
    POINT_GROUP
        .iter()
        .map(|g| {
            JonesMatrix::real(
                f64::from(g[0][0]),
                f64::from(g[0][1]),
                f64::from(g[1][0]),
                f64::from(g[1][1]),
            )
        })
        .collect()
}

fn apply_op(g: &[[i32; 2]; 2], m: (i32, i32)) -> (i32, i32) {
    (g[0][0] * m.0 + g[0][1] * m.1, g[1][0] * m.0 + g[1][1] * m.1)
}

/// One point-group orbit of surface-plasmon orders sharing a resonance.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonanceFamily {
    orders: Vec<(i32, i32)>,
    lambda0_nm: f64,
    width_nm: f64,
    amplitude: Complex64,
}

impl ResonanceFamily {
    pub fn new(
        orders: Vec<(i32, i32)>,
        lambda0_nm: f64,
        width_nm: f64,
        amplitude: Complex64,
    ) -> Result<Self> {
        if orders.is_empty() {
            return Err(FilmError::InvalidFamily("no orders".into()));
        }
        if orders.contains(&(0, 0)) {
            return Err(FilmError::InvalidFamily(
                "(0, 0) is not a plasmon order".into(),
            ));
        }
        let norm2 = orders[0].0 * orders[0].0 + orders[0].1 * orders[0].1;
        for &m in &orders {
            if m.0 * m.0 + m.1 * m.1 != norm2 {
                return Err(FilmError::InvalidFamily(format!(
                    "order {m:?} has a different |G| than {:?}",
                    orders[0]
                )));
            }
            for g in &POINT_GROUP {
                let img = apply_op(g, m);
                if !orders.contains(&img) {
                    return Err(FilmError::InvalidFamily(format!(
                        "orders not closed under the point group: {m:?} maps to missing {img:?}"
                    )));
                }
            }
        }
        if !(lambda0_nm > 0.0 && lambda0_nm.is_finite()) {
            return Err(FilmError::InvalidFamily(format!("lambda0 = {lambda0_nm}")));
        }
        if !(width_nm > 0.0 && width_nm.is_finite()) {
            return Err(FilmError::InvalidFamily(format!("width = {width_nm}")));
        }
        if !amplitude.is_finite() {
            return Err(FilmError::InvalidFamily("non-finite amplitude".into()));
        }
        let mut orders = orders;
        orders.sort_unstable();
        orders.dedup();
        Ok(Self {
            orders,
            lambda0_nm,
            width_nm,
            amplitude,
        })
    }

    /// The four `(±1, ±1)` modes running along the lattice diagonals.
    pub fn diagonal(lambda0_nm: f64, width_nm: f64, amplitude: Complex64) -> Result<Self> {
        Self::new(
            vec![(1, 1), (1, -1), (-1, 1), (-1, -1)],
            lambda0_nm,
            width_nm,
            amplitude,
        )
    }

    /// The four `(±1, 0)`, `(0, ±1)` modes running along the lattice axes.
    pub fn axial(lambda0_nm: f64, width_nm: f64, amplitude: Complex64) -> Result<Self> {
        Self::new(
            vec![(1, 0), (-1, 0), (0, 1), (0, -1)],
            lambda0_nm,
            width_nm,
            amplitude,
        )
    }

    pub fn orders(&self) -> &[(i32, i32)] {
        &self.orders
    }

    pub fn lambda0_nm(&self) -> f64 {
        self.lambda0_nm
    }

    pub fn width_nm(&self) -> f64 {
        self.width_nm
    }

    pub fn amplitude(&self) -> Complex64 {
        self.amplitude
    }

    /// `√(m₁² + m₂²)`, identical for every order of the family.
    pub fn order_norm(&self) -> f64 {
        let m = self.orders[0];
        f64::from(m.0 * m.0 + m.1 * m.1).sqrt()
    }

    /// Effective plasmon index fixed by the normal-incidence resonance.
    pub fn n_eff(&self, period_nm: f64) -> f64 {
        self.lambda0_nm * self.order_norm() / period_nm
    }

    /// Resonance wavelength of `order` at transverse wavevector `q` (nm⁻¹).
    pub fn resonance_wavelength(
        &self,
        period_nm: f64,
        order: (i32, i32),
        q: (f64, f64),
    ) -> Result<f64> {
        let limit = PARAXIAL_LIMIT * 2.0 * PI / self.lambda0_nm;
        let qn = q.0.hypot(q.1);
        if qn > limit {
            return Err(FilmError::NonParaxial { q: qn, limit });
        }
        let (px, py) = shifted(period_nm, order, q);
        let norm = px.hypot(py);
        if norm == 0.0 {
            return Err(FilmError::SingularOrder(order.0, order.1));
        }
        Ok(2.0 * PI * self.n_eff(period_nm) / norm)
    }
}

/// `q + G` for reciprocal vector `G = (2π/d)(m₁, m₂)`.
fn shifted(period_nm: f64, order: (i32, i32), q: (f64, f64)) -> (f64, f64) {
    let g = 2.0 * PI / period_nm;
    (q.0 + g * f64::from(order.0), q.1 + g * f64::from(order.1))
}

/// Unit-peak complex Lorentzian `iγ / (λ − λ₀ + iγ)`.
pub fn lorentzian(lambda: f64, center: f64, width: f64) -> Complex64 {
    let i_gamma = Complex64::new(0.0, width);
    i_gamma / (Complex64::new(lambda - center, 0.0) + i_gamma)
}

/// Rectangular `(λ, qx, qy)` grid of film matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedFilm {
    lambda_nm: Vec<f64>,
    qx: Vec<f64>,
    qy: Vec<f64>,
    /// Row-major in `(λ, qx, qy)` order, matching the file layout.
    values: Vec<JonesMatrix>,
}

impl TabulatedFilm {
    pub fn new(
        lambda_nm: Vec<f64>,
        qx: Vec<f64>,
        qy: Vec<f64>,
        values: Vec<JonesMatrix>,
    ) -> Result<Self> {
        for (name, axis) in [("lambda_nm", &lambda_nm), ("qx", &qx), ("qy", &qy)] {
            if axis.is_empty() {
                return Err(FilmError::NonRectangular(format!("{name} axis is empty")));
            }
            if axis.iter().any(|v| !v.is_finite()) {
                return Err(FilmError::NonRectangular(format!("{name} axis has NaN")));
            }
            if axis.windows(2).any(|w| w[1] <= w[0]) {
                return Err(FilmError::NonRectangular(format!(
                    "{name} axis is not strictly increasing"
                )));
            }
        }
        if values.len() != lambda_nm.len() * qx.len() * qy.len() {
            return Err(FilmError::NonRectangular(format!(
                "{} values for a {}x{}x{} grid",
                values.len(),
                lambda_nm.len(),
                qx.len(),
                qy.len()
            )));
        }
        if values.iter().any(|m| !m.is_finite()) {
            return Err(FilmError::NonRectangular("non-finite matrix entry".into()));
        }
        Ok(Self {
            lambda_nm,
            qx,
            qy,
            values,
        })
    }

    /// Samples an analytic model on the given axes.
    pub fn sample(model: &FilmModel, lambda_nm: &[f64], qx: &[f64], qy: &[f64]) -> Result<Self> {
        let mut values = Vec::with_capacity(lambda_nm.len() * qx.len() * qy.len());
        for &l in lambda_nm {
            for &x in qx {
                for &y in qy {
                    values.push(model.film_matrix((x, y), l)?);
                }
            }
        }
        Self::new(lambda_nm.to_vec(), qx.to_vec(), qy.to_vec(), values)
    }

    pub fn lambda_axis(&self) -> &[f64] {
        &self.lambda_nm
    }

    pub fn qx_axis(&self) -> &[f64] {
        &self.qx
    }

    pub fn qy_axis(&self) -> &[f64] {
        &self.qy
    }

    fn at(&self, il: usize, ix: usize, iy: usize) -> JonesMatrix {
        self.values[(il * self.qx.len() + ix) * self.qy.len() + iy]
    }

    pub fn interpolate(&self, q: (f64, f64), lambda: f64) -> Result<JonesMatrix> {
        let (l0, l1, wl) = bracket("lambda_nm", &self.lambda_nm, lambda)?;
        let (x0, x1, wx) = bracket("qx", &self.qx, q.0)?;
        let (y0, y1, wy) = bracket("qy", &self.qy, q.1)?;
        let mut acc = JonesMatrix::zero();
        for (il, fl) in [(l0, 1.0 - wl), (l1, wl)] {
            for (ix, fx) in [(x0, 1.0 - wx), (x1, wx)] {
                for (iy, fy) in [(y0, 1.0 - wy), (y1, wy)] {
                    let f = fl * fx * fy;
                    if f != 0.0 {
                        acc = acc + self.at(il, ix, iy).scale(Complex64::new(f, 0.0));
                    }
                }
            }
        }
        Ok(acc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| FilmError::Malformed {
            line: 1,
            reason: e.to_string(),
        })?;
        if header.iter().ne(TABULATED_HEADER.iter().copied()) {
            return Err(FilmError::Malformed {
                line: 1,
                reason: format!("expected header {}", TABULATED_HEADER.join(",")),
            });
        }
        let mut rows: Vec<[f64; 11]> = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| FilmError::Malformed {
                line,
                reason: e.to_string(),
            })?;
            if record.len() != 11 {
                return Err(FilmError::Malformed {
                    line,
                    reason: format!("expected 11 fields, found {}", record.len()),
                });
            }
            let mut row = [0.0; 11];
            for (slot, field) in row.iter_mut().zip(record.iter()) {
                let v: f64 = field.parse().map_err(|_| FilmError::Malformed {
                    line,
                    reason: format!("cannot parse {field:?} as a number"),
                })?;
                if !v.is_finite() {
                    return Err(FilmError::Malformed {
                        line,
                        reason: "non-finite value".into(),
                    });
                }
                *slot = v;
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(FilmError::NonRectangular("no data rows".into()));
        }
        let axis = |col: usize| {
            let mut v: Vec<f64> = rows.iter().map(|r| r[col]).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let lambda_nm = axis(2);
        let qx = axis(0);
        let qy = axis(1);
        let expected = lambda_nm.len() * qx.len() * qy.len();
        if rows.len() != expected {
            return Err(FilmError::NonRectangular(format!(
                "{} rows but the axes span {} points",
                rows.len(),
                expected
            )));
        }
        let mut values = Vec::with_capacity(expected);
        let mut idx = 0;
        for &l in &lambda_nm {
            for &x in &qx {
                for &y in &qy {
                    let r = &rows[idx];
                    if r[2] != l || r[0] != x || r[1] != y {
                        return Err(FilmError::NonRectangular(format!(
                            "line {} is ({}, {}, {}), expected ({x}, {y}, {l}) in (lambda, qx, qy) order",
                            idx + 2,
                            r[0],
                            r[1],
                            r[2]
                        )));
                    }
                    values.push(JonesMatrix::new(
                        Complex64::new(r[3], r[4]),
                        Complex64::new(r[5], r[6]),
                        Complex64::new(r[7], r[8]),
                        Complex64::new(r[9], r[10]),
                    ));
                    idx += 1;
                }
            }
        }
        Self::new(lambda_nm, qx, qy, values)
    }

    /// CSV text in the tabulated-film schema. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_csv(&self) -> String {
        let mut out = TABULATED_HEADER.join(",");
        out.push('\n');
        for (il, &l) in self.lambda_nm.iter().enumerate() {
            for (ix, &x) in self.qx.iter().enumerate() {
                for (iy, &y) in self.qy.iter().enumerate() {
                    let m = self.at(il, ix, iy);
                    let _ = write!(out, "{x},{y},{l}");
                    for z in m.entries() {
                        let _ = write!(out, ",{},{}", z.re, z.im);
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Lower/upper indices and the fractional weight of the upper one.
fn bracket(name: &'static str, axis: &[f64], x: f64) -> Result<(usize, usize, f64)> {
    let lo = axis[0];
    let hi = axis[axis.len() - 1];
    let out = || FilmError::OutOfRange {
        axis: name,
        value: x,
        lo,
        hi,
    };
    if axis.len() == 1 {
        let tol = 1e-12 * lo.abs().max(1e-300);
        return if (x - lo).abs() <= tol || x == lo {
            Ok((0, 0, 0.0))
        } else {
            Err(out())
        };
    }
    if !(x >= lo && x <= hi) {
        return Err(out());
    }
    let upper = axis.partition_point(|&v| v <= x).min(axis.len() - 1).max(1);
    let lower = upper - 1;
    let w = (x - axis[lower]) / (axis[upper] - axis[lower]);
    Ok((lower, upper, w))
}

/// Film transfer-matrix model.
#[derive(Debug, Clone, PartialEq)]
pub struct FilmModel {
    period_nm: f64,
    direct_amplitude: Complex64,
    families: Vec<ResonanceFamily>,
    /// Descriptive only.
    pub thickness_nm: f64,
    /// Descriptive only.
    pub hole_diameter_nm: f64,
    tabulated: Option<TabulatedFilm>,
}

impl FilmModel {
    pub fn new(
        period_nm: f64,
        direct_amplitude: Complex64,
        families: Vec<ResonanceFamily>,
    ) -> Result<Self> {
        if !(period_nm > 0.0 && period_nm.is_finite()) {
            return Err(FilmError::InvalidModel(format!("period = {period_nm}")));
        }
        if !direct_amplitude.is_finite() {
            return Err(FilmError::InvalidModel(
                "non-finite direct amplitude".into(),
            ));
        }
        for fam in &families {
            let n_eff = fam.n_eff(period_nm);
            if n_eff <= 1.0 {
                return Err(FilmError::InvalidModel(format!(
                    "family at {} nm has n_eff = {n_eff:.4} <= 1",
                    fam.lambda0_nm
                )));
            }
        }
        Ok(Self {
            period_nm,
            direct_amplitude,
            families,
            thickness_nm: 200.0,
            hole_diameter_nm: 200.0,
            tabulated: None,
        })
    }

    /// Calibrated default: 700 nm period, diagonal resonance at 797 nm and
    /// axial resonance at 728 nm.
    pub fn calibrated() -> Self {
        let diagonal =
            ResonanceFamily::diagonal(797.0, 5.0, Complex64::new(0.0816, 0.0)).expect("valid");
        let axial = ResonanceFamily::axial(
            728.0,
            25.0,
            Complex64::from_polar(0.3 * 0.0816, (-33.0f64).to_radians()),
        )
        .expect("valid");
        Self::new(700.0, Complex64::new(0.01, 0.0), vec![diagonal, axial]).expect("valid")
    }

    /// A film whose matrix comes entirely from a tabulated grid.
    pub fn from_table(period_nm: f64, table: TabulatedFilm) -> Result<Self> {
        let mut model = Self::new(period_nm, Complex64::new(0.0, 0.0), Vec::new())?;
        model.tabulated = Some(table);
        Ok(model)
    }

    pub fn load_tabulated(path: impl AsRef<Path>, period_nm: f64) -> Result<Self> {
        Self::from_table(period_nm, TabulatedFilm::load(path)?)
    }

    pub fn save_tabulated(&self, path: impl AsRef<Path>) -> Result<()> {
        self.tabulated
            .as_ref()
            .ok_or(FilmError::NotTabulated)?
            .save(path)
    }

    pub fn period_nm(&self) -> f64 {
        self.period_nm
    }

    pub fn direct_amplitude(&self) -> Complex64 {
        self.direct_amplitude
    }

    pub fn families(&self) -> &[ResonanceFamily] {
        &self.families
    }

    pub fn tabulated(&self) -> Option<&TabulatedFilm> {
        self.tabulated.as_ref()
    }

    pub fn is_tabulated(&self) -> bool {
        self.tabulated.is_some()
    }

    /// Lab-frame film matrix at transverse wavevector `q` (nm⁻¹).
    pub fn film_matrix(&self, q: (f64, f64), lambda: f64) -> Result<JonesMatrix> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(FilmError::BadWavelength(lambda));
        }
        if let Some(table) = &self.tabulated {
            return table.interpolate(q, lambda);
        }
        let limit = PARAXIAL_LIMIT * 2.0 * PI / lambda;
        let qn = q.0.hypot(q.1);
        if qn > limit {
            return Err(FilmError::NonParaxial { q: qn, limit });
        }
        Ok(self.analytic(q, lambda))
    }

    fn analytic(&self, q: (f64, f64), lambda: f64) -> JonesMatrix {
        let mut m = JonesMatrix::scalar(self.direct_amplitude);
        for fam in &self.families {
            let two_pi_n = 2.0 * PI * fam.n_eff(self.period_nm);
            for &order in &fam.orders {
                let (px, py) = shifted(self.period_nm, order, q);
                let norm = px.hypot(py);
                // |G| >= 2π/d while |q| is paraxial, so norm > 0 here.
                let center = two_pi_n / norm;
                let coeff = fam.amplitude * lorentzian(lambda, center, fam.width_nm);
                let e = (px / norm, py / norm);
                m = m + JonesMatrix::dyad(e, e).scale(coeff);
            }
        }
        m
    }

    /// `|F_lab(q, λ)·pol|²`.
    pub fn transmittance(&self, q: (f64, f64), lambda: f64, pol: &JonesVector) -> Result<f64> {
        Ok((self.film_matrix(q, lambda)? * *pol).intensity())
    }
}
