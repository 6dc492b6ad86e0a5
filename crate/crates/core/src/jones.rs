//! Jones calculus in the fixed lab (x, y) transverse basis.
//!
//! Every polarization quantity in this crate lives in the lab basis. The
//! p/s basis of a plane-wave mode with azimuth `φ` only shows up through an
//! explicit conjugation with [`rotation`].
//!
//! Handedness convention for [`PolarizationEllipse::axis_ratio`]: the ratio
//! is positive exactly when `Im(ex · ey*) > 0`. For example `(1, i)/√2` has
//! `Im(ex · ey*) = -1/2` and therefore `axis_ratio = -1`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JonesError {
    #[error("polarization ellipse undefined for a zero-intensity field")]
    ZeroIntensity,
    #[error("non-finite Jones component")]
    NonFinite,
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Transverse field `(ex, ey)` of a single plane-wave mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesVector {
    pub ex: Complex64,
    pub ey: Complex64,
}

impl JonesVector {
    pub const fn new(ex: Complex64, ey: Complex64) -> Self {
        Self { ex, ey }
    }

    pub fn real(ex: f64, ey: f64) -> Self {
        Self::new(Complex64::new(ex, 0.0), Complex64::new(ey, 0.0))
    }

    /// Unit linear polarization at angle `angle` from the x axis.
    pub fn linear(angle: f64) -> Self {
        Self::real(angle.cos(), angle.sin())
    }

    pub fn intensity(&self) -> f64 {
        self.ex.norm_sqr() + self.ey.norm_sqr()
    }

    pub fn is_finite(&self) -> bool {
        self.ex.is_finite() && self.ey.is_finite()
    }

    pub fn normalized(&self) -> Self {
        let n = self.intensity().sqrt();
        self.scale(Complex64::new(1.0 / n, 0.0))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.ex * s, self.ey * s)
    }

    /// Hermitian inner product `⟨self|other⟩`.
    pub fn dot(&self, other: &Self) -> Complex64 {
        self.ex.conj() * other.ex + self.ey.conj() * other.ey
    }
}

/// A 2×2 complex transfer matrix acting on [`JonesVector`]s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JonesMatrix {
    pub xx: Complex64,
    pub xy: Complex64,
    pub yx: Complex64,
    pub yy: Complex64,
}

impl JonesMatrix {
    pub const fn new(xx: Complex64, xy: Complex64, yx: Complex64, yy: Complex64) -> Self {
        Self { xx, xy, yx, yy }
    }

    pub fn real(xx: f64, xy: f64, yx: f64, yy: f64) -> Self {
        Self::new(
            Complex64::new(xx, 0.0),
            Complex64::new(xy, 0.0),
            Complex64::new(yx, 0.0),
            Complex64::new(yy, 0.0),
        )
    }

    pub const fn identity() -> Self {
        Self::new(ONE, ZERO, ZERO, ONE)
    }

    pub const fn zero() -> Self {
        Self::new(ZERO, ZERO, ZERO, ZERO)
    }

    pub fn scalar(s: Complex64) -> Self {
        Self::new(s, ZERO, ZERO, s)
    }

    /// Outer product `u vᵀ` of two real unit vectors.
    pub fn dyad(u: (f64, f64), v: (f64, f64)) -> Self {
        Self::real(u.0 * v.0, u.0 * v.1, u.1 * v.0, u.1 * v.1)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.xx * s, self.xy * s, self.yx * s, self.yy * s)
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.xx, self.yx, self.xy, self.yy)
    }

    pub fn adjoint(&self) -> Self {
        Self::new(
            self.xx.conj(),
            self.yx.conj(),
            self.xy.conj(),
            self.yy.conj(),
        )
    }

    pub fn trace(&self) -> Complex64 {
        self.xx + self.yy
    }

    pub fn entries(&self) -> [Complex64; 4] {
        [self.xx, self.xy, self.yx, self.yy]
    }

    pub fn from_entries(e: [Complex64; 4]) -> Self {
        Self::new(e[0], e[1], e[2], e[3])
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.entries().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.entries()
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.entries().iter().all(|z| z.is_finite())
    }

    /// Largest singular value, from the eigenvalues of `M†M`.
    pub fn spectral_norm(&self) -> f64 {
        let h = self.adjoint() * *self;
        let a = h.xx.re;
        let d = h.yy.re;
        let b = h.xy.norm();
        let mean = 0.5 * (a + d);
        let disc = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        (mean + disc).max(0.0).sqrt()
    }

    /// Distance from the nearest multiple of the identity, relative to the
    /// mean diagonal modulus: `max(|m_xy|, |m_yx|, |m_xx - m_yy|) / mean|diag|`.
    pub fn identity_deviation(&self) -> f64 {
        let diag = 0.5 * (self.xx.norm() + self.yy.norm());
        let off = self
            .xy
            .norm()
            .max(self.yx.norm())
            .max((self.xx - self.yy).norm());
        if diag == 0.0 {
            if off == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            off / diag
        }
    }
}

impl Mul for JonesMatrix {
    type Output = JonesMatrix;

    fn mul(self, o: JonesMatrix) -> JonesMatrix {
        JonesMatrix::new(
            self.xx * o.xx + self.xy * o.yx,
            self.xx * o.xy + self.xy * o.yy,
            self.yx * o.xx + self.yy * o.yx,
            self.yx * o.xy + self.yy * o.yy,
        )
    }
}

impl Mul<JonesVector> for JonesMatrix {
    type Output = JonesVector;

    fn mul(self, v: JonesVector) -> JonesVector {
        JonesVector::new(
            self.xx * v.ex + self.xy * v.ey,
            self.yx * v.ex + self.yy * v.ey,
        )
    }
}

impl Add for JonesMatrix {
    type Output = JonesMatrix;

    fn add(self, o: JonesMatrix) -> JonesMatrix {
        JonesMatrix::new(
            self.xx + o.xx,
            self.xy + o.xy,
            self.yx + o.yx,
            self.yy + o.yy,
        )
    }
}

impl Sub for JonesMatrix {
    type Output = JonesMatrix;

    fn sub(self, o: JonesMatrix) -> JonesMatrix {
        JonesMatrix::new(
            self.xx - o.xx,
            self.xy - o.xy,
            self.yx - o.yx,
            self.yy - o.yy,
        )
    }
}

impl fmt::Display for JonesMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[[{:.6e}, {:.6e}], [{:.6e}, {:.6e}]]",
            self.xx, self.xy, self.yx, self.yy
        )
    }
}

/// Two-dimensional rotation `[[cos φ, -sin φ], [sin φ, cos φ]]`.
pub fn rotation(phi: f64) -> JonesMatrix {
    let (s, c) = phi.sin_cos();
    JonesMatrix::real(c, -s, s, c)
}

/// Linear polarizer with transmission axis at angle `beta` from x.
pub fn polarizer(beta: f64) -> JonesMatrix {
    let (s, c) = beta.sin_cos();
    JonesMatrix::dyad((c, s), (c, s))
}

/// Polarization ellipse of a fully polarized field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationEllipse {
    /// Major-axis orientation in `[-π/2, π/2)`; 0 for circular light.
    pub orientation: f64,
    /// Signed minor/major ratio in `[-1, 1]`.
    pub axis_ratio: f64,
    pub intensity: f64,
}

/// Wraps an orientation into `[-π/2, π/2)`.
pub fn wrap_orientation(psi: f64) -> f64 {
    let mut w = (psi + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    if w >= FRAC_PI_2 {
        w -= PI;
    }
    w
}

/// Signed difference `a - b` of two orientations, folded into `[-π/2, π/2)`.
pub fn orientation_difference(a: f64, b: f64) -> f64 {
    wrap_orientation(a - b)
}

pub fn ellipse_of(v: &JonesVector) -> Result<PolarizationEllipse, JonesError> {
    if !v.is_finite() {
        return Err(JonesError::NonFinite);
    }
    let ix = v.ex.norm_sqr();
    let iy = v.ey.norm_sqr();
    let intensity = ix + iy;
    if intensity <= 0.0 {
        return Err(JonesError::ZeroIntensity);
    }
    let cross = v.ex * v.ey.conj();
    let s3 = (2.0 * cross.im / intensity).clamp(-1.0, 1.0);
    let axis_ratio = (0.5 * s3.asin()).tan().clamp(-1.0, 1.0);
    let orientation = if axis_ratio.abs() >= 1.0 - 1e-12 {
        0.0
    } else {
        wrap_orientation(0.5 * (2.0 * cross.re).atan2(ix - iy))
    };
    Ok(PolarizationEllipse {
        orientation,
        axis_ratio,
        intensity,
    })
}
