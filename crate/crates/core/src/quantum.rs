//! Post-selected two-photon polarization states, coincidence rates and
//! fringe visibilities.
//!
//! Two-qubit basis order is photon 1 ⊗ photon 2 with index `2a + b`, where
//! `X = 0` and `Y = 1`: `|XX⟩, |XY⟩, |YX⟩, |YY⟩`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::jones::{wrap_orientation, JonesMatrix, JonesVector};
use crate::optics::FieldMap;

#[derive(Debug, Error, PartialEq)]
pub enum QuantumError {
    #[error("all transmission amplitudes vanish: nothing survives post-selection")]
    NoPostselection,
    #[error("invalid Gram matrix: {0}")]
    InvalidGram(String),
    #[error("invalid density matrix: {0}")]
    InvalidState(String),
    #[error("coincidence matrix vanishes: visibility undefined")]
    UndefinedVisibility,
    #[error(
        "field map was computed for input polarization ({found}) but beta2 = {beta2:.6} rad \
         requires linear polarization at beta2 + 90 deg"
    )]
    PairingMismatch { beta2: f64, found: String },
}

pub type Result<T> = std::result::Result<T, QuantumError>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiphotonState {
    pub amplitudes: [Complex64; 4],
}

/// `(|XY⟩ − |YX⟩)/√2`.
pub fn singlet() -> BiphotonState {
    let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
    BiphotonState {
        amplitudes: [ZERO, s, -s, ZERO],
    }
}

impl BiphotonState {
    pub fn new(amplitudes: [Complex64; 4]) -> Self {
        Self { amplitudes }
    }

    pub fn product(a: &JonesVector, b: &JonesVector) -> Self {
        Self {
            amplitudes: [a.ex * b.ex, a.ex * b.ey, a.ey * b.ex, a.ey * b.ey],
        }
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(Complex64::norm_sqr)
            .sum::<f64>()
            .sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Self {
            amplitudes: self.amplitudes.map(|a| a / n),
        }
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &Self) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// Applies `m1 ⊗ m2`.
    pub fn transformed(&self, m1: &JonesMatrix, m2: &JonesMatrix) -> Self {
        let op = kron(m1, m2);
        let v = op * nalgebra::Vector4::from(self.amplitudes);
        Self {
            amplitudes: [v[0], v[1], v[2], v[3]],
        }
    }

    pub fn density_matrix(&self) -> Matrix4<Complex64> {
        let v = nalgebra::Vector4::from(self.amplitudes);
        v * v.adjoint()
    }
}

pub fn kron(a: &JonesMatrix, b: &JonesMatrix) -> Matrix4<Complex64> {
    let ea = [[a.xx, a.xy], [a.yx, a.yy]];
    let eb = [[b.xx, b.xy], [b.yx, b.yy]];
    Matrix4::from_fn(|r, c| ea[r / 2][c / 2] * eb[r % 2][c % 2])
}

/// Solid labels in Gram-matrix order.
pub const SOLID_LABELS: [&str; 4] = ["xx", "yx", "xy", "yy"];

/// Overlaps `G[(ab),(cd)] = ⟨S_cd|S_ab⟩` between final solid states, indexed
/// in [`SOLID_LABELS`] order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GramMatrix {
    matrix: Matrix4<Complex64>,
}

impl GramMatrix {
    pub fn new(matrix: Matrix4<Complex64>) -> Result<Self> {
        if matrix
            .iter()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(QuantumError::InvalidGram("non-finite entry".into()));
        }
        for i in 0..4 {
            if (matrix[(i, i)] - Complex64::new(1.0, 0.0)).norm() > TOLERANCE {
                return Err(QuantumError::InvalidGram(format!(
                    "diagonal entry {} is {}, expected 1",
                    SOLID_LABELS[i],
                    matrix[(i, i)]
                )));
            }
            for j in 0..4 {
                if (matrix[(i, j)] - matrix[(j, i)].conj()).norm() > TOLERANCE {
                    return Err(QuantumError::InvalidGram(format!(
                        "not Hermitian at ({}, {})",
                        SOLID_LABELS[i], SOLID_LABELS[j]
                    )));
                }
            }
        }
        let min = SymmetricEigen::new(hermitian_part(&matrix))
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min < -TOLERANCE {
            return Err(QuantumError::InvalidGram(format!(
                "not positive semidefinite (smallest eigenvalue {min:.3e})"
            )));
        }
        Ok(Self { matrix })
    }

    /// Orthogonal solid states: full which-way information.
    pub fn orthogonal() -> Self {
        Self {
            matrix: Matrix4::identity(),
        }
    }

    /// Identical solid states: no which-way information.
    pub fn identical() -> Self {
        Self {
            matrix: Matrix4::from_element(Complex64::new(1.0, 0.0)),
        }
    }

    /// `(1 − c)·I + c·J` for a real coherence `c ∈ [0, 1]`.
    pub fn uniform(coherence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&coherence) {
            return Err(QuantumError::InvalidGram(format!(
                "coherence {coherence} outside [0, 1]"
            )));
        }
        let c = Complex64::new(coherence, 0.0);
        Ok(Self {
            matrix: Matrix4::from_fn(|i, j| if i == j { Complex64::new(1.0, 0.0) } else { c }),
        })
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.matrix
    }
}

fn hermitian_part(m: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    (m + m.adjoint()).map(|z| z * 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostselectedState {
    pub rho: Matrix4<Complex64>,
    /// Trace of the unnormalized post-selected operator, `½·Σ|t_ab|²`.
    pub success_weight: f64,
}

impl PostselectedState {
    /// Wraps a density matrix after checking Hermiticity, trace and
    /// positivity.
    pub fn from_density(rho: Matrix4<Complex64>) -> Result<Self> {
        let herm = (rho - rho.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if herm > TOLERANCE {
            return Err(QuantumError::InvalidState(format!(
                "not Hermitian ({herm:.3e})"
            )));
        }
        let tr = rho.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > TOLERANCE {
            return Err(QuantumError::InvalidState(format!("trace {tr}")));
        }
        if min_eigenvalue(&rho) < -TOLERANCE {
            return Err(QuantumError::InvalidState(
                "not positive semidefinite".into(),
            ));
        }
        Ok(Self {
            rho,
            success_weight: 1.0,
        })
    }

    pub fn pure(state: &BiphotonState) -> Self {
        Self {
            rho: state.normalized().density_matrix(),
            success_weight: 1.0,
        }
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn purity(&self) -> f64 {
        (self.rho * self.rho).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.rho)
    }

    /// Photon-1 matrix `A_ij = ⟨i, β₂|ρ|j, β₂⟩` left after projecting photon
    /// 2 on linear polarization `β₂`.
    pub fn conditional(&self, beta2: f64) -> [[Complex64; 2]; 2] {
        let e = [beta2.cos(), beta2.sin()];
        let mut a = [[ZERO; 2]; 2];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                for k in 0..2 {
                    for l in 0..2 {
                        *v += self.rho[(2 * i + k, 2 * j + l)] * (e[k] * e[l]);
                    }
                }
            }
        }
        a
    }
}

fn min_eigenvalue(m: &Matrix4<Complex64>) -> f64 {
    SymmetricEigen::new(hermitian_part(m))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Post-selected state after photon 1 crosses a film with transmission
/// amplitudes `t` while leaving the solid in states with overlaps `gram`.
pub fn postselect_channel(t: &JonesMatrix, gram: &GramMatrix) -> Result<PostselectedState> {
    if !t.is_finite() {
        return Err(QuantumError::InvalidState(
            "non-finite transmission amplitude".into(),
        ));
    }
    if t.entries().iter().all(|z| *z == ZERO) {
        return Err(QuantumError::NoPostselection);
    }
    let s = FRAC_1_SQRT_2;
    // label order xx, yx, xy, yy
    let coeffs = [t.xx * s, t.yx * s, -t.xy * s, -t.yy * s];
    let targets = [1usize, 3, 0, 2];
    let g = gram.matrix();
    let mut rho = Matrix4::<Complex64>::zeros();
    for p in 0..4 {
        for q in 0..4 {
            rho[(targets[p], targets[q])] += coeffs[p] * coeffs[q].conj() * g[(p, q)];
        }
    }
    let weight = rho.trace().re;
    Ok(PostselectedState {
        rho: rho.map(|z| z / weight),
        success_weight: weight,
    })
}

/// Wootters concurrence.
pub fn concurrence(state: &PostselectedState) -> f64 {
    let rho = hermitian_part(&state.rho);
    let eig = SymmetricEigen::new(rho);
    let sqrt_diag = eig
        .eigenvalues
        .map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0));
    let v = eig.eigenvectors;
    let sqrt_rho = v * Matrix4::from_diagonal(&sqrt_diag) * v.adjoint();
    let flip = Matrix4::from_fn(|r, c| {
        if r + c == 3 {
            Complex64::new(if r == 1 || r == 2 { 1.0 } else { -1.0 }, 0.0)
        } else {
            ZERO
        }
    });
    let tilde = flip * rho.conjugate() * flip;
    let m = hermitian_part(&(sqrt_rho * tilde * sqrt_rho));
    let mut l: Vec<f64> = SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .map(|x| x.max(0.0).sqrt())
        .collect();
    l.sort_by(|a, b| b.total_cmp(a));
    (l[0] - l[1] - l[2] - l[3]).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityResult {
    pub beta2: f64,
    pub visibility: f64,
    pub beta1_max: f64,
    pub beta1_min: f64,
    pub c_max: f64,
    pub c_min: f64,
}

/// Real symmetric 2×2 coincidence form `C(β₁) = xᵀ·[[a, b], [b, d]]·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceForm {
    pub a: f64,
    pub b: f64,
    pub d: f64,
}

impl CoincidenceForm {
    pub fn from_conditional(m: &[[Complex64; 2]; 2]) -> Self {
        Self {
            a: m[0][0].re,
            b: 0.5 * (m[0][1].re + m[1][0].re),
            d: m[1][1].re,
        }
    }

    pub fn rate(&self, beta1: f64) -> f64 {
        let (s, c) = beta1.sin_cos();
        (self.a * c * c + 2.0 * self.b * s * c + self.d * s * s).max(0.0)
    }

    pub fn visibility(&self, beta2: f64) -> Result<VisibilityResult> {
        let sum = self.a + self.d;
        if !(sum > f64::MIN_POSITIVE) {
            return Err(QuantumError::UndefinedVisibility);
        }
        let half = 0.5 * (self.a - self.d);
        let radius = half.hypot(self.b);
        let c_max = 0.5 * sum + radius;
        let c_min = (0.5 * sum - radius).max(0.0);
        let beta1_max = wrap_orientation(0.5 * (2.0 * self.b).atan2(self.a - self.d));
        Ok(VisibilityResult {
            beta2,
            visibility: ((c_max - c_min) / (c_max + c_min)).clamp(0.0, 1.0),
            beta1_max,
            beta1_min: wrap_orientation(beta1_max + FRAC_PI_2),
            c_max,
            c_min,
        })
    }
}

/// Monomode coincidence rate `Tr[ρ·(P(β₁) ⊗ P(β₂))]`.
pub fn coincidence_rate_state(state: &PostselectedState, beta1: f64, beta2: f64) -> f64 {
    CoincidenceForm::from_conditional(&state.conditional(beta2)).rate(beta1)
}

pub fn visibility_state(state: &PostselectedState, beta2: f64) -> Result<VisibilityResult> {
    CoincidenceForm::from_conditional(&state.conditional(beta2)).visibility(beta2)
}

/// Detector weighting over the `q₃` grid.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DetectorWeights {
    #[default]
    Uniform,
    /// Pixels with `|θ₃| ≤ radius` only.
    Iris { radius_rad: f64 },
}

impl DetectorWeights {
    fn weight(&self, map: &FieldMap, idx: usize) -> f64 {
        match self {
            DetectorWeights::Uniform => 1.0,
            DetectorWeights::Iris { radius_rad } => {
                let (qx, qy) = map.q3(idx);
                let theta = (qx.hypot(qy) / map.wavenumber).min(1.0).asin();
                if theta <= *radius_rad {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

fn check_pairing(map: &FieldMap, beta2: f64) -> Result<()> {
    let expected = JonesVector::linear(beta2 + FRAC_PI_2);
    let overlap = expected.dot(&map.input_pol).norm_sqr();
    if (overlap - 1.0).abs() > 1e-9 {
        return Err(QuantumError::PairingMismatch {
            beta2,
            found: format!("{}, {}", map.input_pol.ex, map.input_pol.ey),
        });
    }
    Ok(())
}

fn pairwise_sum(items: &[[f64; 3]]) -> [f64; 3] {
    const LEAF: usize = 256;
    if items.len() <= LEAF {
        let mut acc = [0.0; 3];
        for it in items {
            for (a, v) in acc.iter_mut().zip(it) {
                *a += v;
            }
        }
        return acc;
    }
    let (l, r) = items.split_at(items.len() / 2);
    let (a, b) = rayon::join(|| pairwise_sum(l), || pairwise_sum(r));
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// `Re Σ w·E·E†` over the map.
pub fn coincidence_form(map: &FieldMap, weights: &DetectorWeights) -> CoincidenceForm {
    let terms: Vec<[f64; 3]> = map
        .fields
        .iter()
        .enumerate()
        .map(|(idx, e)| {
            let w = weights.weight(map, idx);
            [
                w * e.ex.norm_sqr(),
                w * (e.ex * e.ey.conj()).re,
                w * e.ey.norm_sqr(),
            ]
        })
        .collect();
    let [a, b, d] = pairwise_sum(&terms);
    CoincidenceForm { a, b, d }
}

/// Multimode coincidence rate for a map computed with input `β₂ + 90°`.
pub fn coincidence_rate_map(
    map: &FieldMap,
    beta1: f64,
    beta2: f64,
    weights: &DetectorWeights,
) -> Result<f64> {
    check_pairing(map, beta2)?;
    Ok(coincidence_form(map, weights).rate(beta1))
}

pub fn visibility_map(
    map: &FieldMap,
    beta2: f64,
    weights: &DetectorWeights,
) -> Result<VisibilityResult> {
    check_pairing(map, beta2)?;
    coincidence_form(map, weights).visibility(beta2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jones::rotation;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn singlet_is_rotation_invariant() {
        let s = singlet();
        assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-15);
        assert_eq!(s.amplitudes[0], ZERO);
        let r = rotation(0.37);
        let t = s.transformed(&r, &r);
        assert_abs_diff_eq!(s.overlap(&t).norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn case_ii_identity_gives_singlet() {
        let st = postselect_channel(&JonesMatrix::identity(), &GramMatrix::identical()).unwrap();
        let target = singlet().density_matrix();
        assert!((st.rho - target).iter().all(|z| z.norm() < 1e-12));
        assert_abs_diff_eq!(st.purity(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(concurrence(&st), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(st.success_weight, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn case_i_identity_gives_mixture() {
        let st = postselect_channel(&JonesMatrix::identity(), &GramMatrix::orthogonal()).unwrap();
        let mut target = Matrix4::zeros();
        target[(1, 1)] = c(0.5, 0.0);
        target[(2, 2)] = c(0.5, 0.0);
        assert!((st.rho - target).iter().all(|z| z.norm() < 1e-12));
        assert_abs_diff_eq!(concurrence(&st), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(
            visibility_state(&st, 0.0).unwrap().visibility,
            1.0,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(
            visibility_state(&st, PI / 4.0).unwrap().visibility,
            0.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn single_surviving_term_is_product() {
        let t = JonesMatrix::real(1.0, 0.0, 0.0, 0.0);
        let st = postselect_channel(&t, &GramMatrix::identical()).unwrap();
        assert_abs_diff_eq!(st.rho[(1, 1)].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(concurrence(&st), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_channel_is_an_error() {
        assert_eq!(
            postselect_channel(&JonesMatrix::zero(), &GramMatrix::identical()),
            Err(QuantumError::NoPostselection)
        );
    }

    #[test]
    fn gram_validation() {
        let mut m = Matrix4::identity();
        m[(0, 1)] = c(2.0, 0.0);
        m[(1, 0)] = c(2.0, 0.0);
        assert!(matches!(
            GramMatrix::new(m),
            Err(QuantumError::InvalidGram(_))
        ));
        let mut m = Matrix4::identity();
        m[(0, 1)] = c(0.0, 0.5);
        assert!(GramMatrix::new(m).is_err());
        m[(1, 0)] = c(0.0, -0.5);
        assert!(GramMatrix::new(m).is_ok());
        let mut m = Matrix4::identity();
        m[(2, 2)] = c(0.9, 0.0);
        assert!(GramMatrix::new(m).is_err());
        assert!(GramMatrix::uniform(1.2).is_err());
    }

    #[test]
    fn product_states_have_zero_concurrence() {
        let a = JonesVector::new(c(0.6, 0.1), c(0.2, -0.7)).normalized();
        let b = JonesVector::linear(1.1);
        let st = PostselectedState::pure(&BiphotonState::product(&a, &b));
        assert_abs_diff_eq!(concurrence(&st), 0.0, epsilon = 1e-7);
    }

    #[test]
    fn monomode_singlet_follows_malus() {
        let st = PostselectedState::pure(&singlet());
        for (b1, b2) in [(0.3f64, 1.2f64), (0.0, 0.0), (-0.4, 0.9)] {
            let expect = 0.5 * (b1 - b2).sin().powi(2);
            assert_abs_diff_eq!(coincidence_rate_state(&st, b1, b2), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn closed_form_extrema() {
        let f = CoincidenceForm {
            a: 3.0,
            b: 1.0,
            d: 1.0,
        };
        let v = f.visibility(0.2).unwrap();
        assert_abs_diff_eq!(f.rate(v.beta1_max), v.c_max, epsilon = 1e-12);
        assert_abs_diff_eq!(f.rate(v.beta1_min), v.c_min, epsilon = 1e-12);
        assert!(v.c_max >= v.c_min);
        let zero = CoincidenceForm {
            a: 0.0,
            b: 0.0,
            d: 0.0,
        };
        assert_eq!(zero.visibility(0.0), Err(QuantumError::UndefinedVisibility));
    }

    fn complex() -> impl Strategy<Value = Complex64> {
        (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| Complex64::new(a, b))
    }

    fn random_gram() -> impl Strategy<Value = GramMatrix> {
        proptest::collection::vec(complex(), 16).prop_map(|v| {
            // columns of a random 4×4 matrix, normalized, give a valid Gram matrix
            let b = Matrix4::from_iterator(v);
            let norms: Vec<f64> = (0..4).map(|j| b.column(j).norm()).collect();
            let g = Matrix4::from_fn(|i, j| b.column(j).dotc(&b.column(i)) / (norms[i] * norms[j]));
            let g = Matrix4::from_fn(|i, j| {
                if i == j {
                    Complex64::new(1.0, 0.0)
                } else {
                    g[(i, j)]
                }
            });
            GramMatrix::new(g).unwrap()
        })
    }

    proptest! {
        #[test]
        fn postselected_states_are_valid(
            e in proptest::collection::vec(complex(), 4),
            g in random_gram(),
        ) {
            let t = JonesMatrix::new(e[0], e[1], e[2], e[3]);
            prop_assume!(t.max_abs() > 1e-3);
            let st = postselect_channel(&t, &g).unwrap();
            prop_assert!(PostselectedState::from_density(st.rho).is_ok());
            prop_assert!(st.min_eigenvalue() > -1e-12);
            let cc = concurrence(&st);
            prop_assert!((0.0..=1.0).contains(&cc));
        }

        #[test]
        fn visibility_is_scale_invariant(
            e in proptest::collection::vec(complex(), 4),
            scale in complex(),
            beta2 in 0.0..PI,
        ) {
            let t = JonesMatrix::new(e[0], e[1], e[2], e[3]);
            prop_assume!(t.max_abs() > 1e-3 && scale.norm() > 1e-3);
            let g = GramMatrix::identical();
            let a = postselect_channel(&t, &g).unwrap();
            let b = postselect_channel(&t.scale(scale), &g).unwrap();
            if let (Ok(va), Ok(vb)) = (visibility_state(&a, beta2), visibility_state(&b, beta2)) {
                prop_assert!((va.visibility - vb.visibility).abs() < 1e-9);
            }
        }

        #[test]
        fn proportional_identity_keeps_full_visibility(
            s in complex(),
            beta2 in 0.0..PI,
        ) {
            prop_assume!(s.norm() > 1e-3);
            let st = postselect_channel(&JonesMatrix::scalar(s), &GramMatrix::identical()).unwrap();
            prop_assert!((visibility_state(&st, beta2).unwrap().visibility - 1.0).abs() < 1e-9);
            prop_assert!((concurrence(&st) - 1.0).abs() < 1e-9);
        }
    }
}
