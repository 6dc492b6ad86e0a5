#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use pbsim::film::{FilmModel, TabulatedFilm};
use pbsim::jones::{ellipse_of, JonesMatrix, JonesVector};
use pbsim::optics::FieldMap;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Brute-force fringe visibility: 1° scan of `β₁` with parabolic
/// refinement of the extrema.
pub fn brute_force_visibility(map: &FieldMap) -> f64 {
    let rate = |b1: f64| -> f64 {
        let e = JonesVector::linear(b1);
        map.fields.iter().map(|f| e.dot(f).norm_sqr()).sum()
    };
    let h = 1f64.to_radians();
    let samples: Vec<f64> = (0..180).map(|i| rate(i as f64 * h)).collect();
    let at = |i: isize| samples[i.rem_euclid(180) as usize];
    let refine = |i: usize| -> f64 {
        let (l, c, r) = (at(i as isize - 1), at(i as isize), at(i as isize + 1));
        let den = l - 2.0 * c + r;
        if den == 0.0 {
            return c;
        }
        let off = 0.5 * (l - r) / den;
        c - 0.25 * (l - r) * off
    };
    let imax = (0..180)
        .max_by(|&a, &b| samples[a].total_cmp(&samples[b]))
        .unwrap();
    let imin = (0..180)
        .min_by(|&a, &b| samples[a].total_cmp(&samples[b]))
        .unwrap();
    let cmax = refine(imax);
    let cmin = refine(imin).max(0.0);
    (cmax - cmin) / (cmax + cmin)
}

/// Field map with random Jones vectors on an `n × n` grid, paired with
/// `β₂`.
pub fn random_field_map(rng: &mut StdRng, n: usize, beta2: f64) -> FieldMap {
    let axis: Vec<f64> = (0..n).map(|i| (i as f64 - (n / 2) as f64) * 1e-6).collect();
    let mut c = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let fields: Vec<JonesVector> = (0..n * n).map(|_| JonesVector::new(c(), c())).collect();
    let ellipses = fields.iter().map(|f| ellipse_of(f).ok()).collect();
    FieldMap {
        input_pol: JonesVector::linear(beta2 + FRAC_PI_2),
        wavenumber: 2.0 * PI / 797.0,
        half_extent_rad: 1e-3,
        axis,
        fields,
        ellipses,
    }
}

pub fn seeded(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Isotropic film with a Gaussian transmission bump centred on `q0`,
/// tabulated at a single wavelength.
pub fn gaussian_bump_film(
    lambda: f64,
    extent: f64,
    q0: (f64, f64),
    sigma: f64,
    points: usize,
) -> FilmModel {
    let axis: Vec<f64> = (0..points)
        .map(|i| -extent + 2.0 * extent * i as f64 / (points - 1) as f64)
        .collect();
    let mut values = Vec::with_capacity(points * points);
    for &x in &axis {
        for &y in &axis {
            let r2 = (x - q0.0).powi(2) + (y - q0.1).powi(2);
            values.push(JonesMatrix::scalar(Complex64::new(
                (-r2 / (2.0 * sigma * sigma)).exp(),
                0.0,
            )));
        }
    }
    let table = TabulatedFilm::new(vec![lambda], axis.clone(), axis, values).unwrap();
    FilmModel::from_table(700.0, table).unwrap()
}

/// Constant isotropic film.
pub fn constant_film(lambda: f64, extent: f64, value: JonesMatrix) -> FilmModel {
    let axis = vec![-extent, extent];
    let table = TabulatedFilm::new(vec![lambda], axis.clone(), axis, vec![value; 4]).unwrap();
    FilmModel::from_table(700.0, table).unwrap()
}

/// Intensity-weighted fraction of pixels satisfying `pred`.
pub fn weighted_fraction(map: &FieldMap, pred: impl Fn(f64, f64) -> bool) -> f64 {
    let mut total = 0.0;
    let mut hit = 0.0;
    for (f, e) in map.fields.iter().zip(&map.ellipses) {
        let w = f.intensity();
        total += w;
        if let Some(e) = e {
            if pred(e.orientation, e.axis_ratio) {
                hit += w;
            }
        }
    }
    hit / total
}
