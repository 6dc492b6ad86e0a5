//! Cubature rules over the telescope aperture disc `|q₂| ≤ R`.
//!
//! Both rules are invariant under the square-lattice point group, so any
//! integrand with that symmetry integrates to an exactly symmetric result
//! (up to floating-point summation order).

use std::f64::consts::PI;

/// One cubature node in the `q₂` plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Gauss–Legendre in radius times a shifted uniform rule in azimuth.
///
/// `azimuthal` is rounded up to a multiple of 8 and the angles sit at
/// `(j + ½)·2π/N`, which makes the node set closed under the lattice
/// symmetries.
pub fn polar_disc(radius: f64, radial: usize, azimuthal: usize) -> Vec<Node> {
    let radial = radial.max(1);
    let azimuthal = azimuthal.max(8).div_ceil(8) * 8;
    let (xs, ws) = gauss_legendre(radial);
    let dphi = 2.0 * PI / azimuthal as f64;
    let mut nodes = Vec::with_capacity(radial * azimuthal);
    for (xg, wg) in xs.iter().zip(&ws) {
        let r = 0.5 * radius * (xg + 1.0);
        let wr = 0.5 * radius * wg * r * dphi;
        for j in 0..azimuthal {
            let (s, c) = ((j as f64 + 0.5) * dphi).sin_cos();
            nodes.push(Node {
                x: r * c,
                y: r * s,
                weight: wr,
            });
        }
    }
    nodes
}

/// Tensor-product midpoint rule on the bounding square with a sharp disc
/// mask.
pub fn cartesian_disc(radius: f64, points: usize) -> Vec<Node> {
    let points = points.max(1);
    let h = 2.0 * radius / points as f64;
    let center = 0.5 * (points as f64 - 1.0);
    let coords: Vec<f64> = (0..points).map(|i| (i as f64 - center) * h).collect();
    let r2 = radius * radius;
    let mut nodes = Vec::new();
    for &x in &coords {
        for &y in &coords {
            if x * x + y * y <= r2 {
                nodes.push(Node {
                    x,
                    y,
                    weight: h * h,
                });
            }
        }
    }
    nodes
}
