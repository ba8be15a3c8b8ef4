//! Quadrature plumbing: Gauss-Legendre nodes, product rules on spheres and
//! tori, composite panel integration with doubling error control, and a
//! fixed-step RK4 driver for integrals along rays.

use serde::{Deserialize, Serialize};

use crate::linalg::Vec3;

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    let m = (n + 1) / 2;
    for i in 0..m {
        // Tricomi initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            pp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / pp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * pp * pp);
        out.push((-x, w));
        if i != n - 1 - i {
            out.push((x, w));
        }
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// Quadrature orders for the closed-surface integrals.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss-Legendre order in cos(theta) on spheres.
    pub sphere_polar_order: usize,
    /// Trapezoid points in the azimuthal angle on spheres.
    pub sphere_azimuthal_points: usize,
    /// Trapezoid points per circle for torus slices.
    pub torus_points_per_circle: usize,
    /// Absolute error goal reported alongside results.
    pub tolerance: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            sphere_polar_order: 24,
            sphere_azimuthal_points: 48,
            torus_points_per_circle: 32,
            tolerance: 1e-9,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> bool {
        self.sphere_polar_order >= 8
            && self.sphere_azimuthal_points >= 8
            && self.torus_points_per_circle >= 8
            && self.tolerance > 0.0
    }
}

/// Integrate `f(point, outward_normal)` against the area element of the
/// sphere |x - center| = radius. Gauss-Legendre in cos(theta), trapezoid in
/// phi; spectrally accurate for smooth integrands.
pub fn sphere_integral(
    spec: &QuadratureSpec,
    center: Vec3,
    radius: f64,
    axis: Vec3,
    mut f: impl FnMut(Vec3, Vec3) -> f64,
) -> f64 {
    let n_polar = spec.sphere_polar_order;
    let n_az = spec.sphere_azimuthal_points;
    let e3 = axis.normalized();
    let e1 = e3.any_orthogonal();
    let e2 = e3.cross(e1);
    let gl = gauss_legendre(n_polar);
    let dphi = 2.0 * std::f64::consts::PI / n_az as f64;
    let mut total = 0.0;
    for &(ct, w) in &gl {
        let st = (1.0 - ct * ct).sqrt();
        for k in 0..n_az {
            let phi = dphi * k as f64;
            let n_hat = e1 * (st * phi.cos()) + e2 * (st * phi.sin()) + e3 * ct;
            let x = center + n_hat * radius;
            total += w * dphi * f(x, n_hat);
        }
    }
    total * radius * radius
}

/// Integrate `f(point)` against the area element of a fundamental cell of a
/// rank-2 lattice offset transversally by `offset` (a point on the slice).
/// Pure trapezoid in both periodic directions.
pub fn torus_integral(
    spec: &QuadratureSpec,
    g1: Vec3,
    g2: Vec3,
    offset: Vec3,
    mut f: impl FnMut(Vec3) -> f64,
) -> f64 {
    let n = spec.torus_points_per_circle;
    let area = g1.cross(g2).norm();
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = offset + g1 * (i as f64 / n as f64) + g2 * (j as f64 / n as f64);
            total += f(x);
        }
    }
    total * area / (n * n) as f64
}

/// Composite Gauss-Legendre panel integration of a vector-valued integrand
/// over [a, b] with a doubling error estimate: returns (value on 2n panels,
/// max component difference against n panels).
pub fn panel_integrate<const K: usize>(
    mut f: impl FnMut(f64) -> [f64; K],
    a: f64,
    b: f64,
    panels: usize,
) -> ([f64; K], f64) {
    let coarse = panel_pass(&mut f, a, b, panels);
    let fine = panel_pass(&mut f, a, b, panels * 2);
    let mut err = 0.0f64;
    for i in 0..K {
        err = err.max((fine[i] - coarse[i]).abs());
    }
    (fine, err)
}

fn panel_pass<const K: usize>(
    f: &mut impl FnMut(f64) -> [f64; K],
    a: f64,
    b: f64,
    panels: usize,
) -> [f64; K] {
    let gl = gauss_legendre(6);
    let mut acc = [0.0; K];
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + h * p as f64;
        let mid = lo + 0.5 * h;
        for &(t, w) in &gl {
            let s = mid + 0.5 * h * t;
            let v = f(s);
            for i in 0..K {
                acc[i] += 0.5 * h * w * v[i];
            }
        }
    }
    acc
}

/// Classic fixed-step RK4 for y' = f(s, y) from s0 to s1.
pub fn rk4<const K: usize>(
    f: &impl Fn(f64, &[f64; K]) -> [f64; K],
    s0: f64,
    s1: f64,
    steps: usize,
    y0: [f64; K],
) -> [f64; K] {
    let h = (s1 - s0) / steps as f64;
    let mut y = y0;
    let mut s = s0;
    for _ in 0..steps {
        let k1 = f(s, &y);
        let k2 = f(s + 0.5 * h, &add_scaled(&y, &k1, 0.5 * h));
        let k3 = f(s + 0.5 * h, &add_scaled(&y, &k2, 0.5 * h));
        let k4 = f(s + h, &add_scaled(&y, &k3, h));
        for i in 0..K {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        s += h;
    }
    y
}

fn add_scaled<const K: usize>(y: &[f64; K], dy: &[f64; K], h: f64) -> [f64; K] {
    let mut out = *y;
    for i in 0..K {
        out[i] += h * dy[i];
    }
    out
}

/// Deterministic, evenly distributed directions on S^2 (golden-angle spiral).
pub fn golden_spiral_directions(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - (5.0f64).sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * k as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let gl = gauss_legendre(8);
        // degree 15 is the highest exact degree for 8 nodes
        let integral: f64 = gl.iter().map(|&(x, w)| w * x.powi(14)).sum();
        assert_relative_eq!(integral, 2.0 / 15.0, epsilon = 1e-13);
        let weight_sum: f64 = gl.iter().map(|&(_, w)| w).sum();
        assert_relative_eq!(weight_sum, 2.0, epsilon = 1e-13);
    }

    #[test]
    fn sphere_integral_of_one_is_area() {
        let spec = QuadratureSpec::default();
        let area = sphere_integral(&spec, Vec3::ZERO, 2.0, Vec3::new(0.0, 0.0, 1.0), |_, _| 1.0);
        assert_relative_eq!(area, 16.0 * std::f64::consts::PI, epsilon = 1e-10);
    }

    #[test]
    fn sphere_integral_of_linear_harmonic_vanishes() {
        let spec = QuadratureSpec::default();
        let v = sphere_integral(&spec, Vec3::ZERO, 1.0, Vec3::new(0.3, 0.5, 1.0), |x, _| x.z);
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn torus_integral_of_harmonics_vanishes() {
        let spec = QuadratureSpec::default();
        let g1 = Vec3::new(0.0, 1.0, 0.0);
        let g2 = Vec3::new(0.0, 0.0, 1.0);
        let v = torus_integral(&spec, g1, g2, Vec3::new(1.0, 0.0, 0.0), |x| {
            (2.0 * std::f64::consts::PI * 3.0 * x.y).cos()
        });
        assert!(v.abs() < 1e-12);
        let c = torus_integral(&spec, g1, g2, Vec3::ZERO, |_| 2.5);
        assert_relative_eq!(c, 2.5, epsilon = 1e-13);
    }

    #[test]
    fn panel_integration_converges() {
        let (v, err) = panel_integrate(|s| [s.sin()], 0.0, 1.0, 8);
        assert_relative_eq!(v[0], 1.0 - 1.0f64.cos(), epsilon = 1e-13);
        assert!(err < 1e-13);
    }

    #[test]
    fn rk4_solves_exponential() {
        let y = rk4(&|_, y: &[f64; 1]| [y[0]], 0.0, 1.0, 128, [1.0]);
        assert_relative_eq!(y[0], std::f64::consts::E, epsilon = 1e-9);
        // fourth-order convergence under step halving
        let coarse = rk4(&|_, y: &[f64; 1]| [y[0]], 0.0, 1.0, 16, [1.0]);
        let fine = rk4(&|_, y: &[f64; 1]| [y[0]], 0.0, 1.0, 32, [1.0]);
        let e = std::f64::consts::E;
        let ratio = (coarse[0] - e).abs() / (fine[0] - e).abs();
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn spiral_directions_are_unit_and_spread() {
        let dirs = golden_spiral_directions(100);
        for d in &dirs {
            assert_relative_eq!(d.norm(), 1.0, epsilon = 1e-12);
        }
        let mean = dirs.iter().fold(Vec3::ZERO, |a, &b| a + b) / 100.0;
        assert!(mean.norm() < 0.05);
    }
}
