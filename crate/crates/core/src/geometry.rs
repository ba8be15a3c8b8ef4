//! Lattices of rank 0/1/2 in R^3, the quotient base space B = R^3/L, the
//! antipodal involution and scene validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Vec3;

/// Minimum separation (in base-space units) below which two marked points are
/// considered coincident during validation.
pub const COINCIDENCE_TOL: f64 = 1e-9;

/// A lattice of rank 0, 1 or 2 in R^3. Rank 3 is excluded: the quotient must
/// stay non-compact in at least one direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    generators: Vec<Vec3>,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("degenerate lattice: {0}")]
    DegenerateLattice(String),
    #[error("point p_{index} lies on the fixed locus of the involution")]
    PointOnFixedLocus { index: usize },
    #[error("points p_{a} and p_{b} coincide modulo the lattice and the involution")]
    DuplicatePoint { a: usize, b: usize },
    #[error("{n} marked points exceeds the bound {max} for lattice rank {rank}")]
    TooManyPoints { n: usize, max: usize, rank: usize },
    #[error("epsilon must lie in (0, 1), got {0}")]
    BadEpsilon(f64),
}

impl Lattice {
    pub fn rank0() -> Lattice {
        Lattice { generators: Vec::new() }
    }

    pub fn new(generators: Vec<Vec3>) -> Result<Lattice, SceneError> {
        match generators.len() {
            0 => Ok(Lattice { generators }),
            1 => {
                if generators[0].norm2() <= COINCIDENCE_TOL * COINCIDENCE_TOL {
                    Err(SceneError::DegenerateLattice("zero generator".into()))
                } else {
                    Ok(Lattice { generators })
                }
            }
            2 => {
                let g00 = generators[0].norm2();
                let g11 = generators[1].norm2();
                let g01 = generators[0].dot(generators[1]);
                let gram_det = g00 * g11 - g01 * g01;
                if gram_det <= COINCIDENCE_TOL * g00.max(g11).max(1.0) {
                    Err(SceneError::DegenerateLattice(
                        "generators are linearly dependent".into(),
                    ))
                } else {
                    Ok(Lattice { generators })
                }
            }
            r => Err(SceneError::DegenerateLattice(format!(
                "rank {r} lattice; only rank 0, 1, 2 are admissible"
            ))),
        }
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn generators(&self) -> &[Vec3] {
        &self.generators
    }

    /// Coordinates of `x` in the lattice basis (length = rank), solved from
    /// the Gram system.
    fn lattice_coords(&self, x: Vec3) -> Vec<f64> {
        match self.rank() {
            0 => Vec::new(),
            1 => {
                let v = self.generators[0];
                vec![x.dot(v) / v.norm2()]
            }
            2 => {
                let v1 = self.generators[0];
                let v2 = self.generators[1];
                let (a, b, c) = (v1.norm2(), v1.dot(v2), v2.norm2());
                let det = a * c - b * b;
                let (p, q) = (x.dot(v1), x.dot(v2));
                vec![(c * p - b * q) / det, (a * q - b * p) / det]
            }
            _ => unreachable!(),
        }
    }

    /// Canonical representative of `x` in the half-open fundamental box:
    /// lattice coordinates in [-1/2, 1/2), ties at +1/2 mapped to -1/2.
    pub fn reduce(&self, x: Vec3) -> BasePoint {
        let coords = self.lattice_coords(x);
        let mut y = x;
        for (t, &g) in coords.iter().zip(self.generators.iter()) {
            let k = (t + 0.5).floor();
            if k != 0.0 {
                y = y - g * k;
            }
        }
        BasePoint { v: y }
    }

    /// Shortest distance on the quotient between two points, searching lattice
    /// translates in a +-2 cell block around the reduced difference.
    pub fn quotient_distance(&self, x: &BasePoint, y: &BasePoint) -> f64 {
        let d = self.reduce(x.v - y.v).v;
        match self.rank() {
            0 => d.norm(),
            1 => {
                let g = self.generators[0];
                let mut best = f64::INFINITY;
                for n in -2..=2 {
                    best = best.min((d - g * n as f64).norm());
                }
                best
            }
            2 => {
                let g1 = self.generators[0];
                let g2 = self.generators[1];
                let mut best = f64::INFINITY;
                for n1 in -2..=2 {
                    for n2 in -2..=2 {
                        best = best.min((d - g1 * n1 as f64 - g2 * n2 as f64).norm());
                    }
                }
                best
            }
            _ => unreachable!(),
        }
    }

    /// The fixed points of the antipodal involution: representatives of
    /// (1/2 L)/L. There are 2^rank of them.
    pub fn fixed_points(&self) -> Vec<BasePoint> {
        let mut out = vec![self.reduce(Vec3::ZERO)];
        match self.rank() {
            0 => {}
            1 => out.push(self.reduce(self.generators[0] * 0.5)),
            2 => {
                out.push(self.reduce(self.generators[0] * 0.5));
                out.push(self.reduce(self.generators[1] * 0.5));
                out.push(self.reduce((self.generators[0] + self.generators[1]) * 0.5));
            }
            _ => unreachable!(),
        }
        out
    }

    /// The antipodal map tau(x) = -x on the quotient.
    pub fn antipodal(&self, x: &BasePoint) -> BasePoint {
        self.reduce(-x.v)
    }

    pub fn is_fixed_point(&self, x: &BasePoint) -> bool {
        self.quotient_distance(x, &self.antipodal(x)) < COINCIDENCE_TOL
    }

    /// Unit vector spanning the axis (rank 1) used for transverse coordinates.
    pub fn axis(&self) -> Option<Vec3> {
        (self.rank() == 1).then(|| self.generators[0].normalized())
    }

    /// Unit normal of the lattice plane (rank 2).
    pub fn plane_normal(&self) -> Option<Vec3> {
        (self.rank() == 2).then(|| self.generators[0].cross(self.generators[1]).normalized())
    }

    /// Unit-cell area (rank 2).
    pub fn cell_area(&self) -> Option<f64> {
        (self.rank() == 2).then(|| self.generators[0].cross(self.generators[1]).norm())
    }

    /// Coordinate along the non-compact directions used for far-field radii:
    /// |x| (rank 0), distance from the lattice axis (rank 1), distance from
    /// the lattice plane (rank 2).
    pub fn asymptotic_radius(&self, x: Vec3) -> f64 {
        match self.rank() {
            0 => x.norm(),
            1 => {
                let a = self.axis().unwrap();
                (x - a * x.dot(a)).norm()
            }
            2 => x.dot(self.plane_normal().unwrap()).abs(),
            _ => unreachable!(),
        }
    }
}

/// A canonical fundamental-domain representative on B = R^3/L.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasePoint {
    pub(crate) v: Vec3,
}

impl BasePoint {
    /// Wrap raw coordinates without reduction. Callers must know the point is
    /// already canonical (tests, trusted constants).
    pub fn raw(v: Vec3) -> BasePoint {
        BasePoint { v }
    }

    pub fn coords(&self) -> Vec3 {
        self.v
    }
}

/// The full input to the construction: lattice, marked points (one
/// representative per +-pair), derived fixed points, collapsing parameter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scene {
    pub lattice: Lattice,
    pub points_p: Vec<BasePoint>,
    pub fixed_points_q: Vec<BasePoint>,
    pub epsilon: f64,
}

impl Scene {
    pub fn new(lattice: Lattice, points_p: Vec<Vec3>, epsilon: f64) -> Result<Scene, Vec<SceneError>> {
        let points_p: Vec<BasePoint> = points_p.into_iter().map(|p| lattice.reduce(p)).collect();
        let fixed_points_q = lattice.fixed_points();
        let scene = Scene { lattice, points_p, fixed_points_q, epsilon };
        let errors = scene.validate();
        if errors.is_empty() {
            Ok(scene)
        } else {
            Err(errors)
        }
    }

    /// Number of marked +-pairs.
    pub fn n_points(&self) -> usize {
        self.points_p.len()
    }

    /// All scene invariants; returns every violation rather than the first.
    pub fn validate(&self) -> Vec<SceneError> {
        let mut errors = Vec::new();
        let rank = self.lattice.rank();
        let max = match rank {
            1 => Some(4),
            2 => Some(8),
            _ => None,
        };
        if let Some(max) = max {
            if self.n_points() > max {
                errors.push(SceneError::TooManyPoints { n: self.n_points(), max, rank });
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            errors.push(SceneError::BadEpsilon(self.epsilon));
        }
        for (i, p) in self.points_p.iter().enumerate() {
            if self.lattice.is_fixed_point(p) {
                errors.push(SceneError::PointOnFixedLocus { index: i });
            }
        }
        for i in 0..self.points_p.len() {
            for j in i + 1..self.points_p.len() {
                let pi = &self.points_p[i];
                let pj = &self.points_p[j];
                let direct = self.lattice.quotient_distance(pi, pj);
                let mirrored = self.lattice.quotient_distance(pi, &self.lattice.antipodal(pj));
                if direct < COINCIDENCE_TOL || mirrored < COINCIDENCE_TOL {
                    errors.push(SceneError::DuplicatePoint { a: i, b: j });
                }
            }
        }
        errors
    }

    /// Smallest pairwise separation among all singularities (q_j and +-p_i).
    pub fn min_singularity_separation(&self) -> f64 {
        let mut pts: Vec<BasePoint> = self.fixed_points_q.clone();
        for p in &self.points_p {
            pts.push(*p);
            pts.push(self.lattice.antipodal(p));
        }
        let mut best = f64::INFINITY;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                best = best.min(self.lattice.quotient_distance(&pts[i], &pts[j]));
            }
        }
        // a lone singularity (rank 0, n = 0) has no neighbour
        if best.is_finite() {
            best
        } else {
            f64::INFINITY
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_z_lattice() -> Lattice {
        Lattice::new(vec![Vec3::new(0.0, 0.0, 1.0)]).unwrap()
    }

    fn unit_yz_lattice() -> Lattice {
        Lattice::new(vec![Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)]).unwrap()
    }

    #[test]
    fn reduce_rank0_is_identity() {
        let l = Lattice::rank0();
        let x = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(l.reduce(x).coords(), x);
    }

    #[test]
    fn reduce_rank1_subtracts_translates() {
        let l = unit_z_lattice();
        let r = l.reduce(Vec3::new(0.2, 0.0, 2.7));
        assert_relative_eq!(r.coords().x, 0.2);
        assert_relative_eq!(r.coords().z, -0.3, epsilon = 1e-12);
    }

    #[test]
    fn reduce_rank2_half_open_convention() {
        let l = unit_yz_lattice();
        let r = l.reduce(Vec3::new(5.0, 0.5, -0.5));
        assert_relative_eq!(r.coords().x, 5.0);
        assert_relative_eq!(r.coords().y, -0.5);
        assert_relative_eq!(r.coords().z, -0.5);
    }

    #[test]
    fn quotient_distance_wraps_around() {
        let l = unit_z_lattice();
        let a = l.reduce(Vec3::new(0.0, 0.0, 0.4));
        let b = l.reduce(Vec3::new(0.0, 0.0, -0.4));
        assert_relative_eq!(l.quotient_distance(&a, &b), 0.2, epsilon = 1e-12);
        assert_relative_eq!(l.quotient_distance(&a, &a), 0.0);
    }

    #[test]
    fn quotient_distance_matches_brute_force_rank2() {
        let l = unit_yz_lattice();
        let a = l.reduce(Vec3::new(0.0, 0.5, 0.5));
        let b = l.reduce(Vec3::new(0.0, 0.0, 0.0));
        // brute force over a 5x5 block of images
        let mut best = f64::INFINITY;
        for n1 in -2..=2 {
            for n2 in -2..=2 {
                let img = a.coords() + Vec3::new(0.0, n1 as f64, n2 as f64);
                best = best.min((img - b.coords()).norm());
            }
        }
        assert_relative_eq!(l.quotient_distance(&a, &b), best, epsilon = 1e-12);
        assert_relative_eq!(best, (2.0f64).sqrt() / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn fixed_point_counts_are_powers_of_two() {
        assert_eq!(Lattice::rank0().fixed_points().len(), 1);
        assert_eq!(unit_z_lattice().fixed_points().len(), 2);
        assert_eq!(unit_yz_lattice().fixed_points().len(), 4);
    }

    #[test]
    fn fixed_points_rank1_explicit() {
        let q = unit_z_lattice().fixed_points();
        assert_relative_eq!(q[0].coords().z, 0.0);
        assert_relative_eq!(q[1].coords().z.abs(), 0.5);
    }

    #[test]
    fn fixed_points_rank2_explicit() {
        let q = unit_yz_lattice().fixed_points();
        let mut got: Vec<(f64, f64)> = q
            .iter()
            .map(|p| (p.coords().y.abs(), p.coords().z.abs()))
            .collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got.len(), 4);
        assert_relative_eq!(got[0].0, 0.0);
        assert_relative_eq!(got[3].0, 0.5);
        assert_relative_eq!(got[3].1, 0.5);
    }

    #[test]
    fn antipodal_fixes_fixed_points() {
        let l = unit_yz_lattice();
        for q in l.fixed_points() {
            assert!(l.quotient_distance(&q, &l.antipodal(&q)) < 1e-12);
        }
    }

    #[test]
    fn validate_rejects_too_many_points_rank1() {
        let l = unit_z_lattice();
        let pts = (0..5).map(|i| Vec3::new(1.0 + i as f64, 0.0, 0.11 + 0.05 * i as f64)).collect();
        let err = Scene::new(l, pts, 1e-3).unwrap_err();
        assert!(err.iter().any(|e| matches!(e, SceneError::TooManyPoints { n: 5, max: 4, .. })));
    }

    #[test]
    fn validate_accepts_eight_points_rank2() {
        let l = Lattice::new(vec![Vec3::new(0.0, 4.0, 0.0), Vec3::new(0.0, 0.0, 4.0)]).unwrap();
        let pts = (0..8)
            .map(|i| Vec3::new(0.7 + 0.3 * i as f64, 0.23 * i as f64, 0.17 * i as f64 + 0.31))
            .collect();
        assert!(Scene::new(l, pts, 1e-3).is_ok());
    }

    #[test]
    fn validate_rejects_point_on_fixed_locus() {
        let l = unit_z_lattice();
        let err = Scene::new(l, vec![Vec3::new(0.0, 0.0, 0.5)], 1e-3).unwrap_err();
        assert!(err.iter().any(|e| matches!(e, SceneError::PointOnFixedLocus { index: 0 })));
    }

    #[test]
    fn validate_rejects_mirrored_duplicate() {
        let l = unit_z_lattice();
        let err = Scene::new(
            l,
            vec![Vec3::new(0.3, 0.0, 0.2), Vec3::new(-0.3, 0.0, -0.2)],
            1e-3,
        )
        .unwrap_err();
        assert!(err.iter().any(|e| matches!(e, SceneError::DuplicatePoint { .. })));
    }

    proptest! {
        #[test]
        fn reduce_is_idempotent(x in -10.0f64..10.0, y in -10.0f64..10.0, z in -10.0f64..10.0) {
            for l in [Lattice::rank0(), unit_z_lattice(), unit_yz_lattice()] {
                let once = l.reduce(Vec3::new(x, y, z));
                let twice = l.reduce(once.coords());
                prop_assert!((once.coords() - twice.coords()).norm() < 1e-12);
            }
        }

        #[test]
        fn reduce_differs_by_lattice_vector(x in -10.0f64..10.0, y in -10.0f64..10.0, z in -10.0f64..10.0) {
            let l = unit_yz_lattice();
            let p = Vec3::new(x, y, z);
            let d = p - l.reduce(p).coords();
            prop_assert!(d.y.round() - d.y < 1e-9 && (d.y.round() - d.y) > -1e-9);
            prop_assert!((d.z.round() - d.z).abs() < 1e-9);
            prop_assert!(d.x.abs() < 1e-12);
        }

        #[test]
        fn antipodal_is_involution(x in -5.0f64..5.0, y in -5.0f64..5.0, z in -5.0f64..5.0) {
            for l in [Lattice::rank0(), unit_z_lattice(), unit_yz_lattice()] {
                let p = l.reduce(Vec3::new(x, y, z));
                let back = l.antipodal(&l.antipodal(&p));
                prop_assert!(l.quotient_distance(&p, &back) < 1e-12);
            }
        }

        #[test]
        fn quotient_distance_is_antipodal_invariant(
            x1 in -3.0f64..3.0, y1 in -3.0f64..3.0, z1 in -3.0f64..3.0,
            x2 in -3.0f64..3.0, y2 in -3.0f64..3.0, z2 in -3.0f64..3.0,
        ) {
            let l = unit_yz_lattice();
            let a = l.reduce(Vec3::new(x1, y1, z1));
            let b = l.reduce(Vec3::new(x2, y2, z2));
            let d1 = l.quotient_distance(&a, &b);
            let d2 = l.quotient_distance(&l.antipodal(&a), &l.antipodal(&b));
            prop_assert!((d1 - d2).abs() < 1e-10);
            // symmetry
            prop_assert!((d1 - l.quotient_distance(&b, &a)).abs() < 1e-12);
        }
    }
}
