//! Monopole gauge patches, connection 1-forms solving d eta = *dh, and the
//! radially integrated gauge-comparison forms.
//!
//! Coframe convention everywhere: (dx1, dx2, dx3, dpsi), indices 0..3.
//! The radial-integration primitive is the cone homotopy: expressed in
//! ambient components a primitive of a closed 2-form F on a punctured ball is
//!     sigma(x) = (1/r) int_{r0}^{r} s (iota_u F)(y(s)) ds,
//! where the factor s/r carries the angular legs between radii. For the
//! cylinder ends only the angular leg scales (rank 1) or none does (rank 2).

use thiserror::Error;

use crate::geometry::BasePoint;
use crate::greens::{GreensError, HarmonicData, SingularityId, SINGULARITY_TOL};
use crate::linalg::{Mat4, Vec3};
use crate::quadrature::{panel_integrate, rk4};

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ConnectionError {
    #[error("point lies on the Dirac string of this chart")]
    OnDiracString,
    #[error("evaluation at or across a singularity")]
    AtSingularity,
    #[error("ray quadrature not converged: estimate {est:.3e} above tolerance {tol:.3e}")]
    QuadratureNotConverged { est: f64, tol: f64 },
    #[error(transparent)]
    Greens(#[from] GreensError),
}

/// A 1-form value in the chart coframe (dx1, dx2, dx3, dpsi).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OneFormValue {
    pub comps: [f64; 4],
}

impl OneFormValue {
    pub fn zero() -> OneFormValue {
        OneFormValue::default()
    }

    pub fn from_base(v: Vec3) -> OneFormValue {
        OneFormValue { comps: [v.x, v.y, v.z, 0.0] }
    }

    pub fn dpsi() -> OneFormValue {
        OneFormValue { comps: [0.0, 0.0, 0.0, 1.0] }
    }

    pub fn dx(i: usize) -> OneFormValue {
        let mut c = [0.0; 4];
        c[i] = 1.0;
        OneFormValue { comps: c }
    }

    pub fn base_part(&self) -> Vec3 {
        Vec3::new(self.comps[0], self.comps[1], self.comps[2])
    }

    pub fn add(&self, o: &OneFormValue) -> OneFormValue {
        let mut c = self.comps;
        for i in 0..4 {
            c[i] += o.comps[i];
        }
        OneFormValue { comps: c }
    }

    pub fn scale(&self, s: f64) -> OneFormValue {
        let mut c = self.comps;
        for v in c.iter_mut() {
            *v *= s;
        }
        OneFormValue { comps: c }
    }

    /// Pointwise norm against an inverse metric: |w|^2 = w^T g^{-1} w.
    pub fn norm_in(&self, g_inv: &Mat4) -> f64 {
        let mut acc = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                acc += self.comps[a] * g_inv[a][b] * self.comps[b];
            }
        }
        acc.max(0.0).sqrt()
    }
}

/// A 2-form value as an antisymmetric 4x4 coefficient matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TwoFormValue {
    pub m: [[f64; 4]; 4],
}

impl TwoFormValue {
    pub fn zero() -> TwoFormValue {
        TwoFormValue::default()
    }

    pub fn from_wedge(a: &OneFormValue, b: &OneFormValue) -> TwoFormValue {
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] = a.comps[i] * b.comps[j] - a.comps[j] * b.comps[i];
            }
        }
        TwoFormValue { m }
    }

    /// The base Hodge dual of a gradient 1-form: M_ab = eps_abc grad_c.
    pub fn star_base_gradient(grad: Vec3) -> TwoFormValue {
        let mut m = [[0.0; 4]; 4];
        m[0][1] = grad.z;
        m[1][0] = -grad.z;
        m[1][2] = grad.x;
        m[2][1] = -grad.x;
        m[2][0] = grad.y;
        m[0][2] = -grad.y;
        TwoFormValue { m }
    }

    /// *dx_i scaled: the base 2-form dx_j ^ dx_k (cyclic).
    pub fn star_dx(i: usize, scale: f64) -> TwoFormValue {
        let mut e = Vec3::ZERO;
        match i {
            0 => e.x = scale,
            1 => e.y = scale,
            2 => e.z = scale,
            _ => panic!("base index {i}"),
        }
        TwoFormValue::star_base_gradient(e)
    }

    pub fn add(&self, o: &TwoFormValue) -> TwoFormValue {
        let mut m = self.m;
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] += o.m[i][j];
            }
        }
        TwoFormValue { m }
    }

    pub fn sub(&self, o: &TwoFormValue) -> TwoFormValue {
        self.add(&o.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> TwoFormValue {
        let mut m = self.m;
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        TwoFormValue { m }
    }

    /// Contraction iota_u with a base direction.
    pub fn contract_base(&self, u: Vec3) -> OneFormValue {
        let uu = [u.x, u.y, u.z, 0.0];
        let mut c = [0.0; 4];
        for b in 0..4 {
            for a in 0..4 {
                c[b] += uu[a] * self.m[a][b];
            }
        }
        OneFormValue { comps: c }
    }

    /// Coefficient w of self ^ other = w dx1^dx2^dx3^dpsi.
    pub fn wedge4(&self, o: &TwoFormValue) -> f64 {
        let p = &self.m;
        let q = &o.m;
        p[0][1] * q[2][3] + p[2][3] * q[0][1] - p[0][2] * q[1][3] - p[1][3] * q[0][2]
            + p[0][3] * q[1][2]
            + p[1][2] * q[0][3]
    }

    pub fn max_abs(&self) -> f64 {
        self.m
            .iter()
            .flat_map(|r| r.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Pointwise norm against an inverse metric: |M|^2 = 1/2 M_ab M_cd g^{ac} g^{bd}.
    pub fn norm_in(&self, g_inv: &Mat4) -> f64 {
        let mut acc = 0.0;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        acc += 0.5 * self.m[a][b] * self.m[c][d] * g_inv[a][c] * g_inv[b][d];
                    }
                }
            }
        }
        acc.max(0.0).sqrt()
    }
}

/// Hemisphere of a two-patch monopole chart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Hemisphere {
    North,
    South,
}

/// What fixes the gauge of the chart.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChartKind {
    /// Model connection + radially integrated gauge about a singularity.
    Singularity(SingularityId),
    /// Straight-line homotopy primitive anchored at the chart center.
    Bulk,
}

/// A Wu-Yang gauge chart: local trivialization with fiber coordinate
/// psi in [0, 2 pi) and the Dirac string along the chart axis
/// (theta = pi excluded on the north patch, theta = 0 on the south).
#[derive(Clone, Copy, Debug)]
pub struct GaugeChart {
    pub center: BasePoint,
    pub axis: Vec3,
    pub hemisphere: Hemisphere,
    pub kind: ChartKind,
    /// Antisymmetrize the bulk gauge under the involution lift.
    pub symmetrize: bool,
}

impl GaugeChart {
    /// Chart about a singularity; the string runs along the
    /// lattice-transverse axis through the center.
    pub fn about_singularity(
        data: &HarmonicData,
        id: SingularityId,
        hemisphere: Hemisphere,
    ) -> Result<GaugeChart, ConnectionError> {
        let s = data.singularity(id)?;
        Ok(GaugeChart {
            center: s.point,
            axis: default_chart_axis(data),
            hemisphere,
            kind: ChartKind::Singularity(id),
            symmetrize: false,
        })
    }

    pub fn bulk(center: BasePoint, axis: Vec3) -> GaugeChart {
        GaugeChart {
            center,
            axis: axis.normalized(),
            hemisphere: Hemisphere::North,
            kind: ChartKind::Bulk,
            symmetrize: true,
        }
    }
}

/// Transverse to the lattice directions, keeping strings and quadrature
/// spheres away from the periodic axes.
pub fn default_chart_axis(data: &HarmonicData) -> Vec3 {
    let lattice = data.lattice();
    match lattice.rank() {
        0 => Vec3::new(0.0, 0.0, 1.0),
        1 => lattice.axis().unwrap().any_orthogonal(),
        _ => lattice.plane_normal().unwrap(),
    }
}

/// The two-patch monopole potential about `center` for flux integer `m`:
/// A_{N/S} = -(m/2)(+-1 - cos theta) dphi, a base 1-form with
/// -(1/2 pi) oint dA = m.
pub fn monopole_potential(
    m: i64,
    center: &BasePoint,
    axis: Vec3,
    hemisphere: Hemisphere,
    data: &HarmonicData,
    x: Vec3,
) -> Result<OneFormValue, ConnectionError> {
    let d = data.lattice().reduce(x - center.coords()).coords();
    let r = d.norm();
    if r < SINGULARITY_TOL {
        return Err(ConnectionError::AtSingularity);
    }
    let n = axis.normalized();
    let e1 = n.any_orthogonal();
    let e2 = n.cross(e1);
    let xp = d.dot(e1);
    let yp = d.dot(e2);
    let rho2 = xp * xp + yp * yp;
    let cos_t = d.dot(n) / r;
    if rho2 < 1e-24 * r * r {
        // on the axis: regular at the chart's own pole, singular on the string
        let at_pole = match hemisphere {
            Hemisphere::North => cos_t > 0.0,
            Hemisphere::South => cos_t < 0.0,
        };
        if at_pole {
            return Ok(OneFormValue::zero());
        }
        return Err(ConnectionError::OnDiracString);
    }
    let s = match hemisphere {
        Hemisphere::North => 1.0,
        Hemisphere::South => -1.0,
    };
    let dphi = (e2 * xp - e1 * yp) / rho2;
    Ok(OneFormValue::from_base(dphi * (-(m as f64) * 0.5 * (s - cos_t))))
}

/// Cylinder structure of the region being integrated over: which legs of the
/// cross-section scale with the radial coordinate.
#[derive(Clone, Copy, Debug)]
pub enum RadialKind {
    /// Punctured ball about a point: both angular legs scale.
    Point { center: Vec3 },
    /// Complement of an axis (rank-1 end): only the dphi leg scales.
    Axis { through: Vec3, direction: Vec3 },
    /// Complement of a plane (rank-2 end): nothing scales.
    Plane { normal: Vec3 },
}

impl RadialKind {
    /// Radial coordinate of `x`, unit radial direction and foot point.
    fn frame(&self, x: Vec3) -> (f64, Vec3, Vec3) {
        match self {
            RadialKind::Point { center } => {
                let d = x - *center;
                (d.norm(), d.normalized(), *center)
            }
            RadialKind::Axis { through, direction } => {
                let dir = direction.normalized();
                let rel = x - *through;
                let axial = dir * rel.dot(dir);
                let trans = rel - axial;
                (trans.norm(), trans.normalized(), *through + axial)
            }
            RadialKind::Plane { normal } => {
                let n = normal.normalized();
                let z = x.dot(n);
                (z.abs(), n * z.signum(), x - n * z)
            }
        }
    }
}

/// Primitive sigma with d sigma = F on the annulus r in (r0, r(x)), computed
/// by radial integration of the contracted field with the cone scaling.
pub fn radial_homotopy(
    f: &mut dyn FnMut(Vec3) -> TwoFormValue,
    kind: &RadialKind,
    r0: f64,
    x: Vec3,
    panels: usize,
    tol: f64,
) -> Result<OneFormValue, ConnectionError> {
    let (r, u_hat, foot) = kind.frame(x);
    if (r - r0).abs() < 1e-300 {
        return Ok(OneFormValue::zero());
    }
    match kind {
        RadialKind::Point { .. } => {
            let (val, err) = panel_integrate(
                |s| {
                    let p = f(foot + u_hat * s).contract_base(u_hat);
                    [s * p.comps[0], s * p.comps[1], s * p.comps[2], p.comps[3]]
                },
                r0,
                r,
                panels,
            );
            check_ray_tol(err, tol)?;
            Ok(OneFormValue { comps: [val[0] / r, val[1] / r, val[2] / r, val[3]] })
        }
        RadialKind::Axis { direction, .. } => {
            let dir = direction.normalized();
            let e_phi = dir.cross(u_hat);
            let (val, err) = panel_integrate(
                |s| {
                    let p = f(foot + u_hat * s).contract_base(u_hat);
                    let base = p.base_part();
                    [s * base.dot(e_phi), base.dot(dir), p.comps[3], 0.0]
                },
                r0,
                r,
                panels,
            );
            check_ray_tol(err, tol)?;
            let base = e_phi * (val[0] / r) + dir * val[1];
            let mut out = OneFormValue::from_base(base);
            out.comps[3] = val[2];
            Ok(out)
        }
        RadialKind::Plane { .. } => {
            let (val, err) = panel_integrate(
                |s| f(foot + u_hat * s).contract_base(u_hat).comps,
                r0,
                r,
                panels,
            );
            check_ray_tol(err, tol)?;
            Ok(OneFormValue { comps: val })
        }
    }
}

fn check_ray_tol(err: f64, tol: f64) -> Result<(), ConnectionError> {
    if err > tol {
        Err(ConnectionError::QuadratureNotConverged { est: err, tol })
    } else {
        Ok(())
    }
}

/// Gauge-comparison data along the ray from singularity `id` to `x`:
/// eta_tilde with d eta_tilde = *d(h - h^s), and the epsilon-reduced triple
/// sigma_hat with d(eps sigma_hat) = omega^GH - omega^s.
#[derive(Clone, Debug)]
pub struct RayGaugeData {
    pub eta_tilde: OneFormValue,
    pub sigma_hat: [OneFormValue; 3],
    pub radius: f64,
    pub err: f64,
}

/// Default resolution of the coupled ray integrals.
pub const RAY_STEPS: usize = 96;
/// Default tolerance on their step-doubling error estimate.
pub const RAY_TOL: f64 = 1e-8;

/// Integrates the coupled system (eta_tilde feeds the sigma integrand) as an
/// ODE along the ray, fixed-step RK4 with a step-doubling error estimate.
pub fn ray_gauge_data(
    data: &HarmonicData,
    id: SingularityId,
    x: Vec3,
    steps: usize,
    tol: f64,
) -> Result<RayGaugeData, ConnectionError> {
    let s_info = data.singularity(id)?;
    let c = s_info.point.coords();
    let d = data.lattice().reduce(x - c).coords();
    let r = d.norm();
    if r < SINGULARITY_TOL {
        return Err(ConnectionError::AtSingularity);
    }
    let u_hat = d / r;

    // state: cone-scaled accumulators E_b = int s p_b ds (eta_tilde) and
    // S_{i,b} = int s q_{i,b} ds (sigma_hat), all base components
    let deriv = |s: f64, state: &[f64; 12]| -> [f64; 12] {
        let y = c + u_hat * s;
        let grad = data.grad_h_minus_model(id, y);
        let g_val = data.h_minus_model(id, y);
        let p = TwoFormValue::star_base_gradient(grad).contract_base(u_hat);
        let eta = if s > 1e-300 {
            Vec3::new(state[0] / s, state[1] / s, state[2] / s)
        } else {
            Vec3::ZERO
        };
        let eta_form = OneFormValue::from_base(eta);
        let mut out = [0.0; 12];
        out[0] = s * p.comps[0];
        out[1] = s * p.comps[1];
        out[2] = s * p.comps[2];
        for i in 0..3 {
            let d_i = TwoFormValue::from_wedge(&OneFormValue::dx(i), &eta_form)
                .add(&TwoFormValue::star_dx(i, g_val));
            let q = d_i.contract_base(u_hat);
            out[3 + 3 * i] = s * q.comps[0];
            out[4 + 3 * i] = s * q.comps[1];
            out[5 + 3 * i] = s * q.comps[2];
        }
        out
    };

    let coarse = rk4(&deriv, 0.0, r, steps, [0.0; 12]);
    let fine = rk4(&deriv, 0.0, r, steps * 2, [0.0; 12]);
    let mut err = 0.0f64;
    for i in 0..12 {
        err = err.max((fine[i] - coarse[i]).abs() / r);
    }
    if err > tol {
        return Err(ConnectionError::QuadratureNotConverged { est: err, tol });
    }
    let eta_tilde = OneFormValue::from_base(Vec3::new(fine[0], fine[1], fine[2]) / r);
    let sigma_hat = [
        OneFormValue::from_base(Vec3::new(fine[3], fine[4], fine[5]) / r),
        OneFormValue::from_base(Vec3::new(fine[6], fine[7], fine[8]) / r),
        OneFormValue::from_base(Vec3::new(fine[9], fine[10], fine[11]) / r),
    ];
    Ok(RayGaugeData { eta_tilde, sigma_hat, radius: r, err })
}

/// eta_tilde near singularity `id`: the gauge difference eta - eta^s.
pub fn eta_tilde_sing(
    data: &HarmonicData,
    id: SingularityId,
    x: Vec3,
) -> Result<OneFormValue, ConnectionError> {
    Ok(ray_gauge_data(data, id, x, RAY_STEPS, RAY_TOL)?.eta_tilde)
}

/// eta_tilde on the asymptotic end: primitive of *dh minus the end model's
/// curvature, integrated inward from an outer anchor shell so the form
/// decays toward infinity.
pub fn eta_tilde_infinity(
    data: &HarmonicData,
    x: Vec3,
    anchor_radius: f64,
    panels: usize,
) -> Result<OneFormValue, ConnectionError> {
    let lattice = data.lattice();
    let rank = lattice.rank();
    let n_pairs = data.scene.n_points() as f64;
    let beta = data.beta();
    let kind = match rank {
        0 => RadialKind::Point { center: Vec3::ZERO },
        1 => RadialKind::Axis { through: Vec3::ZERO, direction: lattice.axis().unwrap() },
        _ => RadialKind::Plane { normal: lattice.plane_normal().unwrap() },
    };
    let far_grad = |y: Vec3| -> Vec3 {
        match &kind {
            RadialKind::Point { center } => {
                let cc = (2.0 * n_pairs - 4.0) * 0.5;
                let d = y - *center;
                let r2 = d.norm2();
                -d * (cc / (r2 * r2.sqrt()))
            }
            RadialKind::Axis { through, direction } => {
                let dir = direction.normalized();
                let rel = y - *through;
                let trans = rel - dir * rel.dot(dir);
                let rho2 = trans.norm2();
                trans * (beta * (8.0 - 2.0 * n_pairs) / rho2)
            }
            RadialKind::Plane { normal } => {
                let n = normal.normalized();
                let z = y.dot(n);
                n * (beta * (16.0 - 2.0 * n_pairs) * z.signum())
            }
        }
    };
    let mut field =
        |y: Vec3| -> TwoFormValue { TwoFormValue::star_base_gradient(data.grad_h_at(y) - far_grad(y)) };
    radial_homotopy(&mut field, &kind, anchor_radius, x, panels, RAY_TOL)
}

/// The connection eta = dpsi + A on the chart: model + eta_tilde about
/// singularities; at bulk points a straight-line homotopy primitive of *dh
/// anchored at the chart center, antisymmetrized under the involution lift
/// when the chart asks for it.
pub fn connection_eval(
    data: &HarmonicData,
    chart: &GaugeChart,
    x: Vec3,
) -> Result<OneFormValue, ConnectionError> {
    match chart.kind {
        ChartKind::Singularity(id) => {
            let s = data.singularity(id)?;
            let a_model =
                monopole_potential(s.flux, &chart.center, chart.axis, chart.hemisphere, data, x)?;
            let tilde = eta_tilde_sing(data, id, x)?;
            Ok(OneFormValue::dpsi().add(&a_model).add(&tilde))
        }
        ChartKind::Bulk => {
            let a = bulk_potential(data, chart.center.coords(), x)?;
            let a = if chart.symmetrize {
                let tx = data.lattice().antipodal(&data.lattice().reduce(x));
                let at = bulk_potential(data, chart.center.coords(), tx.coords())?;
                a.add(&at).scale(0.5)
            } else {
                a
            };
            Ok(OneFormValue::dpsi().add(&a))
        }
    }
}

/// Straight-line homotopy primitive of *dh anchored at `anchor`. The segment
/// must stay clear of every source.
fn bulk_potential(
    data: &HarmonicData,
    anchor: Vec3,
    x: Vec3,
) -> Result<OneFormValue, ConnectionError> {
    let seg = x - anchor;
    if seg.norm() < 1e-14 {
        return Ok(OneFormValue::zero());
    }
    for s in data.singularities() {
        let mirrored = data.lattice().antipodal(&s.point);
        let mut min_d = f64::INFINITY;
        for k in 0..=16 {
            let y = BasePoint::raw(anchor + seg * (k as f64 / 16.0));
            min_d = min_d.min(data.lattice().quotient_distance(&y, &s.point));
            min_d = min_d.min(data.lattice().quotient_distance(&y, &mirrored));
        }
        if min_d < 1e-3 {
            return Err(ConnectionError::AtSingularity);
        }
    }
    let mut field = |y: Vec3| -> TwoFormValue { TwoFormValue::star_base_gradient(data.grad_h_at(y)) };
    radial_homotopy(&mut field, &RadialKind::Point { center: anchor }, 0.0, x, 12, RAY_TOL)
}
