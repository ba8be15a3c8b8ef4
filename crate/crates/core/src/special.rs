//! Special functions for the lattice sums: modified Bessel K0/K1 and the
//! scaled complementary error function.
//!
//! K_nu comes from the integral representation
//!     K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt,
//! evaluated with the trapezoid rule. The integrand decays doubly
//! exponentially in t, so the trapezoid converges geometrically; step 0.1
//! reaches ~1e-14 relative for every argument that matters to the sums
//! (terms with x > ~45 are below 1e-19 and are never requested).

pub use statrs::function::erf::{erf, erfc};

/// Euler-Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const TAIL_EXPONENT: f64 = 45.0;

fn grid_for(x: f64) -> (f64, usize) {
    let t_max = (1.0 + TAIL_EXPONENT / x).acosh();
    let h = (0.7 / x.sqrt()).min(0.1);
    let n = (t_max / h).ceil() as usize;
    (h, n.max(8))
}

/// Modified Bessel function of the second kind, order 0.
pub fn bessel_k0(x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k0 requires x > 0");
    let (h, n) = grid_for(x);
    let mut sum = 0.5 * (-x).exp();
    for k in 1..=n {
        let t = h * k as f64;
        sum += (-x * t.cosh()).exp();
    }
    sum * h
}

/// Modified Bessel function of the second kind, order 1.
pub fn bessel_k1(x: f64) -> f64 {
    assert!(x > 0.0, "bessel_k1 requires x > 0");
    let (h, n) = grid_for(x);
    let mut sum = 0.5 * (-x).exp();
    for k in 1..=n {
        let t = h * k as f64;
        sum += (-x * t.cosh()).exp() * t.cosh();
    }
    sum * h
}

/// K0(m c) and K1(m c) for m = 1..=m_max on a shared grid.
///
/// The integrand for argument m c is exp(-c cosh t)^m, so the whole batch
/// costs one exp() pass plus a multiplication per extra m.
pub fn bessel_k01_batch(c: f64, m_max: usize) -> Vec<(f64, f64)> {
    assert!(c > 0.0);
    let (h, n) = grid_for(c);
    let mut base: Vec<(f64, f64)> = Vec::with_capacity(n + 1);
    // (exp(-c cosh t), cosh t) per node; node 0 carries the trapezoid 1/2.
    base.push(((-c).exp(), 1.0));
    for k in 1..=n {
        let t = h * k as f64;
        let ch = t.cosh();
        base.push(((-c * ch).exp(), ch));
    }
    let mut powers: Vec<f64> = base.iter().map(|&(w, _)| w).collect();
    let mut out = Vec::with_capacity(m_max);
    for m in 1..=m_max {
        if m > 1 {
            for (p, &(w, _)) in powers.iter_mut().zip(base.iter()) {
                *p *= w;
            }
        }
        let mut k0 = 0.5 * powers[0];
        let mut k1 = 0.5 * powers[0];
        for (k, &(_, ch)) in base.iter().enumerate().skip(1) {
            k0 += powers[k];
            k1 += powers[k] * ch;
        }
        out.push((k0 * h, k1 * h));
        if out[m - 1].0 < 1e-300 {
            // everything beyond is zero; pad and stop
            for _ in m..m_max {
                out.push((0.0, 0.0));
            }
            break;
        }
    }
    out
}

/// Scaled complementary error function exp(x^2) erfc(x) for x >= 0.
pub fn erfcx(x: f64) -> f64 {
    assert!(x >= 0.0, "erfcx is only evaluated at nonnegative arguments here");
    if x < 6.0 {
        (x * x).exp() * erfc(x)
    } else {
        // Laplace continued fraction erfcx(x) = pi^{-1/2} / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        let mut f = 0.0;
        for k in (1..=40).rev() {
            f = (k as f64 / 2.0) / (x + f);
        }
        1.0 / ((x + f) * std::f64::consts::PI.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn k0_k1_reference_values() {
        assert_relative_eq!(bessel_k0(1.0), 0.421_024_438_240_708_3, max_relative = 1e-10);
        assert_relative_eq!(bessel_k1(1.0), 0.601_907_230_197_234_6, max_relative = 1e-10);
        assert_relative_eq!(bessel_k0(0.1), 2.427_069_024_702_017, max_relative = 1e-10);
        assert_relative_eq!(bessel_k0(5.0), 3.691_098_334_042_594e-3, max_relative = 1e-10);
    }

    #[test]
    fn k0_satisfies_modified_bessel_equation() {
        // x^2 K0'' + x K0' - x^2 K0 = 0, checked by central differences
        for &x in &[0.3, 1.0, 2.7, 8.0] {
            let d = 1e-4 * x;
            let f = bessel_k0(x);
            let fp = (bessel_k0(x + d) - bessel_k0(x - d)) / (2.0 * d);
            let fpp = (bessel_k0(x + d) - 2.0 * f + bessel_k0(x - d)) / (d * d);
            let residual = x * x * fpp + x * fp - x * x * f;
            assert!(residual.abs() < 1e-5 * f.abs().max(1e-3), "x={x} residual={residual}");
        }
    }

    #[test]
    fn k0_derivative_is_minus_k1() {
        for &x in &[0.5, 1.5, 4.0] {
            let d = 1e-5;
            let fd = (bessel_k0(x + d) - bessel_k0(x - d)) / (2.0 * d);
            assert_relative_eq!(fd, -bessel_k1(x), max_relative = 1e-8);
        }
    }

    #[test]
    fn batch_matches_single_evaluations() {
        let c = 0.73;
        let batch = bessel_k01_batch(c, 12);
        for (m, &(k0, k1)) in batch.iter().enumerate() {
            let x = c * (m + 1) as f64;
            if k0 > 0.0 {
                assert_relative_eq!(k0, bessel_k0(x), max_relative = 1e-9);
                assert_relative_eq!(k1, bessel_k1(x), max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn erfcx_consistent_with_erfc() {
        for &x in &[0.0, 0.4, 1.2, 2.4, 2.6, 4.0, 6.5, 8.0] {
            let lhs = erfcx(x) * (-x * x).exp();
            assert_relative_eq!(lhs, erfc(x), max_relative = 1e-10);
        }
    }

    #[test]
    fn erfc_deep_tail_has_relative_accuracy() {
        // guards against an erfc implemented as 1 - erf
        let v = erfc(8.0);
        assert!(v > 1.0e-29 && v < 1.25e-29, "erfc(8) = {v:e}");
    }

    #[test]
    fn erfcx_large_argument_asymptotics() {
        // erfcx(x) ~ 1/(x sqrt(pi)) (1 - 1/(2x^2) + 3/(4x^4) - 15/(8x^6))
        let x = 50.0;
        let x2 = x * x;
        let asym = (1.0 - 0.5 / x2 + 0.75 / (x2 * x2) - 1.875 / (x2 * x2 * x2))
            / (x * std::f64::consts::PI.sqrt());
        assert_relative_eq!(erfcx(x), asym, max_relative = 1e-11);
    }
}
