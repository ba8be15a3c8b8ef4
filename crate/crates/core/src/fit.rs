//! Least-squares fits for decay laws: power, logarithmic and linear models,
//! with the slope standard error used by the verification suites.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fitted model summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub window: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecayModel {
    /// y = C x^slope, fitted as ln|y| vs ln x.
    Power,
    /// y = slope ln x + intercept.
    Log,
    /// y = slope x + intercept (exponentially small remainder expected).
    LinearPlusExp,
    /// y = C exp(slope x), fitted as ln|y| vs x.
    Exponential,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least 4 samples spanning a decade, got {0}")]
    TooFewSamples(usize),
    #[error("poor fit: residual {residual:.3e} above threshold {threshold:.3e}")]
    PoorFit { residual: f64, threshold: f64 },
    #[error("non-finite data in fit input")]
    NonFinite,
}

/// Straight-line least squares y ~ slope * t + intercept.
fn line_fit(ts: &[f64], ys: &[f64], window: Vec<f64>) -> Result<FitResult, FitError> {
    let n = ts.len() as f64;
    if ts.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let mean_t = ts.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let sxx: f64 = ts.iter().map(|t| (t - mean_t) * (t - mean_t)).sum();
    let sxy: f64 = ts.iter().zip(ys).map(|(t, y)| (t - mean_t) * (y - mean_y)).sum();
    let syy: f64 = ys.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_t;
    let ss_res: f64 = ts
        .iter()
        .zip(ys)
        .map(|(t, y)| {
            let r = y - (slope * t + intercept);
            r * r
        })
        .sum();
    let dof = (ts.len().max(3) - 2) as f64;
    let stderr = (ss_res / dof / sxx).sqrt();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(FitResult { slope, intercept, stderr, r_squared, window })
}

/// Fit a decay law to (abscissa, value) samples.
pub fn decay_fit(series: &[(f64, f64)], model: DecayModel) -> Result<FitResult, FitError> {
    if series.len() < 4 {
        return Err(FitError::TooFewSamples(series.len()));
    }
    let window: Vec<f64> = series.iter().map(|&(x, _)| x).collect();
    let (ts, ys): (Vec<f64>, Vec<f64>) = match model {
        DecayModel::Power => series.iter().map(|&(x, y)| (x.ln(), y.abs().ln())).unzip(),
        DecayModel::Log => series.iter().map(|&(x, y)| (x.ln(), y)).unzip(),
        DecayModel::LinearPlusExp => series.iter().map(|&(x, y)| (x, y)).unzip(),
        DecayModel::Exponential => series.iter().map(|&(x, y)| (x, y.abs().ln())).unzip(),
    };
    line_fit(&ts, &ys, window)
}

/// decay_fit followed by a relative-stderr gate.
pub fn decay_fit_checked(
    series: &[(f64, f64)],
    model: DecayModel,
    stderr_threshold: f64,
) -> Result<FitResult, FitError> {
    let fit = decay_fit(series, model)?;
    let rel = fit.stderr / fit.slope.abs().max(1e-300);
    if rel > stderr_threshold {
        return Err(FitError::PoorFit { residual: rel, threshold: stderr_threshold });
    }
    Ok(fit)
}

/// General linear least squares against a small basis; returns coefficients.
/// Solved by normal equations with Gaussian elimination (bases stay tiny).
pub fn basis_fit(xs: &[f64], ys: &[f64], basis: &[&dyn Fn(f64) -> f64]) -> Vec<f64> {
    let k = basis.len();
    let mut ata = vec![vec![0.0; k]; k];
    let mut atb = vec![0.0; k];
    for (&x, &y) in xs.iter().zip(ys) {
        let row: Vec<f64> = basis.iter().map(|f| f(x)).collect();
        for i in 0..k {
            for j in 0..k {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * y;
        }
    }
    // Gaussian elimination with partial pivoting
    for col in 0..k {
        let mut piv = col;
        for r in col + 1..k {
            if ata[r][col].abs() > ata[piv][col].abs() {
                piv = r;
            }
        }
        ata.swap(col, piv);
        atb.swap(col, piv);
        let d = ata[col][col];
        for j in 0..k {
            ata[col][j] /= d;
        }
        atb[col] /= d;
        for r in 0..k {
            if r != col {
                let f = ata[r][col];
                for j in 0..k {
                    ata[r][j] -= f * ata[col][j];
                }
                atb[r] -= f * atb[col];
            }
        }
    }
    atb
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_cubic_power_law() {
        let series: Vec<(f64, f64)> = (1..=10)
            .map(|k| {
                let r = 0.001 * 1.5f64.powi(k);
                (r, 4.2 * r.powi(3))
            })
            .collect();
        let fit = decay_fit(&series, DecayModel::Power).unwrap();
        assert_relative_eq!(fit.slope, 3.0, epsilon = 1e-10);
        assert!(fit.stderr < 1e-10);
        assert!(fit.r_squared > 1.0 - 1e-12);
    }

    #[test]
    fn exact_log_model_recovers_coefficients() {
        let series: Vec<(f64, f64)> = (1..=8)
            .map(|k| {
                let r = 2.0f64.powi(k);
                (r, -1.7 * r.ln() + 0.9)
            })
            .collect();
        let fit = decay_fit(&series, DecayModel::Log).unwrap();
        assert_relative_eq!(fit.slope, -1.7, epsilon = 1e-10);
        assert_relative_eq!(fit.intercept, 0.9, epsilon = 1e-10);
    }

    #[test]
    fn mixed_r3_plus_r4_stays_near_three() {
        // contamination oracle: over [1e-3, 1e-2] the r^4 term shifts the
        // fitted exponent upward by only a few percent
        let series: Vec<(f64, f64)> = (0..=8)
            .map(|k| {
                let r = 1e-3 * (10.0f64).powf(k as f64 / 8.0);
                (r, r.powi(3) + r.powi(4))
            })
            .collect();
        let fit = decay_fit(&series, DecayModel::Power).unwrap();
        assert!(fit.slope > 2.9 && fit.slope < 3.2, "slope = {}", fit.slope);
    }

    #[test]
    fn too_few_samples_rejected() {
        let err = decay_fit(&[(1.0, 1.0), (2.0, 2.0)], DecayModel::Power).unwrap_err();
        assert!(matches!(err, FitError::TooFewSamples(2)));
    }

    #[test]
    fn basis_fit_recovers_plane() {
        let xs: Vec<f64> = (1..=20).map(|k| k as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.ln() - 2.0 + 0.5 / (x * x)).collect();
        let coeffs = basis_fit(&xs, &ys, &[&|x: f64| x.ln(), &|_| 1.0, &|x: f64| 1.0 / (x * x)]);
        assert_relative_eq!(coeffs[0], 3.0, epsilon = 1e-9);
        assert_relative_eq!(coeffs[1], -2.0, epsilon = 1e-9);
        assert_relative_eq!(coeffs[2], 0.5, epsilon = 1e-7);
    }
}
