use serde::Serialize;

use crate::error::check_len;
use crate::linalg::{Mat, Vector};
use crate::Result;

/// Distances between an estimate and the scaled target `mu x*`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorReport {
    /// `||mu x* - x_hat||_2`.
    pub err_scaled: f64,
    /// `1 - cos(x_hat, x*)`, taken as 1 when either vector is zero.
    pub err_cos: f64,
    /// `||sqrt(Sigma)(x_hat - mu x*)||_2`, for a non-identity covariance.
    pub err_cov: Option<f64>,
    pub mu_used: f64,
}

pub fn error_metrics(
    x_hat: &Vector,
    x_star: &Vector,
    mu: f64,
    sqrt_sigma: Option<&Mat>,
) -> Result<ErrorReport> {
    check_len("error metrics", x_star.len(), x_hat.len())?;
    let diff = x_hat - x_star * mu;
    let err_scaled = diff.norm();
    let denom = x_hat.norm() * x_star.norm();
    let err_cos = if denom == 0.0 {
        1.0
    } else {
        (1.0 - x_hat.dot(x_star) / denom).clamp(0.0, 2.0)
    };
    let err_cov = match sqrt_sigma {
        Some(root) => {
            check_len("covariance root", x_hat.len(), root.ncols())?;
            Some((root * diff).norm())
        }
        None => None,
    };
    Ok(ErrorReport {
        err_scaled,
        err_cos,
        err_cov,
        mu_used: mu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_and_exact_estimates() {
        let x = Vector::from_row_slice(&[0.6, 0.8]);
        let mu = 0.7;
        let r = error_metrics(&(&x * mu), &x, mu, None).unwrap();
        assert!(r.err_scaled < 1e-15);
        assert!(r.err_cos.abs() < 1e-15);
        let r = error_metrics(&Vector::zeros(2), &x, mu, None).unwrap();
        assert!((r.err_scaled - mu).abs() < 1e-15);
        assert_eq!(r.err_cos, 1.0);
        let r = error_metrics(&(&x * -mu), &x, mu, None).unwrap();
        assert!((r.err_cos - 2.0).abs() < 1e-15);
        assert!(r.err_cov.is_none());
    }

    #[test]
    fn covariance_weighted_error() {
        let x = Vector::from_row_slice(&[1.0, 0.0]);
        let root = Mat::from_diagonal(&Vector::from_row_slice(&[2.0, 1.0]));
        let r = error_metrics(&Vector::from_row_slice(&[0.0, 1.0]), &x, 1.0, Some(&root)).unwrap();
        assert!((r.err_cov.unwrap() - 5f64.sqrt()).abs() < 1e-15);
        assert!(error_metrics(&Vector::zeros(3), &x, 1.0, None).is_err());
    }
}
