//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest singular value.
pub fn spectral_norm(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().max()
}

/// Smallest singular value (the `min(m, n)`-th one).
pub fn min_singular_value(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().min()
}

/// Symmetric PSD square root by eigendecomposition, with eigenvalues clamped
/// at zero.
///
/// Rejects matrices that are asymmetric beyond `1e-10` or that have an
/// eigenvalue below `-1e-10`.
pub fn psd_sqrt(sigma: &Mat) -> Result<Mat> {
    let n = sigma.nrows();
    if sigma.ncols() != n {
        return Err(Error::NotPsd(format!(
            "matrix is {}x{}, not square",
            n,
            sigma.ncols()
        )));
    }
    if sigma.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("covariance"));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-10 {
                return Err(Error::NotPsd(format!("asymmetric at ({i}, {j})")));
            }
        }
    }
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    if let Some(bad) = eig.eigenvalues.iter().find(|&&l| l < -1e-10) {
        return Err(Error::NotPsd(format!("eigenvalue {bad}")));
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * Mat::from_diagonal(&roots) * v.transpose())
}

pub fn is_binary(v: &[f64]) -> bool {
    v.iter().all(|&x| x == 1.0 || x == -1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_of_diagonal() {
        let s = Mat::from_diagonal(&Vector::from_vec(vec![4.0, 1.0, 9.0]));
        let r = psd_sqrt(&s).unwrap();
        let want = Mat::from_diagonal(&Vector::from_vec(vec![2.0, 1.0, 3.0]));
        assert!((r - want).amax() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let b = Mat::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.2, 1.0, 0.3, 0.0, 0.1, 2.0]);
        let s = &b * b.transpose();
        let r = psd_sqrt(&s).unwrap();
        assert!((&r * &r - &s).amax() < 1e-10);
        assert!((&r - r.transpose()).amax() < 1e-12);
    }

    #[test]
    fn rejects_indefinite_and_asymmetric() {
        let s = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(psd_sqrt(&s), Err(Error::NotPsd(_))));
        let s = Mat::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(psd_sqrt(&s), Err(Error::NotPsd(_))));
    }

    #[test]
    fn singular_values() {
        let a = Mat::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -0.5]);
        assert!((spectral_norm(&a) - 3.0).abs() < 1e-12);
        assert!((min_singular_value(&a) - 0.5).abs() < 1e-12);
    }
}
