use crate::error::{check_finite, check_len};
use crate::generative::SparsePrior;
use crate::linalg::{Mat, Vector};
use crate::{Error, Result};

use super::RecoveryOutcome;

/// Largest number of supports [`klasso_sparse`] will enumerate.
pub const SUPPORT_LIMIT: u128 = 1_000_000;

/// `C(n, s)`, saturating at `u128::MAX`.
pub fn binomial(n: usize, s: usize) -> u128 {
    if s > n {
        return 0;
    }
    let s = s.min(n - s);
    let mut acc: u128 = 1;
    for i in 0..s {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Minimizes `||y - M w||_2` subject to `||w||_2 <= nu`.
///
/// Uses the minimum-norm least-squares solution when it is feasible; otherwise
/// bisects the ridge multiplier `lambda > 0` until
/// `|| (M^T M + lambda I)^{-1} M^T y || = nu` to within `1e-10`.
pub fn solve_norm_constrained_ls(m: &Mat, y: &Vector, nu: f64) -> Vector {
    let gram = m.tr_mul(m);
    let rhs = m.tr_mul(y);
    let eig = gram.symmetric_eigen();
    let coeffs = eig.eigenvectors.tr_mul(&rhs);
    let lambda_max = eig.eigenvalues.iter().fold(0.0_f64, |a, &l| a.max(l));
    let cutoff = lambda_max * 1e-12 * m.nrows().max(m.ncols()) as f64;

    let solve = |ridge: f64| -> Vector {
        let scaled = Vector::from_fn(coeffs.len(), |i, _| {
            let l = eig.eigenvalues[i] + ridge;
            if ridge == 0.0 && eig.eigenvalues[i] <= cutoff {
                0.0
            } else {
                coeffs[i] / l
            }
        });
        &eig.eigenvectors * scaled
    };

    let free = solve(0.0);
    if free.norm() <= nu {
        return free;
    }
    let (mut lo, mut hi) = (0.0_f64, rhs.norm() / nu);
    let mut w = solve(hi);
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        w = solve(mid);
        let norm = w.norm();
        if (norm - nu).abs() <= 1e-10 {
            break;
        }
        if norm > nu {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    w
}

/// Advances `idx` to the next `s`-subset of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let s = idx.len();
    let mut i = s;
    while i > 0 {
        i -= 1;
        if idx[i] < n - s + i {
            idx[i] += 1;
            for j in i + 1..s {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact K-Lasso over `s`-sparse vectors of norm at most `nu`, by enumerating
/// every support. Ties go to the lexicographically smallest support.
pub fn klasso_sparse(prior: &SparsePrior, a: &Mat, y_tilde: &Vector) -> Result<RecoveryOutcome> {
    let (n, s) = (prior.n, prior.s);
    check_len("measurement matrix columns", n, a.ncols())?;
    check_len("observations", a.nrows(), y_tilde.len())?;
    check_finite("observations", y_tilde.as_slice())?;
    let count = binomial(n, s);
    if count > SUPPORT_LIMIT {
        return Err(Error::EnumerationGuard {
            n,
            s,
            count,
            limit: SUPPORT_LIMIT,
        });
    }
    let mut support: Vec<usize> = (0..s).collect();
    let mut best: Option<(f64, Vec<usize>, Vector)> = None;
    let mut visited = 0;
    loop {
        visited += 1;
        let sub = a.select_columns(&support);
        let w = solve_norm_constrained_ls(&sub, y_tilde, prior.nu);
        let resid = (y_tilde - &sub * &w).norm();
        if best.as_ref().is_none_or(|(r, _, _)| resid < *r) {
            best = Some((resid, support.clone(), w));
        }
        if !next_combination(&mut support, n) {
            break;
        }
    }
    let (resid, support, w) = best.expect("at least one support");
    let mut x_hat = Vector::zeros(n);
    for (&j, &v) in support.iter().zip(w.iter()) {
        x_hat[j] = v;
    }
    Ok(RecoveryOutcome {
        z_hat: None,
        x_hat,
        residual: resid / (y_tilde.len() as f64).sqrt(),
        restart_best: 0,
        iters_used: visited,
        traces: None,
    })
}
