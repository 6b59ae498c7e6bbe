//! Randomized empirical checks of the geometric conditions behind the
//! recovery guarantees: the set-restricted eigenvalue condition (S-REC), the
//! matching upper bound, the local embedding property (LEP), and the
//! Gaussian mean width of a generator's range.
//!
//! None of these certify a property over the continuum; they report what was
//! observed on sampled pairs or sampled Gaussian directions.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::check_len;
use crate::generative::{project_unchecked, sample_latent, LayeredGenerator};
use crate::harness::mix_seed;
use crate::linalg::{is_binary, Mat, Vector};
use crate::observation::Nonlinearity;
use crate::solvers::{maximize_linear_functional, SolverConfig};
use crate::{rng_from_seed, Error, Result, SimRng};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EmbeddingParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

/// Statistics over sampled pairs.
///
/// For the S-REC and two-sided checks `min_ratio`/`max_ratio` are the extreme
/// values of `(1/sqrt m)||A(x1 - x2)|| / ||x1 - x2||` over distinct pairs. For
/// the LEP check `max_ratio` is the empirical constant
/// `max (1/sqrt m)||f(A x1) - f(A x2)|| / delta^beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EmbeddingReport {
    pub pairs_tested: usize,
    pub violations: usize,
    pub min_slack: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
    pub params: EmbeddingParams,
}

impl EmbeddingReport {
    /// Single-line structured-text record.
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// `(1/sqrt m)||A(x1 - x2)|| - gamma ||x1 - x2|| + delta`.
pub fn srec_slack(a: &Mat, x1: &Vector, x2: &Vector, gamma: f64, delta: f64) -> f64 {
    let d = x1 - x2;
    (a * &d).norm() / (a.nrows() as f64).sqrt() - gamma * d.norm() + delta
}

/// `(1 + alpha)||x1 - x2|| + delta - (1/sqrt m)||A(x1 - x2)||`.
pub fn two_sided_slack(a: &Mat, x1: &Vector, x2: &Vector, alpha: f64, delta: f64) -> f64 {
    let d = x1 - x2;
    (1.0 + alpha) * d.norm() + delta - (a * &d).norm() / (a.nrows() as f64).sqrt()
}

fn scan_pairs(
    a: &Mat,
    model: &LayeredGenerator,
    pairs: usize,
    rng: &mut SimRng,
    slack: impl Fn(&Vector, &Vector) -> f64,
    params: EmbeddingParams,
) -> Result<EmbeddingReport> {
    if pairs == 0 {
        return Err(Error::InvalidParameter("at least one pair is required".into()));
    }
    check_len("measurement matrix columns", model.ambient_dim(), a.ncols())?;
    let sqrt_m = (a.nrows() as f64).sqrt();
    let mut report = EmbeddingReport {
        pairs_tested: pairs,
        violations: 0,
        min_slack: f64::INFINITY,
        min_ratio: f64::INFINITY,
        max_ratio: 0.0,
        params,
    };
    for _ in 0..pairs {
        let x1 = model.forward_unchecked(&sample_latent(model.latent_dim(), model.radius(), rng));
        let x2 = model.forward_unchecked(&sample_latent(model.latent_dim(), model.radius(), rng));
        let s = slack(&x1, &x2);
        if s < 0.0 {
            report.violations += 1;
        }
        report.min_slack = report.min_slack.min(s);
        let d = &x1 - &x2;
        let dn = d.norm();
        if dn > 0.0 {
            let ratio = (a * &d).norm() / sqrt_m / dn;
            report.min_ratio = report.min_ratio.min(ratio);
            report.max_ratio = report.max_ratio.max(ratio);
        }
    }
    if !report.min_ratio.is_finite() {
        report.min_ratio = 0.0;
    }
    Ok(report)
}

/// S-REC check: counts sampled pairs with
/// `(1/sqrt m)||A(x1 - x2)|| < gamma ||x1 - x2|| - delta`.
pub fn check_srec(
    a: &Mat,
    model: &LayeredGenerator,
    gamma: f64,
    delta: f64,
    pairs: usize,
    rng: &mut SimRng,
) -> Result<EmbeddingReport> {
    if !(0.0..=1.0).contains(&gamma) || !(delta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need gamma in [0, 1] and delta >= 0, got {gamma}, {delta}"
        )));
    }
    let params = EmbeddingParams {
        gamma: Some(gamma),
        delta,
        ..Default::default()
    };
    scan_pairs(a, model, pairs, rng, |x1, x2| srec_slack(a, x1, x2, gamma, delta), params)
}

/// Upper-bound check: counts sampled pairs with
/// `(1/sqrt m)||A(x1 - x2)|| > (1 + alpha)||x1 - x2|| + delta`.
pub fn check_two_sided(
    a: &Mat,
    model: &LayeredGenerator,
    alpha: f64,
    delta: f64,
    pairs: usize,
    rng: &mut SimRng,
) -> Result<EmbeddingReport> {
    if !(alpha > -1.0) || !(delta >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need alpha > -1 and delta >= 0, got {alpha}, {delta}"
        )));
    }
    let params = EmbeddingParams {
        alpha: Some(alpha),
        delta,
        ..Default::default()
    };
    scan_pairs(a, model, pairs, rng, |x1, x2| two_sided_slack(a, x1, x2, alpha, delta), params)
}

/// Settings for [`check_lep`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LepParams {
    /// Centre of the norm window `[mu(1 - eta), mu(1 + eta)]`.
    pub mu: f64,
    pub eta: f64,
    pub delta: f64,
    pub beta: f64,
    pub pairs: usize,
    /// Evaluate random links on both points with the same random bits.
    pub shared_randomness: bool,
    /// Optional constant `C`; ratios above it count as violations.
    pub constant: Option<f64>,
}

impl LepParams {
    pub fn new(mu: f64, delta: f64, beta: f64, pairs: usize) -> Self {
        Self {
            mu,
            eta: 0.1,
            delta,
            beta,
            pairs,
            shared_randomness: true,
            constant: None,
        }
    }
}

pub const LEP_ATTEMPT_CAP: usize = 1_000_000;

/// Rejection-samples a latent whose image norm lies in the window.
fn sample_in_window(
    model: &LayeredGenerator,
    lo: f64,
    hi: f64,
    rng: &mut SimRng,
    attempts: &mut usize,
) -> Option<(Vector, Vector)> {
    while *attempts < LEP_ATTEMPT_CAP {
        *attempts += 1;
        let z = sample_latent(model.latent_dim(), model.radius(), rng);
        let x = model.forward_unchecked(&z);
        let norm = x.norm();
        if norm >= lo && norm <= hi {
            return Some((z, x / norm));
        }
    }
    None
}

/// Local embedding check on the sphere-normalized range.
///
/// Each pair starts from a latent `z1` whose image norm lies in the window;
/// `z2` is a projected random perturbation of `z1` whose radius is halved
/// until the normalized images are within `delta` and `z2` is also in the
/// window. Every evaluated candidate counts toward a cap of
/// [`LEP_ATTEMPT_CAP`] per pair.
pub fn check_lep(
    f: &Nonlinearity,
    a: &Mat,
    model: &LayeredGenerator,
    params: &LepParams,
    rng: &mut SimRng,
) -> Result<EmbeddingReport> {
    let LepParams {
        mu,
        eta,
        delta,
        beta,
        pairs,
        ..
    } = *params;
    if pairs == 0 || !(delta > 0.0) || !(beta > 0.0 && beta <= 1.0) || !(eta > 0.0 && eta < 1.0) || !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!("invalid LEP parameters {params:?}")));
    }
    check_len("measurement matrix columns", model.ambient_dim(), a.ncols())?;
    let (lo, hi) = (mu * (1.0 - eta), mu * (1.0 + eta));
    let sqrt_m = (a.nrows() as f64).sqrt();
    let scale = delta.powf(beta);
    let exhausted = || Error::SamplingExhausted {
        delta,
        eta,
        attempts: LEP_ATTEMPT_CAP,
    };
    let mut report = EmbeddingReport {
        pairs_tested: pairs,
        violations: 0,
        min_slack: f64::INFINITY,
        min_ratio: f64::INFINITY,
        max_ratio: 0.0,
        params: EmbeddingParams {
            delta,
            beta: Some(beta),
            eta: Some(eta),
            ..Default::default()
        },
    };
    for _ in 0..pairs {
        let mut attempts = 0;
        let (x1, x2) = 'pair: loop {
            let (z1, x1) = sample_in_window(model, lo, hi, rng, &mut attempts).ok_or_else(exhausted)?;
            let mut radius = delta * model.radius();
            while attempts < LEP_ATTEMPT_CAP && radius > 1e-14 * model.radius() {
                attempts += 1;
                let dir = Vector::from_fn(z1.len(), |_, _| rng.sample(StandardNormal));
                let dir_norm = dir.norm();
                if dir_norm == 0.0 {
                    continue;
                }
                let z2 = project_unchecked(&(&z1 + dir * (radius / dir_norm)), model.radius());
                let img = model.forward_unchecked(&z2);
                let norm = img.norm();
                if norm >= lo && norm <= hi {
                    let x2 = img / norm;
                    if (&x1 - &x2).norm() <= delta {
                        break 'pair (x1, x2);
                    }
                }
                radius *= 0.5;
            }
            if attempts >= LEP_ATTEMPT_CAP {
                return Err(exhausted());
            }
        };
        let bits_seed: u64 = rng.random();
        let other_seed = if params.shared_randomness {
            bits_seed
        } else {
            rng.random()
        };
        let y1 = f.apply(&(a * &x1), Some(&mut rng_from_seed(bits_seed)))?;
        let y2 = f.apply(&(a * &x2), Some(&mut rng_from_seed(other_seed)))?;
        let ratio = (y1 - y2).norm() / sqrt_m / scale;
        report.min_ratio = report.min_ratio.min(ratio);
        report.max_ratio = report.max_ratio.max(ratio);
        if let Some(c) = params.constant {
            let slack = c - ratio;
            if slack < 0.0 {
                report.violations += 1;
            }
            report.min_slack = report.min_slack.min(slack);
        }
    }
    if params.constant.is_none() {
        report.min_slack = 0.0;
    }
    Ok(report)
}

/// Fraction of disagreeing entries between two `+/-1` vectors.
pub fn hamming_distance(v1: &Vector, v2: &Vector) -> Result<f64> {
    check_len("hamming distance", v1.len(), v2.len())?;
    if !is_binary(v1.as_slice()) || !is_binary(v2.as_slice()) {
        return Err(Error::NonBinary("hamming distance"));
    }
    if v1.is_empty() {
        return Ok(0.0);
    }
    let differ = v1.iter().zip(v2.iter()).filter(|(a, b)| a != b).count();
    Ok(differ as f64 / v1.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GmwEstimate {
    pub omega_hat: f64,
    pub stderr: f64,
    /// `omega_hat^2 / (k log(L r sqrt(n) / sqrt(k)))` with `L = (w W_max)^d`;
    /// NaN when the logarithm is not positive.
    pub normalized: f64,
    pub draws: usize,
}

/// Default inner settings for the width maximizations (20 restarts).
pub fn gmw_solver_config(seed: u64) -> SolverConfig {
    SolverConfig {
        restarts: 20,
        seed,
        ..SolverConfig::default()
    }
}

/// Monte-Carlo Gaussian mean width of the range of `model`.
///
/// Each draw `g` contributes `sup <g, G(z1)> + sup <-g, G(z2)>`, both
/// approximated by projected gradient ascent with restarts; failures of the
/// inner maximization can only lower the estimate.
pub fn estimate_gmw(model: &LayeredGenerator, n_gauss: usize, inner: &SolverConfig) -> Result<GmwEstimate> {
    if n_gauss < 10 {
        return Err(Error::InvalidParameter(format!("need at least 10 Gaussian draws, got {n_gauss}")));
    }
    inner.validate()?;
    let (k, n, r) = (model.latent_dim(), model.ambient_dim(), model.radius());
    let widths: Vec<f64> = (0..n_gauss)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(mix_seed(&[inner.seed, 0x6d77, i as u64]));
            let g = Vector::from_fn(n, |_, _| rng.sample(StandardNormal));
            let mut starts = vec![Vector::zeros(k)];
            starts.extend((0..inner.restarts).map(|_| sample_latent(k, r, &mut rng)));
            let cfg = SolverConfig {
                record_trace: false,
                ..inner.clone()
            };
            let up = maximize_linear_functional(model, &g, &starts, &cfg).map_or(0.0, |run| run.value);
            let down = maximize_linear_functional(model, &(-&g), &starts, &cfg).map_or(0.0, |run| run.value);
            (up + down).max(0.0)
        })
        .collect();
    let count = widths.len() as f64;
    let mean = widths.iter().sum::<f64>() / count;
    let var = widths.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (count - 1.0);
    let lip = model.lipschitz_bound().bound;
    let log_term = (lip * r * (n as f64).sqrt() / (k as f64).sqrt()).ln();
    let normalized = if log_term > 0.0 {
        mean * mean / (k as f64 * log_term)
    } else {
        f64::NAN
    };
    Ok(GmwEstimate {
        omega_hat: mean,
        stderr: (var / count).sqrt(),
        normalized,
        draws: n_gauss,
    })
}
