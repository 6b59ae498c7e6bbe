//! Seeded experiments: signal construction, single trials, sweeps over
//! `(m, tau)` grids, log-log slope fits and CSV records.
//!
//! # Seeds
//!
//! Every random stream is derived with [`mix_seed`], so results do not depend
//! on scheduling. A trial in cell `(m, tau)` with index `t` uses
//! `seed = mix_seed([master_seed, m, tau.to_bits(), t])` and then one
//! sub-stream per stage, `mix_seed([seed, j])` with `j = 1` signal, `2`
//! matrix, `3` observation noise, `4` corruption, `5` solver, `6` link
//! parameters.

mod record;
mod spec;

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

pub use record::{csv_string, fmt_float, read_csv, write_csv, TrialRecord, CSV_HEADER};
pub use spec::{Estimator, ExperimentSpec, FitMetric, GeneratorSpec, SweepSensing};

use crate::generative::{sample_latent, LayeredGenerator};
use crate::linalg::{Mat, Vector};
use crate::observation::{mu_monte_carlo, psi_estimate_with, Nonlinearity, DEFAULT_MOMENT_GRID};
use crate::sensing::{corrupt, gaussian_matrix, Corruption, CorruptionKind};
use crate::solvers::{
    corr_max_binary, error_metrics, klasso_generative, rescale_closed_form, rescale_link, ErrorReport,
    RecoveryOutcome,
};
use crate::{rng_from_seed, Error, Result, SimRng};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// The splitmix64 finalizer.
fn avalanche(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Folds a tuple of words into one seed.
///
/// With `F` the splitmix64 finalizer (`x ^= x >> 30; x *= 0xbf58476d1ce4e5b9;
/// x ^= x >> 27; x *= 0x94d049bb133111eb; x ^= x >> 31`, wrapping) the state
/// starts at `h = 0x243f6a8885a308d3`, each part `p` updates
/// `h = F((h + 0x9e3779b97f4a7c15) ^ p)`, and the result is `F(h ^ len)`.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x243f_6a88_85a3_08d3;
    for &p in parts {
        h = avalanche(h.wrapping_add(GOLDEN) ^ p);
    }
    avalanche(h ^ parts.len() as u64)
}

/// Monte-Carlo sample count for link parameters without a closed form.
pub const PARAM_SAMPLES: usize = 200_000;

const BASE_MU_SAMPLES: usize = 1_000_000;
const SIGNAL_RESAMPLES: usize = 1_000;

/// A normalized signal and the parameters of its rescaled link.
#[derive(Clone, Debug)]
pub struct Signal {
    pub z_star: Vector,
    /// `G(z*) / rho`, with `||sqrt(Sigma) x*|| = 1`.
    pub x_star: Vector,
    /// `||sqrt(Sigma) G(z*)||`.
    pub rho: f64,
    /// Observations are `f(scale * <a_i, x*>)` with `scale = rho / mu_0`.
    pub scale: f64,
    /// `mu` of `x -> f(scale x)`: the recovery target is `mu * x*`.
    pub mu: f64,
    pub psi: f64,
    /// `mu x*` is provably in the range.
    pub membership_verified: bool,
}

/// An [`ExperimentSpec`] with its generator built and link parsed.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub model: LayeredGenerator,
    pub link: Nonlinearity,
    pub sqrt_sigma: Option<Mat>,
    /// `mu` of the base link.
    pub mu0: f64,
}

impl Experiment {
    pub fn new(spec: &ExperimentSpec) -> Result<Self> {
        spec.validate()?;
        let model = spec.generator.build()?;
        let link: Nonlinearity = spec.nonlinearity.parse()?;
        let sqrt_sigma = spec.sensing.covariance.sqrt(model.ambient_dim())?;
        let mu0 = match link.mu_closed_form() {
            Some(mu) => mu,
            None => {
                let mut rng = rng_from_seed(mix_seed(&[spec.master_seed, 0x6d75]));
                mu_monte_carlo(&link, BASE_MU_SAMPLES, &mut rng)?.value
            }
        };
        if !(mu0.abs() > 1e-3) {
            return Err(Error::Degenerate(format!(
                "link {link} has mu = {mu0}; its observations carry no linear signal"
            )));
        }
        if spec.estimator == Estimator::CorrMax && !link.is_binary() {
            return Err(Error::InvalidParameter(format!(
                "the correlation maximizer needs a binary link, got {link}"
            )));
        }
        Ok(Self {
            spec: spec.clone(),
            model,
            link,
            sqrt_sigma,
            mu0,
        })
    }

    fn sigma_norm(&self, x: &Vector) -> f64 {
        match &self.sqrt_sigma {
            Some(root) => (root * x).norm(),
            None => x.norm(),
        }
    }

    /// Samples `z*` in the latent ball, normalizes its image, and computes the
    /// rescaled link parameters.
    pub fn make_signal(&self, rng: &mut SimRng) -> Result<Signal> {
        let (k, r) = (self.model.latent_dim(), self.model.radius());
        let (z_star, g, rho) = (0..SIGNAL_RESAMPLES)
            .find_map(|_| {
                let z = sample_latent(k, r, rng);
                let g = self.model.forward_unchecked(&z);
                let rho = self.sigma_norm(&g);
                (rho >= 1e-8 && rho.is_finite()).then_some((z, g, rho))
            })
            .ok_or_else(|| {
                Error::Degenerate(format!(
                    "generator image norm stayed below 1e-8 over {SIGNAL_RESAMPLES} draws"
                ))
            })?;
        let x_star = g / rho;
        let scale = rho / self.mu0;
        let (mu, psi) = match rescale_closed_form(&self.link, scale) {
            Some((mu, Some(psi))) => (mu, psi),
            Some((mu, None)) => {
                let link = &self.link;
                let psi = psi_estimate_with(PARAM_SAMPLES, &DEFAULT_MOMENT_GRID, rng, |g, rng| {
                    link.eval(scale * g, rng)
                })?;
                (mu, psi.value)
            }
            None => {
                let p = rescale_link(&self.link, scale, PARAM_SAMPLES, rng)?;
                (p.mu_bar.value, p.psi_bar.value)
            }
        };
        let membership_verified = self.model.is_cone() && mu > 0.0 && z_star.norm() * mu / rho <= r * (1.0 + 1e-12);
        Ok(Signal {
            z_star,
            x_star,
            rho,
            scale,
            mu,
            psi,
            membership_verified,
        })
    }

    pub fn trial_seed(&self, m: usize, tau: f64, trial: usize) -> u64 {
        mix_seed(&[self.spec.master_seed, m as u64, tau.to_bits(), trial as u64])
    }

    /// Runs one trial end to end. Failures are reported in the record.
    pub fn run_trial(&self, m: usize, tau: f64, trial: usize) -> TrialRecord {
        let seed = self.trial_seed(m, tau, trial);
        let start = Instant::now();
        let mut record = TrialRecord {
            trial_id: trial,
            seed,
            m,
            n: self.model.ambient_dim(),
            k: self.model.latent_dim(),
            d: self.model.depth(),
            w: self.model.width(),
            nonlinearity: self.link.to_string(),
            tau,
            strategy: self.spec.sensing.strategy.to_string(),
            mu_used: None,
            psi_used: None,
            err_scaled: None,
            err_cos: None,
            err_cov: None,
            residual: None,
            restart_best: None,
            runtime_ms: 0,
            status: "ok".into(),
            membership: "unverified".into(),
        };
        let mut signal_out = None;
        match self.trial_parts(m, tau, seed, &mut signal_out) {
            Ok((report, outcome)) => {
                record.err_scaled = Some(report.err_scaled);
                record.err_cos = Some(report.err_cos);
                record.err_cov = report.err_cov;
                record.residual = Some(outcome.residual);
                record.restart_best = Some(outcome.restart_best);
            }
            Err(e) => record.status = format!("error: {e}").replace(['\n', '\r'], " "),
        }
        if let Some(signal) = signal_out {
            record.mu_used = Some(signal.mu);
            record.psi_used = Some(signal.psi);
            if signal.membership_verified {
                record.membership = "verified".into();
            }
        }
        if self.spec.record_timing {
            record.runtime_ms = start.elapsed().as_millis() as u64;
        }
        record
    }

    fn trial_parts(
        &self,
        m: usize,
        tau: f64,
        seed: u64,
        signal_out: &mut Option<Signal>,
    ) -> Result<(ErrorReport, RecoveryOutcome)> {
        let stage = |j: u64| rng_from_seed(mix_seed(&[seed, j]));
        let signal = self.make_signal(&mut stage(1))?;
        let signal = signal_out.insert(signal);
        let n = self.model.ambient_dim();
        let b = gaussian_matrix(m, n, &mut stage(2));
        let a = match &self.sqrt_sigma {
            Some(root) => &b * root,
            None => b,
        };
        let y = self.link.apply(&((&a * &signal.x_star) * signal.scale), Some(&mut stage(3)))?;
        let mut corrupt_rng = stage(4);
        let y_tilde = match self.spec.sensing.strategy {
            CorruptionKind::None => corrupt(&y, &a, tau, Corruption::None, &mut corrupt_rng)?,
            CorruptionKind::RandomDirection => corrupt(&y, &a, tau, Corruption::RandomDirection, &mut corrupt_rng)?,
            CorruptionKind::BinaryFlip => corrupt(&y, &a, tau, Corruption::BinaryFlip, &mut corrupt_rng)?,
            CorruptionKind::DecoyAlign => {
                let z = sample_latent(self.model.latent_dim(), self.model.radius(), &mut corrupt_rng);
                let g = self.model.forward_unchecked(&z);
                let norm = self.sigma_norm(&g);
                let decoy = if norm > 0.0 { g * (signal.mu / norm) } else { g };
                corrupt(&y, &a, tau, Corruption::DecoyAlign(&decoy), &mut corrupt_rng)?
            }
        };
        let cfg = self.spec.solver.clone().with_seed(mix_seed(&[seed, 5]));
        let (outcome, target_mu) = match self.spec.estimator {
            Estimator::Klasso => (klasso_generative(&self.model, &a, &y_tilde, &cfg)?, signal.mu),
            Estimator::CorrMax => (corr_max_binary(&self.model, &a, &y_tilde, &cfg)?, 1.0),
        };
        let report = error_metrics(&outcome.x_hat, &signal.x_star, target_mu, self.sqrt_sigma.as_ref())?;
        Ok((report, outcome))
    }
}

/// Builds the experiment and runs a single trial.
pub fn run_trial(spec: &ExperimentSpec, m: usize, tau: f64, trial: usize) -> Result<TrialRecord> {
    Ok(Experiment::new(spec)?.run_trial(m, tau, trial))
}

/// Per-cell aggregate of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellSummary {
    pub m: usize,
    pub tau: f64,
    pub trials: usize,
    pub failures: usize,
    pub median_err_scaled: Option<f64>,
    pub median_err_cov: Option<f64>,
    pub median_psi: Option<f64>,
    /// `k log(L r / (epsilon psi)) / epsilon^2` for the spec's `epsilon_target`.
    pub reference_m: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    /// The `tau` whose cells enter the slope fit: 0 when present, otherwise
    /// the smallest in the grid.
    pub fit_tau: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    pub cells: Vec<CellSummary>,
    /// `m` values of fit cells where every trial failed.
    pub excluded_m: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    /// Sorted by `(m, tau, trial_id)`.
    pub records: Vec<TrialRecord>,
    pub summary: SweepSummary,
}

impl SweepOutcome {
    pub fn slope(&self) -> (f64, f64) {
        (self.summary.slope, self.summary.slope_stderr)
    }

    /// Median of `metric` over successful trials of one cell.
    pub fn median(&self, m: usize, tau: f64, metric: FitMetric) -> Option<f64> {
        median_of(
            self.records
                .iter()
                .filter(|r| r.m == m && r.tau == tau)
                .filter_map(|r| metric_value(r, metric))
                .collect(),
        )
    }
}

fn metric_value(r: &TrialRecord, metric: FitMetric) -> Option<f64> {
    match metric {
        FitMetric::ErrScaled => r.err_scaled,
        FitMetric::ErrCov => r.err_cov,
    }
}

/// Median of finite values; the mean of the middle pair for even counts.
pub fn median_of(mut values: Vec<f64>) -> Option<f64> {
    values.retain(|v| v.is_finite());
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Runs every `(m, tau, trial)` of the grid in parallel and fits the log-log
/// slope of the per-`m` median error.
pub fn run_sweep(spec: &ExperimentSpec) -> Result<SweepOutcome> {
    let experiment = Experiment::new(spec)?;
    let mut ms = spec.sensing.m.clone();
    ms.sort_unstable();
    ms.dedup();
    if ms.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "a sweep needs at least 3 distinct m values, got {}",
            ms.len()
        )));
    }
    let mut taus = spec.sensing.tau.clone();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let jobs: Vec<(usize, f64, usize)> = ms
        .iter()
        .flat_map(|&m| {
            taus.iter()
                .flat_map(move |&tau| (0..spec.trials_per_cell).map(move |t| (m, tau, t)))
        })
        .collect();
    let mut records: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|&(m, tau, t)| experiment.run_trial(m, tau, t))
        .collect();
    records.sort_by(|a, b| {
        a.m.cmp(&b.m)
            .then(a.tau.total_cmp(&b.tau))
            .then(a.trial_id.cmp(&b.trial_id))
    });

    let lip = experiment.model.lipschitz_bound().bound;
    let (k, r) = (experiment.model.latent_dim() as f64, experiment.model.radius());
    let mut cells = Vec::new();
    for &m in &ms {
        for &tau in &taus {
            let cell: Vec<&TrialRecord> = records.iter().filter(|x| x.m == m && x.tau == tau).collect();
            let ok: Vec<&&TrialRecord> = cell.iter().filter(|x| x.is_ok()).collect();
            let median_psi = median_of(ok.iter().filter_map(|x| x.psi_used).collect());
            let reference_m = match (spec.epsilon_target, median_psi) {
                (Some(eps), Some(psi)) if psi > 0.0 => Some(k * (lip * r / (eps * psi)).ln() / (eps * eps)),
                _ => None,
            };
            cells.push(CellSummary {
                m,
                tau,
                trials: cell.len(),
                failures: cell.len() - ok.len(),
                median_err_scaled: median_of(ok.iter().filter_map(|x| x.err_scaled).collect()),
                median_err_cov: median_of(ok.iter().filter_map(|x| x.err_cov).collect()),
                median_psi,
                reference_m,
            });
        }
    }

    let fit_tau = taus[0];
    let mut points = Vec::new();
    let mut excluded_m = Vec::new();
    for cell in cells.iter().filter(|c| c.tau == fit_tau) {
        let value = match spec.fit_metric {
            FitMetric::ErrScaled => cell.median_err_scaled,
            FitMetric::ErrCov => cell.median_err_cov,
        };
        match value {
            Some(v) => points.push((cell.m as f64, v)),
            None => excluded_m.push(cell.m),
        }
    }
    let (slope, slope_stderr) = fit_slope(&points).unwrap_or((f64::NAN, f64::NAN));
    Ok(SweepOutcome {
        records,
        summary: SweepSummary {
            fit_tau,
            slope,
            slope_stderr,
            cells,
            excluded_m,
        },
    })
}

/// Least-squares slope of `log value` against `log m`, with the standard
/// error from the residual variance (0 for two points).
pub fn fit_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if let Some(&(m, v)) = points.iter().find(|(m, v)| !(*v > 0.0 && *m > 0.0 && v.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "log-log fit needs positive finite points, got ({m}, {v})"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - x_mean).powi(2)).sum();
    if points.len() < 2 || !(sxx > 0.0) {
        return Err(Error::InvalidParameter("log-log fit needs at least 2 distinct m".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let stderr = if points.len() > 2 {
        let ssr: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - y_mean - slope * (x - x_mean)).powi(2))
            .sum();
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, stderr))
}
