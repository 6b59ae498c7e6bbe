use rayon::prelude::*;

use crate::error::{check_finite, check_len};
use crate::generative::{sample_latent, LayeredGenerator};
use crate::harness::mix_seed;
use crate::linalg::{is_binary, Mat, Vector};
use crate::{rng_from_seed, Error, Result};

use super::descent::{projected_descent, DescentRun, LatentObjective, NegLinear};
use super::{RecoveryOutcome, SolverConfig};

/// `h(z) = (1/m) ||y - A G(z)||^2`, gradient `(-2/m) J^T A^T (y - A G(z))`.
struct SquaredResidual<'a> {
    model: &'a LayeredGenerator,
    a: &'a Mat,
    y: &'a Vector,
}

impl LatentObjective for SquaredResidual<'_> {
    fn value(&self, z: &Vector) -> f64 {
        let x = self.model.forward_unchecked(z);
        (self.y - self.a * x).norm_squared() / self.y.len() as f64
    }

    fn value_and_grad(&self, z: &Vector) -> (f64, Vector) {
        let m = self.y.len() as f64;
        let tape = self.model.tape_unchecked(z);
        let resid = self.y - self.a * &tape.output;
        let value = resid.norm_squared() / m;
        let back = self.a.tr_mul(&resid);
        let grad = self.model.vjp_with_tape(&tape, &back) * (-2.0 / m);
        (value, grad)
    }
}

/// Starting points: index 0 is the origin, then `cfg.restarts` uniform draws
/// from the latent ball (each restart has its own derived stream), then any
/// caller-provided points.
fn starting_points(model: &LayeredGenerator, cfg: &SolverConfig, extra: &[Vector]) -> Vec<Vector> {
    let k = model.latent_dim();
    let mut starts = Vec::with_capacity(cfg.restarts + 1 + extra.len());
    starts.push(Vector::zeros(k));
    for i in 0..cfg.restarts {
        let mut rng = rng_from_seed(mix_seed(&[cfg.seed, i as u64 + 1]));
        starts.push(sample_latent(k, model.radius(), &mut rng));
    }
    starts.extend(extra.iter().cloned());
    starts
}

type BestRun = (usize, DescentRun, Option<Vec<Vec<f64>>>);

/// Runs every start (possibly in parallel) and keeps the lowest objective,
/// ties going to the lowest index.
fn best_of_restarts(
    objective: &(impl LatentObjective + Sync),
    model: &LayeredGenerator,
    starts: &[Vector],
    cfg: &SolverConfig,
) -> Result<BestRun> {
    let runs: Vec<Option<DescentRun>> = starts
        .par_iter()
        .map(|z0| projected_descent(objective, model.radius(), z0, cfg))
        .collect();
    let mut best: Option<(usize, &DescentRun)> = None;
    for (i, run) in runs.iter().enumerate() {
        if let Some(run) = run {
            if best.is_none_or(|(_, b)| run.value < b.value) {
                best = Some((i, run));
            }
        }
    }
    let (index, run) = best.ok_or(Error::AllRestartsDiverged)?;
    let run = run.clone();
    let traces = cfg.record_trace.then(|| {
        runs.into_iter()
            .map(|r| r.map(|r| r.trace).unwrap_or_default())
            .collect()
    });
    Ok((index, run, traces))
}

fn check_problem(model: &LayeredGenerator, a: &Mat, y: &Vector, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    check_len("measurement matrix columns", model.ambient_dim(), a.ncols())?;
    check_len("observations", a.nrows(), y.len())?;
    check_finite("observations", y.as_slice())?;
    if y.is_empty() {
        return Err(Error::InvalidParameter("no observations".into()));
    }
    Ok(())
}

/// K-Lasso over the range of `model`: minimizes `(1/m)||y - A G(z)||^2` over
/// the latent ball by projected gradient descent with restarts.
pub fn klasso_generative(
    model: &LayeredGenerator,
    a: &Mat,
    y_tilde: &Vector,
    cfg: &SolverConfig,
) -> Result<RecoveryOutcome> {
    klasso_generative_with_inits(model, a, y_tilde, cfg, &[])
}

/// As [`klasso_generative`], with extra starting points appended after the
/// random restarts.
pub fn klasso_generative_with_inits(
    model: &LayeredGenerator,
    a: &Mat,
    y_tilde: &Vector,
    cfg: &SolverConfig,
    inits: &[Vector],
) -> Result<RecoveryOutcome> {
    check_problem(model, a, y_tilde, cfg)?;
    for z in inits {
        check_len("initial latent", model.latent_dim(), z.len())?;
    }
    let objective = SquaredResidual { model, a, y: y_tilde };
    let starts = starting_points(model, cfg, inits);
    let (restart_best, run, traces) = best_of_restarts(&objective, model, &starts, cfg)?;
    let x_hat = model.forward_unchecked(&run.z);
    let residual = (y_tilde - a * &x_hat).norm() / (y_tilde.len() as f64).sqrt();
    Ok(RecoveryOutcome {
        z_hat: Some(run.z),
        x_hat,
        residual,
        restart_best,
        iters_used: run.iters,
        traces,
    })
}

/// Samples `samples` latents and fails if any image leaves `B_2^n(1 + 1e-6)`.
pub fn check_unit_ball_containment(model: &LayeredGenerator, samples: usize, seed: u64) -> Result<()> {
    let mut rng = rng_from_seed(seed);
    for _ in 0..samples {
        let z = sample_latent(model.latent_dim(), model.radius(), &mut rng);
        let norm = model.forward_unchecked(&z).norm();
        if norm > 1.0 + 1e-6 {
            return Err(Error::NotInUnitBall(norm));
        }
    }
    Ok(())
}

/// Correlation maximizer for `+/-1` data: maximizes `y^T A G(z)` over the
/// latent ball. The objective is normalized by `m`.
pub fn corr_max_binary(
    model: &LayeredGenerator,
    a: &Mat,
    y_tilde: &Vector,
    cfg: &SolverConfig,
) -> Result<RecoveryOutcome> {
    corr_max_binary_with_inits(model, a, y_tilde, cfg, &[])
}

pub fn corr_max_binary_with_inits(
    model: &LayeredGenerator,
    a: &Mat,
    y_tilde: &Vector,
    cfg: &SolverConfig,
    inits: &[Vector],
) -> Result<RecoveryOutcome> {
    check_problem(model, a, y_tilde, cfg)?;
    if !is_binary(y_tilde.as_slice()) {
        return Err(Error::NonBinary("correlation maximizer"));
    }
    check_unit_ball_containment(model, 1_000, mix_seed(&[cfg.seed, u64::MAX]))?;
    let c = a.tr_mul(y_tilde) / y_tilde.len() as f64;
    let objective = NegLinear { model, c: &c };
    let starts = starting_points(model, cfg, inits);
    let (restart_best, run, traces) = best_of_restarts(&objective, model, &starts, cfg)?;
    let x_hat = model.forward_unchecked(&run.z);
    Ok(RecoveryOutcome {
        z_hat: Some(run.z),
        residual: -c.dot(&x_hat),
        x_hat,
        restart_best,
        iters_used: run.iters,
        traces,
    })
}
