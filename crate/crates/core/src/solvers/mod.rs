//! Estimators: the K-Lasso over a generative range, the bounded-sparse
//! K-Lasso, the correlation maximizer for binary data, plus error metrics.

mod descent;
mod latent;
mod metrics;
mod rescale;
mod sparse;

use serde::{Deserialize, Serialize};

use crate::linalg::Vector;
use crate::{Error, Result};

pub use descent::{maximize_linear_functional, DescentRun};
pub use latent::{
    check_unit_ball_containment, corr_max_binary, corr_max_binary_with_inits, klasso_generative,
    klasso_generative_with_inits,
};
pub use metrics::{error_metrics, ErrorReport};
pub use rescale::{rescale_closed_form, rescale_link, RescaledParams};
pub use sparse::{binomial, klasso_sparse, solve_norm_constrained_ls, SUPPORT_LIMIT};

/// Projected-gradient settings shared by the latent-space solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Random initializations, in addition to the one at `z = 0`.
    pub restarts: usize,
    pub max_iters: usize,
    /// Initial step size.
    pub step: f64,
    pub backtrack_factor: f64,
    pub max_halvings: usize,
    /// Stop once the latent step norm drops below this.
    pub tol: f64,
    pub seed: u64,
    /// Keep the per-iteration objective sequence of every restart.
    pub record_trace: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iters: 2000,
            step: 0.1,
            backtrack_factor: 0.5,
            max_halvings: 20,
            tol: 1e-8,
            seed: 0,
            record_trace: false,
        }
    }
}

impl SolverConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.restarts >= 1
            && self.max_iters >= 1
            && self.step > 0.0
            && self.step.is_finite()
            && self.backtrack_factor > 0.0
            && self.backtrack_factor < 1.0
            && self.tol > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid solver config {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryOutcome {
    /// Latent estimate; absent for the sparse prior.
    pub z_hat: Option<Vector>,
    pub x_hat: Vector,
    /// `(1/sqrt m) ||y_tilde - A x_hat||_2` for the K-Lasso solvers; the negated
    /// normalized correlation `-(1/m) y_tilde^T A x_hat` for the binary solver.
    pub residual: f64,
    pub restart_best: usize,
    pub iters_used: usize,
    /// Objective sequences per restart, when requested. Restarts that
    /// diverged have an empty sequence.
    pub traces: Option<Vec<Vec<f64>>>,
}
