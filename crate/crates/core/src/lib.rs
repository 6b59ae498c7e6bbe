//! Recovery of structured signals from nonlinear, adversarially corrupted
//! Gaussian measurements with the generalized (K-)Lasso.
//!
//! The crate is organised bottom-up:
//!
//! * [`generative`]: layered feedforward priors and bounded sparse priors.
//! * [`observation`]: link functions `f` and Monte-Carlo estimates of
//!   `mu = E[f(g) g]` and the sub-Gaussian norm `psi`.
//! * [`sensing`]: measurement matrices, clean and corrupted observations.
//! * [`solvers`]: the K-Lasso over a generative range, the bounded-sparse
//!   K-Lasso, the binary correlation maximizer, and error metrics.
//! * [`analysis`]: randomized checkers for S-REC, the two-sided bound, the
//!   local embedding property and the Gaussian mean width.
//! * [`harness`]: seeded trials, sweeps, log-log slope fits and CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod generative;
pub mod linalg;
pub mod observation;
pub mod sensing;
pub mod solvers;
pub mod harness;

pub use error::{Error, Result};

use rand::SeedableRng;

/// The random stream used throughout the crate.
///
/// Every stochastic operation takes `&mut SimRng`; reproducibility follows
/// from seeding it with [`rng_from_seed`].
pub type SimRng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
