use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::generative::{Activation, LayeredGenerator, RandomArchitecture};
use crate::rng_from_seed;
use crate::sensing::{Covariance, CorruptionKind};
use crate::solvers::SolverConfig;
use crate::{Error, Result};

/// Where the generator of an experiment comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// A model file; relative paths resolve against the spec file's directory
    /// when loaded through [`ExperimentSpec::load`].
    File { path: PathBuf },
    /// Random network drawn from `weight_seed`.
    Random {
        k: usize,
        n: usize,
        depth: usize,
        width: usize,
        #[serde(default = "one")]
        r: f64,
        #[serde(default)]
        offsets: bool,
        #[serde(default = "relu")]
        activation: Activation,
        #[serde(default = "relu")]
        output_activation: Activation,
        weight_seed: u64,
    },
    /// `G(z) = z`.
    Identity {
        n: usize,
        #[serde(default = "one")]
        r: f64,
    },
    /// `G(z) = U z` with orthonormal columns drawn from `weight_seed`.
    Orthonormal {
        k: usize,
        n: usize,
        #[serde(default = "one")]
        r: f64,
        weight_seed: u64,
    },
}

fn one() -> f64 {
    1.0
}

fn relu() -> Activation {
    Activation::Relu
}

impl GeneratorSpec {
    /// Offset-free relu network with unit latent radius.
    pub fn relu(k: usize, n: usize, depth: usize, width: usize, weight_seed: u64) -> Self {
        GeneratorSpec::Random {
            k,
            n,
            depth,
            width,
            r: 1.0,
            offsets: false,
            activation: Activation::Relu,
            output_activation: Activation::Relu,
            weight_seed,
        }
    }

    pub fn build(&self) -> Result<LayeredGenerator> {
        match self {
            GeneratorSpec::File { path } => LayeredGenerator::load(path),
            GeneratorSpec::Random {
                k,
                n,
                depth,
                width,
                r,
                offsets,
                activation,
                output_activation,
                weight_seed,
            } => {
                let arch = RandomArchitecture {
                    k: *k,
                    n: *n,
                    depth: *depth,
                    width: *width,
                    r: *r,
                    offsets: *offsets,
                    activation: *activation,
                    output_activation: *output_activation,
                };
                LayeredGenerator::random(&arch, &mut rng_from_seed(*weight_seed))
            }
            GeneratorSpec::Identity { n, r } => LayeredGenerator::identity(*n, *r),
            GeneratorSpec::Orthonormal { k, n, r, weight_seed } => {
                LayeredGenerator::random_orthonormal(*k, *n, *r, &mut rng_from_seed(*weight_seed))
            }
        }
    }
}

/// Measurement grid of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSensing {
    pub m: Vec<usize>,
    #[serde(default)]
    pub covariance: Covariance,
    #[serde(default = "zero_tau")]
    pub tau: Vec<f64>,
    #[serde(default)]
    pub strategy: CorruptionKind,
}

fn zero_tau() -> Vec<f64> {
    vec![0.0]
}

/// Which recovery program a trial runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Least squares over the generator's range.
    #[default]
    Klasso,
    /// Correlation maximizer; needs `+/-1` data and a range in the unit ball.
    CorrMax,
}

/// Error column used by the slope fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMetric {
    #[default]
    ErrScaled,
    ErrCov,
}

/// A full sweep description, read from JSON.
///
/// `epsilon_target` is the target accuracy `epsilon` of the recovery bound;
/// when set, each cell of the summary carries the reference sample size
/// `k log(L r / (epsilon psi)) / epsilon^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub generator: GeneratorSpec,
    pub nonlinearity: String,
    pub sensing: SweepSensing,
    #[serde(default = "one_trial")]
    pub trials_per_cell: usize,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub epsilon_target: Option<f64>,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default)]
    pub fit_metric: FitMetric,
    /// Wall-clock time per trial; when false `runtime_ms` is written as 0 so
    /// that output files are byte-reproducible.
    #[serde(default)]
    pub record_timing: bool,
}

fn one_trial() -> usize {
    1
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.sensing.m.is_empty() || self.sensing.tau.is_empty() {
            return bad("m and tau lists must be nonempty".into());
        }
        if self.sensing.m.contains(&0) {
            return bad("m values must be positive".into());
        }
        if let Some(t) = self.sensing.tau.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return bad(format!("tau values must be >= 0, got {t}"));
        }
        if self.trials_per_cell == 0 {
            return bad("trials_per_cell must be at least 1".into());
        }
        if let Some(eps) = self.epsilon_target {
            if !(eps > 0.0 && eps.is_finite()) {
                return bad(format!("epsilon_target must be positive, got {eps}"));
            }
        }
        if self.fit_metric == FitMetric::ErrCov && self.sensing.covariance.is_identity() {
            return bad("err_cov fit needs a non-identity covariance".into());
        }
        self.solver.validate()?;
        self.nonlinearity.parse::<crate::observation::Nonlinearity>()?;
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut spec = Self::from_json(&std::fs::read_to_string(path)?)?;
        if let GeneratorSpec::File { path: model } = &mut spec.generator {
            if model.is_relative() {
                if let Some(dir) = path.parent() {
                    *model = dir.join(&*model);
                }
            }
        }
        Ok(spec)
    }
}
