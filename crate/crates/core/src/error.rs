use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("random link `{0}` requires an rng")]
    MissingRng(String),
    #[error("expected a +/-1 valued vector in {0}")]
    NonBinary(&'static str),
    #[error("covariance is not positive semidefinite: {0}")]
    NotPsd(String),
    #[error("support enumeration too large: C({n}, {s}) = {count} exceeds {limit}")]
    EnumerationGuard {
        n: usize,
        s: usize,
        count: u128,
        limit: u128,
    },
    #[error("every restart diverged")]
    AllRestartsDiverged,
    #[error("generator range is not contained in the unit ball: found norm {0}")]
    NotInUnitBall(f64),
    #[error("could not construct close pairs for delta = {delta}, eta = {eta} within {attempts} attempts")]
    SamplingExhausted { delta: f64, eta: f64, attempts: usize },
    #[error("degenerate generator: {0}")]
    Degenerate(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            got,
        })
    }
}

pub(crate) fn check_finite(context: &'static str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}
