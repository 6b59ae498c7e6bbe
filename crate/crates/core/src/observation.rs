//! Link functions `f` and Monte-Carlo estimation of their key parameters:
//! the mean term `mu = E[f(g) g]` and the sub-Gaussian norm
//! `psi = sup_{p >= 1} p^{-1/2} (E|f(g)|^p)^{1/p}`, with `g ~ N(0, 1)`.

use std::f64::consts::{FRAC_2_PI, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::check_finite;
use crate::linalg::Vector;
use crate::{Error, Result, SimRng};

/// Odd bounded function `theta` with `-1 <= theta <= 1`, used by the binary
/// model `E[y | a] = theta(<a, x>)`.
#[derive(Clone, Copy)]
pub struct Theta {
    pub name: &'static str,
    pub func: fn(f64) -> f64,
}

impl Theta {
    pub fn tanh() -> Self {
        Self {
            name: "tanh",
            func: f64::tanh,
        }
    }
}

impl fmt::Debug for Theta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Theta({})", self.name)
    }
}

impl PartialEq for Theta {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
    }
}

/// Measurement nonlinearity.
///
/// `sign(0)` is taken to be `+1` throughout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Nonlinearity {
    Linear,
    /// `xi * sign(x)` with `P(xi = -1) = p`, `p in [0, 1/2)`.
    SignFlip { p: f64 },
    /// `sign(x + sigma h)`, `h ~ N(0, 1)`.
    Probit { sigma: f64 },
    /// `+1` with probability `1 / (1 + exp(-x / s))`, else `-1`.
    Logistic { s: f64 },
    /// Mid-riser quantizer `delta * (floor(x / delta) + 1/2)`.
    Midriser { delta: f64 },
    /// Censoring `max(x, 0)`.
    Tobit,
    /// `+/-1` with conditional mean `theta(x)`.
    BinaryTheta(Theta),
}

#[inline]
fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl Nonlinearity {
    pub fn sign_flip(p: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&p) {
            return Err(Error::InvalidParameter(format!("flip probability {p} not in [0, 1/2)")));
        }
        Ok(Nonlinearity::SignFlip { p })
    }

    pub fn probit(sigma: f64) -> Result<Self> {
        positive("probit sigma", sigma)?;
        Ok(Nonlinearity::Probit { sigma })
    }

    pub fn logistic(s: f64) -> Result<Self> {
        positive("logistic scale", s)?;
        Ok(Nonlinearity::Logistic { s })
    }

    pub fn midriser(delta: f64) -> Result<Self> {
        positive("midriser step", delta)?;
        Ok(Nonlinearity::Midriser { delta })
    }

    /// Whether `apply` draws per-entry random bits.
    pub fn is_random(&self) -> bool {
        matches!(
            self,
            Nonlinearity::SignFlip { .. }
                | Nonlinearity::Probit { .. }
                | Nonlinearity::Logistic { .. }
                | Nonlinearity::BinaryTheta(_)
        )
    }

    /// Outputs are always `+/-1`.
    pub fn is_binary(&self) -> bool {
        matches!(
            self,
            Nonlinearity::SignFlip { .. }
                | Nonlinearity::Probit { .. }
                | Nonlinearity::Logistic { .. }
                | Nonlinearity::BinaryTheta(_)
        )
    }

    /// `f(c x) = f(x)` for all `c > 0` (in distribution for the random kinds).
    pub fn is_scale_invariant(&self) -> bool {
        matches!(self, Nonlinearity::SignFlip { .. })
    }

    /// `f(c x) = c f(x)` for all `c > 0`.
    pub fn is_positively_homogeneous(&self) -> bool {
        matches!(self, Nonlinearity::Linear | Nonlinearity::Tobit)
    }

    /// Evaluates `f(x)`, drawing from `rng` only for the random kinds.
    #[inline]
    pub fn eval(&self, x: f64, rng: &mut SimRng) -> f64 {
        match *self {
            Nonlinearity::Linear => x,
            Nonlinearity::SignFlip { p } => {
                let u: f64 = rng.random();
                if u < p {
                    -sign(x)
                } else {
                    sign(x)
                }
            }
            Nonlinearity::Probit { sigma } => {
                let h: f64 = rng.sample(StandardNormal);
                sign(x + sigma * h)
            }
            Nonlinearity::Logistic { s } => {
                let u: f64 = rng.random();
                if u < 1.0 / (1.0 + (-x / s).exp()) {
                    1.0
                } else {
                    -1.0
                }
            }
            Nonlinearity::Midriser { delta } => delta * ((x / delta).floor() + 0.5),
            Nonlinearity::Tobit => x.max(0.0),
            Nonlinearity::BinaryTheta(theta) => {
                let t = (theta.func)(x).clamp(-1.0, 1.0);
                let u: f64 = rng.random();
                if u < 0.5 * (1.0 + t) {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    fn eval_deterministic(&self, x: f64) -> f64 {
        match *self {
            Nonlinearity::Linear => x,
            Nonlinearity::Midriser { delta } => delta * ((x / delta).floor() + 0.5),
            Nonlinearity::Tobit => x.max(0.0),
            _ => unreachable!("random link evaluated without rng"),
        }
    }

    /// Elementwise application. Random kinds need `rng` and draw their bits
    /// i.i.d. per entry, in entry order.
    pub fn apply(&self, u: &Vector, rng: Option<&mut SimRng>) -> Result<Vector> {
        check_finite("link input", u.as_slice())?;
        if let Nonlinearity::BinaryTheta(theta) = self {
            if let Some(&x) = u.iter().find(|&&x| (theta.func)(x).abs() > 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "theta `{}` leaves [-1, 1] at {x}",
                    theta.name
                )));
            }
        }
        match rng {
            Some(rng) => Ok(u.map(|x| self.eval(x, rng))),
            None if self.is_random() => Err(Error::MissingRng(self.to_string())),
            None => Ok(u.map(|x| self.eval_deterministic(x))),
        }
    }

    /// Closed-form `mu` where one is known.
    ///
    /// For the mid-riser quantizer the value 1 is the small-step limit; the
    /// exact mean is `1 + 2 sum_j exp(-2 pi^2 j^2 / delta^2)`, indistinguishable
    /// from 1 for `delta <= 1`.
    pub fn mu_closed_form(&self) -> Option<f64> {
        match *self {
            Nonlinearity::Linear => Some(1.0),
            Nonlinearity::SignFlip { p } => Some((1.0 - 2.0 * p) * FRAC_2_PI.sqrt()),
            Nonlinearity::Tobit => Some(0.5),
            Nonlinearity::Midriser { .. } => Some(1.0),
            _ => None,
        }
    }

    /// Closed-form `psi` where one is known (`+/-1` outputs give exactly 1).
    pub fn psi_closed_form(&self) -> Option<f64> {
        if self.is_binary() {
            Some(1.0)
        } else {
            None
        }
    }
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{what} must be positive, got {v}")))
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Linear => write!(f, "linear"),
            Nonlinearity::SignFlip { p } => write!(f, "sign:p={p}"),
            Nonlinearity::Probit { sigma } => write!(f, "probit:sigma={sigma}"),
            Nonlinearity::Logistic { s } => write!(f, "logistic:s={s}"),
            Nonlinearity::Midriser { delta } => write!(f, "midriser:delta={delta}"),
            Nonlinearity::Tobit => write!(f, "tobit"),
            Nonlinearity::BinaryTheta(theta) => write!(f, "binary:theta={}", theta.name),
        }
    }
}

impl FromStr for Nonlinearity {
    type Err = Error;

    /// Parses `linear`, `sign:p=0.1`, `probit:sigma=1.0`, `logistic:s=1.0`,
    /// `midriser:delta=0.5`, `tobit` and `binary:theta=tanh`, ignoring case.
    fn from_str(text: &str) -> Result<Self> {
        let lower = text.trim().to_ascii_lowercase();
        let (kind, rest) = match lower.split_once(':') {
            Some((k, r)) => (k.trim(), Some(r)),
            None => (lower.as_str(), None),
        };
        let mut params: Vec<(String, String)> = Vec::new();
        if let Some(rest) = rest {
            for item in rest.split(',').filter(|s| !s.trim().is_empty()) {
                let (key, value) = item
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("expected key=value in `{item}`")))?;
                params.push((key.trim().to_string(), value.trim().to_string()));
            }
        }
        let allowed: &[&str] = match kind {
            "linear" | "tobit" => &[],
            "sign" => &["p"],
            "probit" => &["sigma"],
            "logistic" => &["s"],
            "midriser" => &["delta"],
            "binary" => &["theta"],
            other => return Err(Error::Parse(format!("unknown nonlinearity `{other}`"))),
        };
        if let Some((key, _)) = params.iter().find(|(k, _)| !allowed.contains(&k.as_str())) {
            return Err(Error::Parse(format!("unknown key `{key}` for `{kind}`")));
        }
        let number = |key: &str, default: Option<f64>| -> Result<f64> {
            match params.iter().find(|(k, _)| k == key) {
                Some((_, v)) => v
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("`{key}` is not a number: `{v}`"))),
                None => default.ok_or_else(|| Error::Parse(format!("`{kind}` requires `{key}`"))),
            }
        };
        match kind {
            "linear" => Ok(Nonlinearity::Linear),
            "tobit" => Ok(Nonlinearity::Tobit),
            "sign" => Nonlinearity::sign_flip(number("p", Some(0.0))?),
            "probit" => Nonlinearity::probit(number("sigma", Some(1.0))?),
            "logistic" => Nonlinearity::logistic(number("s", Some(1.0))?),
            "midriser" => Nonlinearity::midriser(number("delta", None)?),
            "binary" => {
                let name = params
                    .iter()
                    .find(|(k, _)| k == "theta")
                    .map(|(_, v)| v.as_str())
                    .unwrap_or("tanh");
                match name {
                    "tanh" => Ok(Nonlinearity::BinaryTheta(Theta::tanh())),
                    other => Err(Error::Parse(format!("unknown theta `{other}`"))),
                }
            }
            _ => unreachable!(),
        }
    }
}

/// Monte-Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ParamEstimate {
    pub value: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl ParamEstimate {
    /// Sample mean and `sd / sqrt(N)` of the given values.
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        Self {
            value: mean,
            stderr: (var / n as f64).sqrt(),
            samples: n,
        }
    }

    pub fn exact(value: f64) -> Self {
        Self {
            value,
            stderr: 0.0,
            samples: 0,
        }
    }
}

pub const MIN_MU_SAMPLES: usize = 1_000;
pub const MIN_PSI_SAMPLES: usize = 10_000;
pub const DEFAULT_MOMENT_GRID: [f64; 5] = [1.0, 2.0, 4.0, 6.0, 8.0];

/// Mean of `link(g) * g` over `samples` standard normal draws.
pub fn mu_estimate_with(
    samples: usize,
    rng: &mut SimRng,
    mut link: impl FnMut(f64, &mut SimRng) -> f64,
) -> Result<ParamEstimate> {
    if samples < MIN_MU_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "mu estimation needs at least {MIN_MU_SAMPLES} samples, got {samples}"
        )));
    }
    let values: Vec<f64> = (0..samples)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            link(g, rng) * g
        })
        .collect();
    Ok(ParamEstimate::from_samples(&values))
}

pub fn mu_monte_carlo(f: &Nonlinearity, samples: usize, rng: &mut SimRng) -> Result<ParamEstimate> {
    mu_estimate_with(samples, rng, |g, rng| f.eval(g, rng))
}

/// Finite-grid surrogate for the sub-Gaussian norm of `link(g)`:
/// `max_p p^{-1/2} (mean |X|^p)^{1/p}` over `moments`.
///
/// This is a lower estimate of the supremum over all `p >= 1`. The standard
/// error is the delta-method error at the maximizing moment.
pub fn psi_estimate_with(
    samples: usize,
    moments: &[f64],
    rng: &mut SimRng,
    mut link: impl FnMut(f64, &mut SimRng) -> f64,
) -> Result<ParamEstimate> {
    if samples < MIN_PSI_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "psi estimation needs at least {MIN_PSI_SAMPLES} samples, got {samples}"
        )));
    }
    if moments.is_empty() || moments.iter().any(|&p| !(p >= 1.0 && p.is_finite())) {
        return Err(Error::InvalidParameter("moment grid must be nonempty with every p >= 1".into()));
    }
    let abs: Vec<f64> = (0..samples)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            link(g, rng).abs()
        })
        .collect();
    let mut best = ParamEstimate {
        value: f64::NEG_INFINITY,
        stderr: 0.0,
        samples,
    };
    for &p in moments {
        let powered: Vec<f64> = abs.iter().map(|x| x.powf(p)).collect();
        let moment = ParamEstimate::from_samples(&powered);
        let value = moment.value.powf(1.0 / p) / p.sqrt();
        if value > best.value {
            let stderr = if moment.value > 0.0 {
                moment.value.powf(1.0 / p - 1.0) / (p * p.sqrt()) * moment.stderr
            } else {
                0.0
            };
            best = ParamEstimate {
                value,
                stderr,
                samples,
            };
        }
    }
    Ok(best)
}

pub fn psi_estimate(
    f: &Nonlinearity,
    samples: usize,
    moments: &[f64],
    rng: &mut SimRng,
) -> Result<ParamEstimate> {
    psi_estimate_with(samples, moments, rng, |g, rng| f.eval(g, rng))
}

/// `E|g| = sqrt(2 / pi)`.
pub fn mean_abs_gaussian() -> f64 {
    (2.0 / PI).sqrt()
}
