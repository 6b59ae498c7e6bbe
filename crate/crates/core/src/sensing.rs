//! Gaussian measurement matrices, clean observations and adversarial
//! corruption under the budget `(1/sqrt m) ||y_tilde - y||_2 <= tau`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::check_len;
use crate::linalg::{is_binary, psd_sqrt, Mat, Vector};
use crate::observation::Nonlinearity;
use crate::{Error, Result, SimRng};

/// Row covariance of the measurement vectors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Covariance {
    #[default]
    Identity,
    Diagonal { values: Vec<f64> },
    Full { matrix: Vec<Vec<f64>> },
}

impl Covariance {
    pub fn is_identity(&self) -> bool {
        matches!(self, Covariance::Identity)
    }

    /// Symmetric PSD square root for dimension `n`; `None` for the identity.
    pub fn sqrt(&self, n: usize) -> Result<Option<Mat>> {
        match self {
            Covariance::Identity => Ok(None),
            Covariance::Diagonal { values } => {
                check_len("diagonal covariance", n, values.len())?;
                if let Some(bad) = values.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
                    return Err(Error::NotPsd(format!("diagonal entry {bad}")));
                }
                Ok(Some(Mat::from_diagonal(&Vector::from_iterator(
                    n,
                    values.iter().map(|v| v.sqrt()),
                ))))
            }
            Covariance::Full { matrix } => {
                check_len("covariance rows", n, matrix.len())?;
                if let Some(row) = matrix.iter().find(|r| r.len() != n) {
                    return Err(Error::Dimension {
                        context: "covariance columns",
                        expected: n,
                        got: row.len(),
                    });
                }
                let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
                psd_sqrt(&Mat::from_row_slice(n, n, &flat)).map(Some)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensingConfig {
    pub m: usize,
    pub n: usize,
    #[serde(default)]
    pub covariance: Covariance,
    pub seed: u64,
}

impl SensingConfig {
    pub fn validate(&self) -> Result<Option<Mat>> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::InvalidParameter(format!(
                "need m >= 1 and n >= 1, got m = {}, n = {}",
                self.m, self.n
            )));
        }
        self.covariance.sqrt(self.n)
    }
}

/// `B` with i.i.d. `N(0, 1)` entries and `A = B sqrt(Sigma)`.
#[derive(Clone, Debug)]
pub struct MeasurementPair {
    pub a: Mat,
    pub b: Mat,
    pub sqrt_sigma: Option<Mat>,
}

/// Draws the white matrix `B` and the correlated `A = B sqrt(Sigma)`; rows of
/// `A` are then `N(0, Sigma)`. For the identity covariance `A == B`.
pub fn sample_matrix(cfg: &SensingConfig, rng: &mut SimRng) -> Result<MeasurementPair> {
    let sqrt_sigma = cfg.validate()?;
    let b = gaussian_matrix(cfg.m, cfg.n, rng);
    let a = match &sqrt_sigma {
        None => b.clone(),
        Some(root) => &b * root,
    };
    Ok(MeasurementPair { a, b, sqrt_sigma })
}

/// Row-major fill so that a prefix of rows does not depend on `m`.
pub fn gaussian_matrix(m: usize, n: usize, rng: &mut SimRng) -> Mat {
    let mut b = Mat::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            b[(i, j)] = rng.sample(StandardNormal);
        }
    }
    b
}

/// `y = f(A x)`.
pub fn observe(a: &Mat, x_star: &Vector, f: &Nonlinearity, rng: &mut SimRng) -> Result<Vector> {
    check_len("observe signal", a.ncols(), x_star.len())?;
    f.apply(&(a * x_star), Some(rng))
}

/// Corruption strategy without its data, as named in experiment specs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    #[default]
    None,
    RandomDirection,
    BinaryFlip,
    DecoyAlign,
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorruptionKind::None => "none",
            CorruptionKind::RandomDirection => "random_direction",
            CorruptionKind::BinaryFlip => "binary_flip",
            CorruptionKind::DecoyAlign => "decoy_align",
        })
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(CorruptionKind::None),
            "random_direction" | "random" => Ok(CorruptionKind::RandomDirection),
            "binary_flip" | "flip" => Ok(CorruptionKind::BinaryFlip),
            "decoy_align" | "decoy" => Ok(CorruptionKind::DecoyAlign),
            other => Err(Error::Parse(format!("unknown corruption strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum Corruption<'a> {
    None,
    /// Perturbation `tau sqrt(m) u` with `u` uniform on the sphere.
    RandomDirection,
    /// Flips `floor(m tau^2 / 4)` uniformly chosen entries of a `+/-1` vector.
    BinaryFlip,
    /// Perturbation `tau sqrt(m)` along `A x_decoy - y`, pulling the data
    /// toward a linear observation of the decoy.
    DecoyAlign(&'a Vector),
}

impl Corruption<'_> {
    pub fn kind(&self) -> CorruptionKind {
        match self {
            Corruption::None => CorruptionKind::None,
            Corruption::RandomDirection => CorruptionKind::RandomDirection,
            Corruption::BinaryFlip => CorruptionKind::BinaryFlip,
            Corruption::DecoyAlign(_) => CorruptionKind::DecoyAlign,
        }
    }
}

/// Number of sign flips allowed by the budget; each flip adds 4 to the
/// squared distance. The small slack absorbs rounding in `m tau^2`.
pub fn binary_flip_count(m: usize, tau: f64) -> usize {
    (((m as f64) * tau * tau / 4.0 + 1e-9).floor() as usize).min(m)
}

pub fn corrupt(
    y: &Vector,
    a: &Mat,
    tau: f64,
    strategy: Corruption<'_>,
    rng: &mut SimRng,
) -> Result<Vector> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidParameter(format!("corruption budget must be >= 0, got {tau}")));
    }
    let m = y.len();
    check_len("corruption observations", a.nrows(), m)?;
    if matches!(strategy, Corruption::BinaryFlip) && !is_binary(y.as_slice()) {
        return Err(Error::NonBinary("binary_flip corruption"));
    }
    if tau == 0.0 || m == 0 {
        return Ok(y.clone());
    }
    let radius = tau * (m as f64).sqrt();
    match strategy {
        Corruption::None => Ok(y.clone()),
        Corruption::RandomDirection => {
            let mut dir = Vector::from_fn(m, |_, _| rng.sample(StandardNormal));
            while dir.norm() == 0.0 {
                dir = Vector::from_fn(m, |_, _| rng.sample(StandardNormal));
            }
            Ok(y + dir.normalize() * radius)
        }
        Corruption::BinaryFlip => {
            let flips = binary_flip_count(m, tau);
            let mut out = y.clone();
            for i in rand::seq::index::sample(rng, m, flips) {
                out[i] = -out[i];
            }
            Ok(out)
        }
        Corruption::DecoyAlign(decoy) => {
            check_len("decoy signal", a.ncols(), decoy.len())?;
            let dir = a * decoy - y;
            let norm = dir.norm();
            if norm == 0.0 {
                return Ok(y.clone());
            }
            Ok(y + dir * (radius / norm))
        }
    }
}

/// `(1/sqrt m) ||y_tilde - y||_2`.
pub fn corruption_level(y: &Vector, y_tilde: &Vector) -> f64 {
    (y_tilde - y).norm() / (y.len() as f64).sqrt()
}

/// A fully generated measurement problem.
#[derive(Clone, Debug)]
pub struct SensingInstance {
    pub a: Mat,
    pub b: Mat,
    pub x_star: Vector,
    pub y: Vector,
    pub y_tilde: Vector,
    pub tau: f64,
}

impl SensingInstance {
    /// Samples the matrix, observes `x_star` through `f` and corrupts.
    pub fn generate(
        cfg: &SensingConfig,
        x_star: &Vector,
        f: &Nonlinearity,
        tau: f64,
        strategy: Corruption<'_>,
        rng: &mut SimRng,
    ) -> Result<Self> {
        let pair = sample_matrix(cfg, rng)?;
        let y = observe(&pair.a, x_star, f, rng)?;
        let y_tilde = corrupt(&y, &pair.a, tau, strategy, rng)?;
        Ok(Self {
            a: pair.a,
            b: pair.b,
            x_star: x_star.clone(),
            y,
            y_tilde,
            tau,
        })
    }
}

/// Debug dump of an instance: matrices are regenerated from the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceDump {
    pub seed: u64,
    pub config: SensingConfig,
    pub nonlinearity: String,
    pub tau: f64,
    pub strategy: CorruptionKind,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    fn cfg(m: usize, n: usize, covariance: Covariance) -> SensingConfig {
        SensingConfig {
            m,
            n,
            covariance,
            seed: 0,
        }
    }

    #[test]
    fn identity_covariance_gives_a_equal_b() {
        let mut rng = rng_from_seed(1);
        let pair = sample_matrix(&cfg(5, 3, Covariance::Identity), &mut rng).unwrap();
        assert_eq!(pair.a, pair.b);
        assert!(pair.sqrt_sigma.is_none());
    }

    #[test]
    fn matrices_are_seed_deterministic() {
        let c = cfg(7, 4, Covariance::Diagonal { values: vec![1.0, 2.0, 3.0, 4.0] });
        let a1 = sample_matrix(&c, &mut rng_from_seed(42)).unwrap().a;
        let a2 = sample_matrix(&c, &mut rng_from_seed(42)).unwrap().a;
        let bits = |m: &Mat| m.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a1), bits(&a2));
    }

    #[test]
    fn diagonal_covariance_column_variances() {
        let mut rng = rng_from_seed(7);
        let m = 100_000;
        let pair = sample_matrix(&cfg(m, 2, Covariance::Diagonal { values: vec![4.0, 1.0] }), &mut rng).unwrap();
        for (j, target) in [4.0, 1.0].into_iter().enumerate() {
            let col = pair.a.column(j);
            let var = col.iter().map(|v| v * v).sum::<f64>() / m as f64;
            // Var of the sample second moment of N(0, s) is 2 s^2 / m.
            let se = (2.0 * target * target / m as f64).sqrt();
            assert!((var - target).abs() <= 3.0 * se, "col {j}: {var}");
        }
    }

    #[test]
    fn invalid_covariances_are_rejected() {
        let mut rng = rng_from_seed(1);
        let bad = cfg(3, 2, Covariance::Diagonal { values: vec![1.0, -1.0] });
        assert!(matches!(sample_matrix(&bad, &mut rng), Err(Error::NotPsd(_))));
        let bad = cfg(3, 2, Covariance::Full { matrix: vec![vec![1.0, 3.0], vec![3.0, 1.0]] });
        assert!(matches!(sample_matrix(&bad, &mut rng), Err(Error::NotPsd(_))));
        let bad = cfg(3, 2, Covariance::Diagonal { values: vec![1.0] });
        assert!(sample_matrix(&bad, &mut rng).is_err());
        assert!(sample_matrix(&cfg(0, 2, Covariance::Identity), &mut rng).is_err());
    }

    #[test]
    fn observe_examples() {
        let mut rng = rng_from_seed(3);
        let a = gaussian_matrix(20, 4, &mut rng);
        let x = Vector::from_row_slice(&[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(observe(&a, &x, &Nonlinearity::Linear, &mut rng).unwrap(), &a * &x);
        let y = observe(&a, &x, &Nonlinearity::sign_flip(0.0).unwrap(), &mut rng).unwrap();
        for i in 0..20 {
            assert_eq!(y[i], if a[(i, 1)] >= 0.0 { 1.0 } else { -1.0 });
        }
        let y = observe(&a, &Vector::from_element(4, 0.5), &Nonlinearity::Tobit, &mut rng).unwrap();
        assert!(y.iter().all(|&v| v >= 0.0));
        assert!(observe(&a, &Vector::zeros(3), &Nonlinearity::Linear, &mut rng).is_err());
    }

    #[test]
    fn zero_budget_is_identity() {
        let mut rng = rng_from_seed(3);
        let a = gaussian_matrix(10, 3, &mut rng);
        let y = Vector::from_fn(10, |i, _| if i % 2 == 0 { 1.0 } else { -1.0 });
        let decoy = Vector::from_element(3, 1.0);
        for s in [
            Corruption::None,
            Corruption::RandomDirection,
            Corruption::BinaryFlip,
            Corruption::DecoyAlign(&decoy),
        ] {
            assert_eq!(corrupt(&y, &a, 0.0, s, &mut rng).unwrap(), y);
        }
    }

    #[test]
    fn random_direction_saturates_budget() {
        let mut rng = rng_from_seed(3);
        let a = gaussian_matrix(100, 3, &mut rng);
        let y = Vector::from_element(100, 0.3);
        let yt = corrupt(&y, &a, 0.5, Corruption::RandomDirection, &mut rng).unwrap();
        assert!(((&yt - &y).norm() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn binary_flip_count_and_level() {
        let mut rng = rng_from_seed(3);
        let a = gaussian_matrix(100, 3, &mut rng);
        let y = Vector::from_fn(100, |i, _| if i % 3 == 0 { 1.0 } else { -1.0 });
        let yt = corrupt(&y, &a, 0.4, Corruption::BinaryFlip, &mut rng).unwrap();
        let flipped = y.iter().zip(yt.iter()).filter(|(a, b)| a != b).count();
        assert_eq!(flipped, 4);
        assert!(is_binary(yt.as_slice()));
        assert!((corruption_level(&y, &yt) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn decoy_alignment_points_toward_decoy() {
        let mut rng = rng_from_seed(9);
        let a = gaussian_matrix(50, 4, &mut rng);
        let y = Vector::from_fn(50, |i, _| (i as f64).sin());
        let decoy = Vector::from_row_slice(&[1.0, -1.0, 0.5, 0.0]);
        let yt = corrupt(&y, &a, 0.2, Corruption::DecoyAlign(&decoy), &mut rng).unwrap();
        assert!((corruption_level(&y, &yt) - 0.2).abs() < 1e-12);
        let before = (&a * &decoy - &y).norm();
        let after = (&a * &decoy - &yt).norm();
        assert!((before - after - 0.2 * 50f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn corruption_errors() {
        let mut rng = rng_from_seed(3);
        let a = gaussian_matrix(4, 2, &mut rng);
        let y = Vector::from_row_slice(&[1.0, 0.5, -1.0, 1.0]);
        assert!(matches!(
            corrupt(&y, &a, 0.5, Corruption::BinaryFlip, &mut rng),
            Err(Error::NonBinary(_))
        ));
        assert!(corrupt(&y, &a, -0.1, Corruption::None, &mut rng).is_err());
    }

    #[test]
    fn strategy_names_parse() {
        for k in [
            CorruptionKind::None,
            CorruptionKind::RandomDirection,
            CorruptionKind::BinaryFlip,
            CorruptionKind::DecoyAlign,
        ] {
            assert_eq!(k.to_string().parse::<CorruptionKind>().unwrap(), k);
        }
        assert!("worst".parse::<CorruptionKind>().is_err());
    }
}
