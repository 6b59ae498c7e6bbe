//! Generative priors: layered feedforward networks `G: B_2^k(r) -> R^n` and
//! bounded sparse sets.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len};
use crate::linalg::{spectral_norm, Mat, Vector};
use crate::{Error, Result, SimRng};

/// Elementwise activation. All variants are 1-Lipschitz.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative at the pre-activation `x`. The relu subgradient at 0 is 0.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-x).exp());
                s * (1.0 - s)
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    /// `act(c x) = c act(x)` for every `c >= 0`.
    pub fn is_positively_homogeneous(self) -> bool {
        matches!(self, Activation::Relu | Activation::Identity)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "identity" | "linear" => Ok(Activation::Identity),
            other => Err(Error::Parse(format!("unknown activation `{other}`"))),
        }
    }
}

/// One affine map followed by an activation: `z -> act(W z + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: Mat,
    pub offsets: Vector,
    pub activation: Activation,
}

impl Layer {
    pub fn new(weights: Mat, offsets: Vector, activation: Activation) -> Result<Self> {
        check_len("layer offsets", weights.nrows(), offsets.len())?;
        check_finite("layer weights", weights.as_slice())?;
        check_finite("layer offsets", offsets.as_slice())?;
        Ok(Self {
            weights,
            offsets,
            activation,
        })
    }

    /// Layer without offsets.
    pub fn linear(weights: Mat, activation: Activation) -> Self {
        let offsets = Vector::zeros(weights.nrows());
        Self {
            weights,
            offsets,
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// A `d`-layer feedforward generator over the latent ball of radius `r`.
///
/// Immutable once built; the constructor guarantees that layer dimensions
/// chain from `k` to `n` and that every parameter is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct LayeredGenerator {
    k: usize,
    n: usize,
    r: f64,
    layers: Vec<Layer>,
}

/// Pre-activations and output recorded by a forward pass, reused by
/// [`LayeredGenerator::vjp_with_tape`].
#[derive(Clone, Debug)]
pub struct ForwardTape {
    pre: Vec<Vector>,
    pub output: Vector,
}

/// Lipschitz constant bounds for a layered generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LipschitzBound {
    /// `(w * W_max)^d` with `w` the widest of `n_0, ..., n_d`.
    pub bound: f64,
    /// Product of per-layer spectral norms (never larger than `bound`).
    pub spectral_product: f64,
    pub width: usize,
    pub max_weight: f64,
    pub depth: usize,
}

impl LayeredGenerator {
    pub fn new(r: f64, layers: Vec<Layer>) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidModel(format!("latent radius must be positive, got {r}")));
        }
        let first = layers
            .first()
            .ok_or_else(|| Error::InvalidModel("a generator needs at least one layer".into()))?;
        let k = first.input_dim();
        if k == 0 {
            return Err(Error::InvalidModel("latent dimension must be positive".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::InvalidModel(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    i + 1,
                    pair[0].output_dim(),
                    i + 2,
                    pair[1].input_dim()
                )));
            }
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.output_dim() == 0 {
                return Err(Error::InvalidModel(format!("layer {} has no outputs", i + 1)));
            }
            if layer.offsets.len() != layer.output_dim() {
                return Err(Error::InvalidModel(format!("layer {} offsets have wrong length", i + 1)));
            }
            if layer.weights.iter().chain(layer.offsets.iter()).any(|x| !x.is_finite()) {
                return Err(Error::InvalidModel(format!("layer {} has non-finite parameters", i + 1)));
            }
        }
        let n = layers.last().map(Layer::output_dim).unwrap_or(0);
        Ok(Self { k, n, r, layers })
    }

    /// Single identity layer `G(z) = z` on `B_2^n(r)`.
    pub fn identity(n: usize, r: f64) -> Result<Self> {
        Self::new(r, vec![Layer::linear(Mat::identity(n, n), Activation::Identity)])
    }

    /// Linear generator `G(z) = U z` with `U` the orthonormal `Q` factor of an
    /// `n x k` Gaussian matrix. For `r <= 1` the range lies in the unit ball.
    pub fn random_orthonormal(k: usize, n: usize, r: f64, rng: &mut SimRng) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::InvalidModel(format!("need 1 <= k <= n, got k = {k}, n = {n}")));
        }
        let g = Mat::from_fn(n, k, |_, _| rng.sample::<f64, _>(StandardNormal));
        let q = g.qr().q();
        Self::new(r, vec![Layer::linear(q, Activation::Identity)])
    }

    /// Random network `k -> w -> ... -> w -> n` with `depth` layers, weights
    /// i.i.d. `N(0, 1/fan_in)`. Offsets, when enabled, use the same law.
    pub fn random(arch: &RandomArchitecture, rng: &mut SimRng) -> Result<Self> {
        if arch.depth == 0 {
            return Err(Error::InvalidModel("depth must be at least 1".into()));
        }
        let mut dims = vec![arch.k];
        dims.extend(std::iter::repeat_n(arch.width, arch.depth - 1));
        dims.push(arch.n);
        let mut layers = Vec::with_capacity(arch.depth);
        for i in 0..arch.depth {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            let weights = Mat::from_fn(fan_out, fan_in, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
            let offsets = if arch.offsets {
                Vector::from_fn(fan_out, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
            } else {
                Vector::zeros(fan_out)
            };
            let activation = if i + 1 == arch.depth {
                arch.output_activation
            } else {
                arch.activation
            };
            layers.push(Layer::new(weights, offsets, activation)?);
        }
        Self::new(arch.r, layers)
    }

    pub fn latent_dim(&self) -> usize {
        self.k
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Widest layer, counting the input and output dimensions.
    pub fn width(&self) -> usize {
        self.layers
            .iter()
            .map(Layer::output_dim)
            .chain(std::iter::once(self.k))
            .max()
            .unwrap_or(0)
    }

    pub fn has_offsets(&self) -> bool {
        self.layers.iter().any(|l| l.offsets.iter().any(|&b| b != 0.0))
    }

    /// Offset-free with positively homogeneous activations: the range is a cone
    /// (intersected with the image of the ball).
    pub fn is_cone(&self) -> bool {
        !self.has_offsets()
            && self
                .layers
                .iter()
                .all(|l| l.activation.is_positively_homogeneous())
    }

    pub fn with_radius(&self, r: f64) -> Result<Self> {
        Self::new(r, self.layers.clone())
    }

    /// Multiplies the last layer's weights and offsets by `c > 0`, which scales
    /// the whole output by `c` when the output activation is relu or identity.
    pub fn scale_output(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidParameter(format!("output scale must be positive, got {c}")));
        }
        let mut layers = self.layers.clone();
        let last = layers.last_mut().expect("validated non-empty");
        if !last.activation.is_positively_homogeneous() {
            return Err(Error::InvalidModel(format!(
                "cannot rescale through a {} output layer",
                last.activation.name()
            )));
        }
        last.weights *= c;
        last.offsets *= c;
        Self::new(self.r, layers)
    }

    /// Evaluates `G(z)`.
    pub fn forward(&self, z: &Vector) -> Result<Vector> {
        check_len("generator input", self.k, z.len())?;
        check_finite("generator input", z.as_slice())?;
        Ok(self.forward_unchecked(z))
    }

    pub(crate) fn forward_unchecked(&self, z: &Vector) -> Vector {
        let mut h = z.clone();
        for layer in &self.layers {
            let mut pre = &layer.weights * &h;
            pre += &layer.offsets;
            pre.apply(|x| *x = layer.activation.eval(*x));
            h = pre;
        }
        h
    }

    pub fn forward_with_tape(&self, z: &Vector) -> Result<ForwardTape> {
        check_len("generator input", self.k, z.len())?;
        check_finite("generator input", z.as_slice())?;
        Ok(self.tape_unchecked(z))
    }

    pub(crate) fn tape_unchecked(&self, z: &Vector) -> ForwardTape {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = z.clone();
        for layer in &self.layers {
            let mut p = &layer.weights * &h;
            p += &layer.offsets;
            h = p.map(|x| layer.activation.eval(x));
            pre.push(p);
        }
        ForwardTape { pre, output: h }
    }

    /// `J(z)^T v` where `J` is the Jacobian of [`forward`](Self::forward) at `z`.
    pub fn vjp(&self, z: &Vector, v: &Vector) -> Result<Vector> {
        check_len("vjp cotangent", self.n, v.len())?;
        check_finite("vjp cotangent", v.as_slice())?;
        let tape = self.forward_with_tape(z)?;
        Ok(self.vjp_with_tape(&tape, v))
    }

    pub fn vjp_with_tape(&self, tape: &ForwardTape, v: &Vector) -> Vector {
        let mut g = v.clone();
        for (layer, pre) in self.layers.iter().zip(&tape.pre).rev() {
            g.zip_apply(pre, |gi, p| *gi *= layer.activation.derivative(p));
            g = layer.weights.tr_mul(&g);
        }
        g
    }

    pub fn lipschitz_bound(&self) -> LipschitzBound {
        let width = self.width();
        let max_weight = self
            .layers
            .iter()
            .flat_map(|l| l.weights.iter())
            .fold(0.0_f64, |acc, w| acc.max(w.abs()));
        let depth = self.depth();
        let bound = (width as f64 * max_weight).powi(depth as i32);
        let spectral_product = self
            .layers
            .iter()
            .map(|l| spectral_norm(&l.weights))
            .product();
        LipschitzBound {
            bound,
            spectral_product,
            width,
            max_weight,
            depth,
        }
    }

    /// Upper bound on `sup ||G(z)||_2` over the latent ball: `||G(0)|| + L r`
    /// with the spectral-product `L`.
    pub fn range_norm_bound(&self) -> f64 {
        let at_zero = self.forward_unchecked(&Vector::zeros(self.k)).norm();
        at_zero + self.lipschitz_bound().spectral_product * self.r
    }

    pub fn to_file_repr(&self) -> ModelFile {
        ModelFile {
            k: self.k,
            n: self.n,
            r: self.r,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    weights: l
                        .weights
                        .row_iter()
                        .map(|row| row.iter().copied().collect())
                        .collect(),
                    offsets: l.offsets.iter().copied().collect(),
                    activation: l.activation.name().to_string(),
                })
                .collect(),
        }
    }

    pub fn from_file_repr(file: &ModelFile) -> Result<Self> {
        let mut layers = Vec::with_capacity(file.layers.len());
        for (i, lf) in file.layers.iter().enumerate() {
            let rows = lf.weights.len();
            let cols = lf.weights.first().map_or(0, Vec::len);
            if lf.weights.iter().any(|row| row.len() != cols) {
                return Err(Error::InvalidModel(format!("layer {} weights are ragged", i + 1)));
            }
            let flat: Vec<f64> = lf.weights.iter().flatten().copied().collect();
            let weights = Mat::from_row_slice(rows, cols, &flat);
            let offsets = Vector::from_vec(lf.offsets.clone());
            layers.push(Layer::new(weights, offsets, lf.activation.parse()?)?);
        }
        let model = Self::new(file.r, layers)?;
        if model.k != file.k || model.n != file.n {
            return Err(Error::InvalidModel(format!(
                "declared k = {}, n = {} but layers chain {} -> {}",
                file.k, file.n, model.k, model.n
            )));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file_repr())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file_repr(&serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk model layout; weights are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub k: usize,
    pub n: usize,
    pub r: f64,
    pub layers: Vec<LayerFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub weights: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
    pub activation: String,
}

/// Descriptor for a randomly initialised network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomArchitecture {
    pub k: usize,
    pub n: usize,
    /// Number of layers.
    pub depth: usize,
    /// Hidden width.
    pub width: usize,
    #[serde(default = "default_radius")]
    pub r: f64,
    #[serde(default)]
    pub offsets: bool,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_activation")]
    pub output_activation: Activation,
}

fn default_radius() -> f64 {
    1.0
}

fn default_activation() -> Activation {
    Activation::Relu
}

impl RandomArchitecture {
    pub fn relu(k: usize, n: usize, depth: usize, width: usize) -> Self {
        Self {
            k,
            n,
            depth,
            width,
            r: 1.0,
            offsets: false,
            activation: Activation::Relu,
            output_activation: Activation::Relu,
        }
    }
}

/// Radial projection onto `B_2(r)`.
pub fn project_latent(z: &Vector, r: f64) -> Result<Vector> {
    if !(r > 0.0) {
        return Err(Error::InvalidParameter(format!("projection radius must be positive, got {r}")));
    }
    check_finite("latent", z.as_slice())?;
    Ok(project_unchecked(z, r))
}

pub(crate) fn project_unchecked(z: &Vector, r: f64) -> Vector {
    let norm = z.norm();
    if norm <= r {
        z.clone()
    } else {
        let mut out = z * (r / norm);
        // guard against the last ulp pushing the norm above r
        let again = out.norm();
        if again > r {
            out *= r / again;
        }
        out
    }
}

/// Uniform sample from `B_2^k(r)`: Gaussian direction, radius `r U^{1/k}`.
pub fn sample_latent(k: usize, r: f64, rng: &mut SimRng) -> Vector {
    let mut z = Vector::from_fn(k, |_, _| StandardNormal.sample(rng));
    let norm = z.norm();
    if norm == 0.0 {
        return Vector::zeros(k);
    }
    let u: f64 = rng.random();
    z *= r * u.powf(1.0 / k as f64) / norm;
    z
}

/// The set of `s`-sparse vectors in `R^n` with norm at most `nu`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsePrior {
    pub n: usize,
    pub s: usize,
    pub nu: f64,
}

impl SparsePrior {
    pub fn new(n: usize, s: usize, nu: f64) -> Result<Self> {
        if s == 0 || s > n {
            return Err(Error::InvalidParameter(format!("sparsity {s} must lie in 1..={n}")));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidParameter(format!("norm radius must be positive, got {nu}")));
        }
        Ok(Self { n, s, nu })
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        x.len() == self.n
            && x.iter().filter(|&&v| v != 0.0).count() <= self.s
            && x.norm() <= self.nu + tol
    }
}
