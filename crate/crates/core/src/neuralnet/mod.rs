//! Tied-weight twin MLPs with a distance head, trained from scratch.

mod backprop;
mod train;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};
use crate::seed::{derive_seed, rng_from_seed};

pub use backprop::{backward, gradcheck, pair_loss, Gradients, Penalty};
pub use train::{pair_accuracy, train, TrainConfig};

/// Initial value of every head weight. Negative so that a larger embedding
/// distance lowers the similarity from the first step.
pub const HEAD_INIT: f64 = -0.01;

/// Element-wise distance fed to the head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "l2sq")]
    L2Squared,
}

impl Metric {
    #[inline]
    pub fn apply<T: Scalar>(self, diff: T) -> T {
        match self {
            Metric::L1 => diff.abs(),
            Metric::L2Squared => diff * diff,
        }
    }

    /// d/d(diff); the L1 kink at zero maps to 0.
    #[inline]
    pub(crate) fn derivative<T: Scalar>(self, diff: T) -> T {
        match self {
            Metric::L1 => {
                if diff > T::zero() {
                    T::one()
                } else if diff < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            }
            Metric::L2Squared => diff + diff,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::L1 => "l1",
            Metric::L2Squared => "l2sq",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l1" => Ok(Metric::L1),
            "l2sq" | "l2" => Ok(Metric::L2Squared),
            other => Err(Error::Unknown {
                kind: "metric",
                token: other.into(),
            }),
        }
    }
}

/// Per-layer multiplicative masks for inverted dropout: each entry is either
/// 0 or `1 / (1 - rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask<T> {
    layers: Vec<Array1<T>>,
}

impl<T: Scalar> DropoutMask<T> {
    pub fn sample<R: Rng>(hidden_sizes: &[usize], rate: f64, rng: &mut R) -> Self {
        let keep = 1.0 - rate;
        let scale = T::lit(1.0 / keep);
        let layers = hidden_sizes
            .iter()
            .map(|&n| {
                Array1::from_shape_fn(n, |_| {
                    if rng.gen::<f64>() < keep {
                        scale
                    } else {
                        T::zero()
                    }
                })
            })
            .collect();
        Self { layers }
    }

    pub fn ones(hidden_sizes: &[usize]) -> Self {
        Self {
            layers: hidden_sizes.iter().map(|&n| Array1::ones(n)).collect(),
        }
    }

    pub fn layers(&self) -> &[Array1<T>] {
        &self.layers
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a, T> {
    Eval,
    Train(&'a DropoutMask<T>),
}

/// Dense tanh network. `weights[l]` is `(out, in)`.
#[derive(Debug, Clone)]
pub struct Mlp<T> {
    layer_sizes: Vec<usize>,
    pub(crate) weights: Vec<Array2<T>>,
    pub(crate) biases: Vec<Array1<T>>,
    dropout_rate: f64,
}

/// Equality over parameters only; the training-time dropout rate is not
/// persisted and does not affect prediction.
impl<T: PartialEq> PartialEq for Mlp<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layer_sizes == other.layer_sizes
            && self.weights == other.weights
            && self.biases == other.biases
    }
}

impl<T: Scalar> Mlp<T> {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng>(layer_sizes: &[usize], dropout_rate: f64, rng: &mut R) -> Result<Self> {
        check_sizes(layer_sizes)?;
        check_rate(dropout_rate)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| {
                T::lit(rng.gen_range(-limit..=limit))
            }));
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            dropout_rate,
        })
    }

    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        check_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights: layer_sizes
                .windows(2)
                .map(|p| Array2::zeros((p[1], p[0])))
                .collect(),
            biases: layer_sizes[1..].iter().map(|&n| Array1::zeros(n)).collect(),
            dropout_rate: 0.0,
        })
    }

    /// Rebuilds a network from row-major weight matrices.
    pub fn from_parts(
        layer_sizes: &[usize],
        weights: Vec<Vec<T>>,
        biases: Vec<Vec<T>>,
    ) -> Result<Self> {
        check_sizes(layer_sizes)?;
        let n = layer_sizes.len() - 1;
        if weights.len() != n || biases.len() != n {
            return Err(Error::ModelMismatch(format!(
                "{n} layers declared but {} weight and {} bias arrays given",
                weights.len(),
                biases.len()
            )));
        }
        let mut ws = Vec::with_capacity(n);
        let mut bs = Vec::with_capacity(n);
        for (l, (w, b)) in weights.into_iter().zip(biases).enumerate() {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::ModelMismatch(format!(
                    "layer {l} has non-finite parameters"
                )));
            }
            let w = Array2::from_shape_vec((fan_out, fan_in), w).map_err(|_| {
                Error::DimensionMismatch {
                    expected: fan_out * fan_in,
                    got: 0,
                }
            })?;
            if b.len() != fan_out {
                return Err(Error::DimensionMismatch {
                    expected: fan_out,
                    got: b.len(),
                });
            }
            ws.push(w);
            bs.push(Array1::from(b));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights: ws,
            biases: bs,
            dropout_rate: 0.0,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn hidden_sizes(&self) -> &[usize] {
        &self.layer_sizes[1..]
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub(crate) fn set_dropout_rate(&mut self, rate: f64) {
        self.dropout_rate = rate;
    }

    pub fn weights(&self) -> &[Array2<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<T>] {
        &self.biases
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// f(x): output of the final hidden layer.
    pub fn forward(&self, x: &[T], mode: Mode<'_, T>) -> Result<Array1<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if let Mode::Train(mask) = mode {
            if mask.layers.len() != self.weights.len()
                || mask
                    .layers
                    .iter()
                    .zip(self.hidden_sizes())
                    .any(|(m, &n)| m.len() != n)
            {
                return Err(Error::ModelMismatch(
                    "dropout mask does not fit the network".into(),
                ));
            }
        }
        let mut h = Array1::from(x.to_vec());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = (w.dot(&h) + b).mapv(T::tanh);
            if let Mode::Train(mask) = mode {
                h *= &mask.layers[l];
            }
        }
        Ok(h)
    }
}

fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(Error::Config(format!(
            "invalid layer sizes {layer_sizes:?}"
        )));
    }
    Ok(())
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// `σ(wᵀ·dist(u, v) + β)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceHead<T> {
    pub(crate) weights: Array1<T>,
    pub(crate) bias: T,
    metric: Metric,
}

impl<T: Scalar> DistanceHead<T> {
    pub fn new(weights: Vec<T>, bias: T, metric: Metric) -> Result<Self> {
        if weights.iter().any(|v| !v.is_finite()) || !bias.is_finite() {
            return Err(Error::ModelMismatch(
                "head has non-finite parameters".into(),
            ));
        }
        Ok(Self {
            weights: Array1::from(weights),
            bias,
            metric,
        })
    }

    pub fn weights(&self) -> &Array1<T> {
        &self.weights
    }

    pub fn bias(&self) -> T {
        self.bias
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// Head logit. Symmetric in `u`, `v` because `|a - b|` and `(a - b)²`
    /// are exactly symmetric in IEEE arithmetic.
    pub fn logit(&self, u: &Array1<T>, v: &Array1<T>) -> T {
        let mut s = T::zero();
        for ((&w, &a), &b) in self.weights.iter().zip(u).zip(v) {
            s += w * self.metric.apply(a - b);
        }
        s + self.bias
    }

    pub fn similarity(&self, u: &Array1<T>, v: &Array1<T>) -> T {
        sigmoid(self.logit(u, v))
    }
}

/// One trunk shared by both twins plus the distance head.
#[derive(Debug, Clone, PartialEq)]
pub struct DualNetwork<T> {
    trunk: Mlp<T>,
    head: DistanceHead<T>,
}

impl<T: Scalar> DualNetwork<T> {
    pub fn new(
        layer_sizes: &[usize],
        metric: Metric,
        dropout_rate: f64,
        rng_seed: u64,
    ) -> Result<Self> {
        let mut rng = rng_from_seed(derive_seed(rng_seed, "net/init"));
        let trunk = Mlp::new(layer_sizes, dropout_rate, &mut rng)?;
        let head = DistanceHead::new(
            vec![T::lit(HEAD_INIT); trunk.output_dim()],
            T::zero(),
            metric,
        )?;
        Ok(Self { trunk, head })
    }

    pub fn from_parts(trunk: Mlp<T>, head: DistanceHead<T>) -> Result<Self> {
        if head.dim() != trunk.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: trunk.output_dim(),
                got: head.dim(),
            });
        }
        Ok(Self { trunk, head })
    }

    pub fn trunk(&self) -> &Mlp<T> {
        &self.trunk
    }

    pub fn head(&self) -> &DistanceHead<T> {
        &self.head
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Mlp<T>, &mut DistanceHead<T>) {
        (&mut self.trunk, &mut self.head)
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn embedding_dim(&self) -> usize {
        self.trunk.output_dim()
    }

    pub fn metric(&self) -> Metric {
        self.head.metric
    }

    pub fn is_finite(&self) -> bool {
        self.trunk.is_finite()
            && self.head.weights.iter().all(|v| v.is_finite())
            && self.head.bias.is_finite()
    }

    pub fn forward_embed(&self, x: &[T], mode: Mode<'_, T>) -> Result<Array1<T>> {
        self.trunk.forward(x, mode)
    }

    pub fn embed(&self, x: &[T]) -> Result<Array1<T>> {
        self.trunk.forward(x, Mode::Eval)
    }

    /// Similarity of two inputs with dropout disabled.
    pub fn predict_pair(&self, x_i: &[T], x_j: &[T]) -> Result<T> {
        let u = self.embed(x_i)?;
        let v = self.embed(x_j)?;
        Ok(self.head.similarity(&u, &v))
    }
}

/// Training pair. Feature buffers are shared so one example can appear in
/// many pairs without copying.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair<T> {
    pub x_i: Arc<[T]>,
    pub x_j: Arc<[T]>,
    pub y: bool,
}

impl<T: Scalar> LabeledPair<T> {
    pub fn new(x_i: impl Into<Arc<[T]>>, x_j: impl Into<Arc<[T]>>, y: bool) -> Self {
        Self {
            x_i: x_i.into(),
            x_j: x_j.into(),
            y,
        }
    }

    pub fn target(&self) -> T {
        if self.y {
            T::one()
        } else {
            T::zero()
        }
    }
}
