//! Regularized binary cross-entropy over pairs and its analytic gradient.

use ndarray::{concatenate, Array1, Array2, Axis};
use rand::Rng;

use super::{DualNetwork, LabeledPair, Metric};
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};
use crate::seed::{derive_seed, rng_from_seed};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const LOSS_EPS: f64 = 1e-12;

const GRADCHECK_PAIRS: usize = 10;
const GRADCHECK_STEP: f64 = 1e-5;
const L1_MARGIN: f64 = 1e-3;

/// `λ‖w‖²` on the head weights, optionally extended to every trunk weight
/// matrix (biases are never penalized).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalty<T> {
    pub lambda: T,
    pub include_trunk: bool,
}

impl<T: Scalar> Penalty<T> {
    pub fn head(lambda: T) -> Self {
        Self {
            lambda,
            include_trunk: false,
        }
    }

    pub fn none() -> Self {
        Self::head(T::zero())
    }
}

/// Gradients laid out like the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub trunk_weights: Vec<Array2<T>>,
    pub trunk_biases: Vec<Array1<T>>,
    pub head_weights: Array1<T>,
    pub head_bias: T,
}

impl<T: Scalar> Gradients<T> {
    pub(crate) fn zeros_like(net: &DualNetwork<T>) -> Self {
        Self {
            trunk_weights: net
                .trunk()
                .weights
                .iter()
                .map(|w| Array2::zeros(w.raw_dim()))
                .collect(),
            trunk_biases: net
                .trunk()
                .biases
                .iter()
                .map(|b| Array1::zeros(b.len()))
                .collect(),
            head_weights: Array1::zeros(net.head().dim()),
            head_bias: T::zero(),
        }
    }

    /// Flat views in the same order as [`DualNetwork::param_slices_mut`].
    pub(crate) fn slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        out.extend(
            self.trunk_weights
                .iter()
                .map(|w| w.as_slice().expect("standard layout")),
        );
        out.extend(
            self.trunk_biases
                .iter()
                .map(|b| b.as_slice().expect("standard layout")),
        );
        out.push(self.head_weights.as_slice().expect("standard layout"));
        out.push(std::slice::from_ref(&self.head_bias));
        out
    }

    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        out.extend(
            self.trunk_weights
                .iter_mut()
                .map(|w| w.as_slice_mut().expect("standard layout")),
        );
        out.extend(
            self.trunk_biases
                .iter_mut()
                .map(|b| b.as_slice_mut().expect("standard layout")),
        );
        out.push(self.head_weights.as_slice_mut().expect("standard layout"));
        out.push(std::slice::from_mut(&mut self.head_bias));
        out
    }

    pub fn max_abs(&self) -> T {
        self.slices()
            .into_iter()
            .flatten()
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

impl<T: Scalar> DualNetwork<T> {
    pub(crate) fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let (trunk, head) = self.parts_mut();
        let mut out: Vec<&mut [T]> = Vec::new();
        out.extend(
            trunk
                .weights
                .iter_mut()
                .map(|w| w.as_slice_mut().expect("standard layout")),
        );
        out.extend(
            trunk
                .biases
                .iter_mut()
                .map(|b| b.as_slice_mut().expect("standard layout")),
        );
        out.push(head.weights.as_slice_mut().expect("standard layout"));
        out.push(std::slice::from_mut(&mut head.bias));
        out
    }
}

/// Mean BCE plus penalty, dropout disabled.
pub fn pair_loss<T: Scalar>(
    net: &DualNetwork<T>,
    batch: &[LabeledPair<T>],
    penalty: Penalty<T>,
) -> Result<T> {
    evaluate(net, batch, None, penalty, false).map(|(loss, _)| T::lit(loss))
}

/// Analytic gradient of [`pair_loss`] with respect to every parameter.
pub fn backward<T: Scalar>(
    net: &DualNetwork<T>,
    batch: &[LabeledPair<T>],
    penalty: Penalty<T>,
) -> Result<Gradients<T>> {
    evaluate(net, batch, None, penalty, true).map(|(_, g)| g.expect("gradient requested"))
}

fn stack_inputs<T: Scalar>(batch: &[LabeledPair<T>], dim: usize) -> Result<Array2<T>> {
    let b = batch.len();
    let mut x = Array2::zeros((2 * b, dim));
    for (k, pair) in batch.iter().enumerate() {
        for (row, src) in [(k, &pair.x_i), (k + b, &pair.x_j)] {
            if src.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: src.len(),
                });
            }
            x.row_mut(row).assign(&ndarray::ArrayView1::from(&src[..]));
        }
    }
    Ok(x)
}

/// Batched forward pass over both twins, and optionally the backward pass.
///
/// `masks[l]` holds one dropout row per pair for hidden layer `l`; both twins
/// of a pair use the same row.
pub(crate) fn evaluate<T: Scalar>(
    net: &DualNetwork<T>,
    batch: &[LabeledPair<T>],
    masks: Option<&[Array2<T>]>,
    penalty: Penalty<T>,
    want_grad: bool,
) -> Result<(f64, Option<Gradients<T>>)> {
    if batch.is_empty() {
        return Err(Error::TrainingData("empty batch".into()));
    }
    let b = batch.len();
    let trunk = net.trunk();
    let head = net.head();
    let metric = head.metric();
    let n_layers = trunk.weights.len();

    let twin_masks: Option<Vec<Array2<T>>> = masks.map(|ms| {
        ms.iter()
            .map(|m| concatenate![Axis(0), m.view(), m.view()])
            .collect()
    });

    let mut inputs = vec![stack_inputs(batch, trunk.input_dim())?];
    let mut acts = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let z = inputs[l].dot(&trunk.weights[l].t()) + &trunk.biases[l];
        let a = z.mapv(T::tanh);
        let h = match &twin_masks {
            Some(ms) => &a * &ms[l],
            None => a.clone(),
        };
        acts.push(a);
        inputs.push(h);
    }
    let out = &inputs[n_layers];
    let diff = &out.slice(ndarray::s![..b, ..]) - &out.slice(ndarray::s![b.., ..]);
    let dist = diff.mapv(|d| metric.apply(d));
    let logits = dist.dot(&head.weights) + head.bias;
    let probs = logits.mapv(sigmoid);

    let mut loss = 0.0;
    for (p, pair) in probs.iter().zip(batch) {
        let p = p.to_f64_lossy().clamp(LOSS_EPS, 1.0 - LOSS_EPS);
        loss -= if pair.y { p.ln() } else { (1.0 - p).ln() };
    }
    loss /= b as f64;
    let lambda = penalty.lambda.to_f64_lossy();
    loss += lambda
        * head
            .weights
            .iter()
            .map(|w| w.to_f64_lossy().powi(2))
            .sum::<f64>();
    if penalty.include_trunk {
        for w in &trunk.weights {
            loss += lambda * w.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>();
        }
    }
    if !want_grad {
        return Ok((loss, None));
    }

    let two_lambda = penalty.lambda + penalty.lambda;
    let inv_b = T::one() / T::from_usize_lossy(b);
    let dlogit: Array1<T> = probs
        .iter()
        .zip(batch)
        .map(|(&p, pair)| (p - pair.target()) * inv_b)
        .collect();

    let mut grads = Gradients::zeros_like(net);
    grads.head_weights = dist.t().dot(&dlogit) + &(&head.weights * two_lambda);
    grads.head_bias = dlogit.sum();

    let ddist = dlogit.insert_axis(Axis(1)) * &head.weights;
    let ddiff = ddist * &diff.mapv(|d| metric.derivative(d));
    let neg = ddiff.mapv(|d| -d);
    let mut dh = concatenate![Axis(0), ddiff.view(), neg.view()];
    for l in (0..n_layers).rev() {
        if let Some(ms) = &twin_masks {
            dh *= &ms[l];
        }
        let dz = dh * &acts[l].mapv(|a| T::one() - a * a);
        let mut dw = dz.t().dot(&inputs[l]);
        if penalty.include_trunk {
            dw.scaled_add(two_lambda, &trunk.weights[l]);
        }
        grads.trunk_weights[l] = dw;
        grads.trunk_biases[l] = dz.sum_axis(Axis(0));
        dh = if l > 0 { dz.dot(&trunk.weights[l]) } else { dz };
    }
    Ok((loss, Some(grads)))
}

/// Largest relative error between [`backward`] and central finite
/// differences over every parameter of a small random network.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`. For the L1 head, input
/// pairs are resampled until every embedding difference is at least `1e-3`
/// away from the kink.
pub fn gradcheck(layer_sizes: &[usize], metric: Metric, rng_seed: u64) -> Result<f64> {
    if layer_sizes.iter().any(|&n| n > 10) {
        return Err(Error::Config(
            "gradcheck is limited to layers of at most 10 units".into(),
        ));
    }
    let mut net = DualNetwork::<f64>::new(layer_sizes, metric, 0.0, rng_seed)?;
    let mut rng = rng_from_seed(derive_seed(rng_seed, "gradcheck"));
    {
        let (_, head) = net.parts_mut();
        head.weights.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        head.bias = rng.gen_range(-0.5..0.5);
    }
    let dim = layer_sizes[0];
    let mut pairs = Vec::with_capacity(GRADCHECK_PAIRS);
    while pairs.len() < GRADCHECK_PAIRS {
        let a: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if metric == Metric::L1 {
            let (u, v) = (net.embed(&a)?, net.embed(&b)?);
            if u.iter().zip(&v).any(|(x, y)| (x - y).abs() < L1_MARGIN) {
                continue;
            }
        }
        let y = pairs.len() % 2 == 0;
        pairs.push(LabeledPair::new(a, b, y));
    }
    let penalty = Penalty {
        lambda: 1e-2,
        include_trunk: true,
    };
    let analytic = backward(&net, &pairs, penalty)?;
    let analytic: Vec<Vec<f64>> = analytic.slices().into_iter().map(<[f64]>::to_vec).collect();

    let mut worst = 0.0f64;
    for (g, group) in analytic.iter().enumerate() {
        for (i, &a) in group.iter().enumerate() {
            let orig = net.param_slices_mut()[g][i];
            net.param_slices_mut()[g][i] = orig + GRADCHECK_STEP;
            let plus = evaluate(&net, &pairs, None, penalty, false)?.0;
            net.param_slices_mut()[g][i] = orig - GRADCHECK_STEP;
            let minus = evaluate(&net, &pairs, None, penalty, false)?.0;
            net.param_slices_mut()[g][i] = orig;
            let numeric = (plus - minus) / (2.0 * GRADCHECK_STEP);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
