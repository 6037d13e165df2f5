//! Mini-batch Adam training with per-pair dropout masks.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::backprop::{evaluate, Gradients, Penalty};
use super::{DualNetwork, LabeledPair};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub lambda_reg: f64,
    /// Extend the penalty from the head weights to every trunk weight.
    pub regularize_trunk: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub rng_seed: u64,
    pub dropout_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            lambda_reg: 1e-4,
            regularize_trunk: false,
            epochs: 20,
            batch_size: 32,
            rng_seed: 0,
            dropout_rate: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.adam_epsilon.is_nan()
            || self.adam_epsilon <= 0.0
            || self.lambda_reg.is_nan()
            || self.lambda_reg < 0.0
        {
            return bad("adam_epsilon must be positive and lambda_reg non-negative");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1");
        }
        Ok(())
    }
}

struct Adam<T> {
    m: Gradients<T>,
    v: Gradients<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    fn new(net: &DualNetwork<T>) -> Self {
        Self {
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut DualNetwork<T>, grads: &Gradients<T>, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (T::lit(cfg.adam_beta1), T::lit(cfg.adam_beta2));
        let (one, lr, eps) = (
            T::one(),
            T::lit(cfg.learning_rate),
            T::lit(cfg.adam_epsilon),
        );
        let c1 = one - b1.powi(self.t);
        let c2 = one - b2.powi(self.t);
        let params = net.param_slices_mut();
        let gs = grads.slices();
        let ms = self.m.slices_mut();
        let vs = self.v.slices_mut();
        for (((p, g), m), v) in params.into_iter().zip(gs).zip(ms).zip(vs) {
            for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Trains `net` on `pairs`. Returns the trained network and the mean
/// training loss of every epoch (dropout active, penalty included).
pub fn train<T: Scalar>(
    mut net: DualNetwork<T>,
    pairs: &[LabeledPair<T>],
    cfg: &TrainConfig,
) -> Result<(DualNetwork<T>, Vec<f64>)> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::TrainingData("no training pairs".into()));
    }
    if pairs.iter().all(|p| p.y) || pairs.iter().all(|p| !p.y) {
        return Err(Error::TrainingData(
            "training pairs must include both labels".into(),
        ));
    }
    net.parts_mut().0.set_dropout_rate(cfg.dropout_rate);
    let penalty = Penalty {
        lambda: T::lit(cfg.lambda_reg),
        include_trunk: cfg.regularize_trunk,
    };
    let hidden: Vec<usize> = net.trunk().hidden_sizes().to_vec();
    let keep = 1.0 - cfg.dropout_rate;
    let scale = T::lit(1.0 / keep);
    let mut shuffle_rng = rng_from_seed(derive_seed(cfg.rng_seed, "train/shuffle"));
    let mut mask_rng = rng_from_seed(derive_seed(cfg.rng_seed, "train/dropout"));
    let mut adam = Adam::new(&net);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (b_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| pairs[i].clone()));
            let masks: Option<Vec<Array2<T>>> = (cfg.dropout_rate > 0.0).then(|| {
                hidden
                    .iter()
                    .map(|&n| {
                        Array2::from_shape_fn((chunk.len(), n), |_| {
                            if mask_rng.gen::<f64>() < keep {
                                scale
                            } else {
                                T::zero()
                            }
                        })
                    })
                    .collect()
            });
            let (loss, grads) = evaluate(&net, &batch, masks.as_deref(), penalty, true)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b_idx,
                    loss,
                });
            }
            adam.step(&mut net, &grads.expect("gradient requested"), cfg);
            if !net.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: b_idx,
                    loss: f64::NAN,
                });
            }
            total += loss * chunk.len() as f64;
        }
        let mean = total / pairs.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        history.push(mean);
    }
    Ok((net, history))
}

/// Fraction of pairs whose eval-mode prediction lands on the right side of 0.5.
pub fn pair_accuracy<T: Scalar>(net: &DualNetwork<T>, pairs: &[LabeledPair<T>]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::TrainingData("no pairs to score".into()));
    }
    let mut correct = 0usize;
    for p in pairs {
        let prob = net.predict_pair(&p.x_i, &p.x_j)?;
        if (prob > T::lit(0.5)) == p.y {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::Metric;
    use rand_distr::{Distribution, Normal};

    /// Pairs drawn from two Gaussian clusters; y = same cluster.
    fn cluster_pairs(n: usize, seed: u64) -> Vec<LabeledPair<f64>> {
        let mut rng = rng_from_seed(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let centers = [[1.0, 1.0, 0.0, -1.0], [-1.0, -1.0, 0.5, 1.0]];
        let draw = |c: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            centers[c].iter().map(|m| m + noise.sample(rng)).collect()
        };
        (0..n)
            .map(|k| {
                let y = k % 2 == 0;
                let ci = rng.gen_range(0..2);
                let cj = if y { ci } else { 1 - ci };
                let a = draw(ci, &mut rng);
                let b = draw(cj, &mut rng);
                LabeledPair::new(a, b, y)
            })
            .collect()
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            learning_rate: 1e-2,
            epochs: 60,
            dropout_rate: 0.0,
            rng_seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn separates_two_gaussian_clusters() {
        for metric in [Metric::L1, Metric::L2Squared] {
            let net = DualNetwork::<f64>::new(&[4, 8, 4], metric, 0.0, 1).unwrap();
            let (net, history) = train(net, &cluster_pairs(200, 2), &cfg()).unwrap();
            assert!(history.iter().all(|l| l.is_finite()));
            assert!(history.last() < history.first());
            let acc = pair_accuracy(&net, &cluster_pairs(200, 3)).unwrap();
            assert!(acc >= 0.95, "{metric}: {acc}");
        }
    }

    #[test]
    fn learns_with_dropout() {
        let net = DualNetwork::<f64>::new(&[4, 16, 8], Metric::L2Squared, 0.0, 1).unwrap();
        let c = TrainConfig {
            dropout_rate: 0.5,
            ..cfg()
        };
        let (net, history) = train(net, &cluster_pairs(200, 2), &c).unwrap();
        assert!(history.iter().all(|l| l.is_finite()));
        assert_eq!(net.trunk().dropout_rate(), 0.5);
        assert!(pair_accuracy(&net, &cluster_pairs(200, 3)).unwrap() >= 0.9);
    }

    #[test]
    fn training_is_reproducible() {
        let pairs = cluster_pairs(100, 4);
        let c = TrainConfig {
            dropout_rate: 0.5,
            epochs: 5,
            ..cfg()
        };
        let run = || {
            train(
                DualNetwork::<f64>::new(&[4, 6, 3], Metric::L1, 0.0, 9).unwrap(),
                &pairs,
                &c,
            )
            .unwrap()
        };
        let (a, ha) = run();
        let (b, hb) = run();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        let other = TrainConfig { rng_seed: 6, ..c };
        let (d, _) = train(
            DualNetwork::<f64>::new(&[4, 6, 3], Metric::L1, 0.0, 9).unwrap(),
            &pairs,
            &other,
        )
        .unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn f32_training_stays_finite() {
        let pairs: Vec<LabeledPair<f32>> = cluster_pairs(100, 4)
            .into_iter()
            .map(|p| {
                let f = |x: &[f64]| x.iter().map(|&v| v as f32).collect::<Vec<f32>>();
                LabeledPair::new(f(&p.x_i), f(&p.x_j), p.y)
            })
            .collect();
        let (net, history) = train(
            DualNetwork::<f32>::new(&[4, 6, 3], Metric::L2Squared, 0.0, 1).unwrap(),
            &pairs,
            &cfg(),
        )
        .unwrap();
        assert!(history.iter().all(|l| l.is_finite()));
        assert!(net.is_finite());
    }

    #[test]
    fn divergence_is_reported() {
        let c = TrainConfig {
            learning_rate: 1e300,
            ..cfg()
        };
        let mut pairs = cluster_pairs(64, 4);
        pairs[0] = LabeledPair::new(vec![1e300; 4], vec![-1e300; 4], true);
        let err = train(
            DualNetwork::<f64>::new(&[4, 6, 3], Metric::L2Squared, 0.0, 1).unwrap(),
            &pairs,
            &c,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }

    #[test]
    fn rejects_single_label_and_bad_config() {
        let pairs: Vec<_> = cluster_pairs(10, 1).into_iter().filter(|p| p.y).collect();
        let net = DualNetwork::<f64>::new(&[4, 3], Metric::L1, 0.0, 1).unwrap();
        assert!(matches!(
            train(net.clone(), &pairs, &cfg()),
            Err(Error::TrainingData(_))
        ));
        let bad = TrainConfig {
            dropout_rate: 1.0,
            ..cfg()
        };
        assert!(matches!(
            train(net, &cluster_pairs(10, 1), &bad),
            Err(Error::Config(_))
        ));
    }
}
