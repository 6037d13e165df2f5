//! Per-action models: pair construction, training, anchors and scoring.

mod dataset;
mod persist;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::ActionName;
use crate::error::{Error, Result};
use crate::esf::ESF_DIM;
use crate::neuralnet::{train, DualNetwork, LabeledPair, Metric, TrainConfig};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_from_seed};
use crate::spectral::{CompatibilityTable, MaterialClass, SPECTRUM_DIM};

pub use dataset::{
    label_example, load_dataset, parse_manifest, write_manifest, FeatureSource, FeatureStore,
    ManifestEntry,
};
pub use persist::{load_model, save_model, MODEL_VERSION};

/// Default number of training pairs per action.
pub const DEFAULT_PAIRS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Shape,
    Material,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::Shape, ModelKind::Material];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Shape => "shape",
            ModelKind::Material => "material",
        }
    }

    pub fn layer_sizes(self) -> [usize; 4] {
        match self {
            ModelKind::Shape => [ESF_DIM, 100, 100, 25],
            ModelKind::Material => [SPECTRUM_DIM, 426, 284, 128],
        }
    }

    pub fn input_dim(self) -> usize {
        self.layer_sizes()[0]
    }

    pub fn metric(self) -> Metric {
        match self {
            ModelKind::Shape => Metric::L2Squared,
            ModelKind::Material => Metric::L1,
        }
    }

    pub fn default_epochs(self) -> usize {
        match self {
            ModelKind::Shape => 60,
            ModelKind::Material => 20,
        }
    }

    pub fn default_learning_rate(self) -> f64 {
        match self {
            ModelKind::Shape => 1e-4,
            ModelKind::Material => 1e-3,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "shape" => Ok(ModelKind::Shape),
            "material" => Ok(ModelKind::Material),
            other => Err(Error::Unknown {
                kind: "model kind",
                token: other.into(),
            }),
        }
    }
}

/// One training object. Actions in neither set are unlabeled and the object
/// is left out of that action's pair pool.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample<T> {
    pub id: String,
    pub features: Arc<[T]>,
    pub positive_for: BTreeSet<ActionName>,
    pub negative_for: BTreeSet<ActionName>,
}

impl<T: Scalar> LabeledExample<T> {
    pub fn new(id: impl Into<String>, features: impl Into<Arc<[T]>>) -> Self {
        Self {
            id: id.into(),
            features: features.into(),
            positive_for: BTreeSet::new(),
            negative_for: BTreeSet::new(),
        }
    }

    pub fn positive(mut self, action: ActionName) -> Self {
        self.positive_for.insert(action);
        self
    }

    pub fn negative(mut self, action: ActionName) -> Self {
        self.negative_for.insert(action);
        self
    }

    /// Labels every action in `table` by whether `material` is compatible.
    pub fn with_material_labels(
        mut self,
        material: MaterialClass,
        table: &CompatibilityTable,
    ) -> Self {
        for action in table.actions() {
            if table.is_compatible(action, material) {
                self.positive_for.insert(action.clone());
            } else {
                self.negative_for.insert(action.clone());
            }
        }
        self
    }

    pub fn label_for(&self, action: &ActionName) -> Option<bool> {
        if self.positive_for.contains(action) {
            Some(true)
        } else if self.negative_for.contains(action) {
            Some(false)
        } else {
            None
        }
    }
}

/// Per-channel affine normalization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> Standardization<T> {
    /// Population statistics; channels with (near) zero spread keep unit scale.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [T]>) -> Result<Self> {
        let rows: Vec<&[T]> = rows.into_iter().collect();
        let first = rows
            .first()
            .ok_or_else(|| Error::TrainingData("no rows to standardize".into()))?;
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0f64; dim];
        for r in &rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.len(),
                });
            }
            for (m, v) in mean.iter_mut().zip(*r) {
                *m += v.to_f64_lossy();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0f64; dim];
        for r in &rows {
            for ((s, m), v) in var.iter_mut().zip(&mean).zip(*r) {
                *s += (v.to_f64_lossy() - m).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                T::lit(if sd > 1e-12 { sd } else { 1.0 })
            })
            .collect();
        Ok(Self {
            mean: mean.into_iter().map(T::lit).collect(),
            std,
        })
    }

    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: x.len(),
            });
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((&v, &m), &s)| (v - m) / s)
            .collect())
    }
}

/// Trained network for one (kind, action) plus its embedding anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionModel<T> {
    pub action: ActionName,
    pub kind: ModelKind,
    pub network: DualNetwork<T>,
    pub anchor: Option<Array1<T>>,
    pub standardization: Option<Standardization<T>>,
}

impl<T: Scalar> ActionModel<T> {
    pub fn new(action: ActionName, kind: ModelKind, network: DualNetwork<T>) -> Self {
        Self {
            action,
            kind,
            network,
            anchor: None,
            standardization: None,
        }
    }

    fn prepare(&self, x: &[T]) -> Result<Vec<T>> {
        match &self.standardization {
            Some(s) => s.apply(x),
            None => Ok(x.to_vec()),
        }
    }

    /// Eval-mode embedding of raw (unstandardized) features.
    pub fn embed(&self, x: &[T]) -> Result<Array1<T>> {
        self.network.embed(&self.prepare(x)?)
    }

    pub fn anchor(&self) -> Result<&Array1<T>> {
        self.anchor.as_ref().ok_or_else(|| Error::MissingAnchor {
            action: format!("{} {}", self.kind, self.action),
        })
    }
}

/// Settings for one training job beyond the optimizer itself.
#[derive(Debug, Clone, PartialEq)]
pub struct MatcherConfig {
    pub train: TrainConfig,
    pub n_pairs: usize,
    /// Fit per-channel standardization on the pair pool before training.
    pub standardize: bool,
}

impl MatcherConfig {
    /// Kind-specific defaults. Both kinds standardize their inputs; the
    /// shape net gets more epochs to make up for its lower learning rate.
    pub fn for_kind(kind: ModelKind) -> Self {
        Self {
            train: TrainConfig {
                learning_rate: kind.default_learning_rate(),
                epochs: kind.default_epochs(),
                ..TrainConfig::default()
            },
            n_pairs: DEFAULT_PAIRS,
            standardize: true,
        }
    }
}

type Split<'a, T> = (Vec<&'a LabeledExample<T>>, Vec<&'a LabeledExample<T>>);

fn split_pool<'a, T: Scalar>(
    dataset: &'a [LabeledExample<T>],
    action: &ActionName,
) -> Result<Split<'a, T>> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for ex in dataset {
        match ex.label_for(action) {
            Some(true) => pos.push(ex),
            Some(false) => neg.push(ex),
            None => {}
        }
    }
    if pos.len() < 2 || neg.is_empty() {
        return Err(Error::InsufficientData {
            action: action.to_string(),
            reason: format!(
                "need at least 2 positives and 1 negative, found {} and {}",
                pos.len(),
                neg.len()
            ),
        });
    }
    Ok((pos, neg))
}

/// Draws `n_pairs` pairs: `n_pairs / 2` with both members positive for
/// `action`, the rest uniformly over unordered pairs with at least one
/// negative member.
pub fn make_pairs<T: Scalar>(
    dataset: &[LabeledExample<T>],
    action: &ActionName,
    n_pairs: usize,
    rng_seed: u64,
) -> Result<Vec<LabeledPair<T>>> {
    let (pos, neg) = split_pool(dataset, action)?;
    let mut rng = rng_from_seed(derive_seed(rng_seed, &format!("pairs/{action}")));
    let n_pos = n_pairs / 2;
    let mut out = Vec::with_capacity(n_pairs);

    let distinct = |rng: &mut rand_chacha::ChaCha8Rng, len: usize| -> (usize, usize) {
        let a = rng.gen_range(0..len);
        let b = (a + rng.gen_range(1..len)) % len;
        (a, b)
    };
    for _ in 0..n_pos {
        let (a, b) = distinct(&mut rng, pos.len());
        out.push(LabeledPair::new(
            pos[a].features.clone(),
            pos[b].features.clone(),
            true,
        ));
    }

    // Unordered pairs with a negative: C(n, 2) negative-negative plus n * p mixed.
    let (n, p) = (neg.len() as f64, pos.len() as f64);
    let both_neg = n * (n - 1.0) / 2.0;
    let mixed = n * p;
    for _ in n_pos..n_pairs {
        let (x, y) = if rng.gen::<f64>() * (both_neg + mixed) < both_neg {
            let (a, b) = distinct(&mut rng, neg.len());
            (neg[a], neg[b])
        } else {
            let a = neg[rng.gen_range(0..neg.len())];
            let b = pos[rng.gen_range(0..pos.len())];
            if rng.gen::<bool>() {
                (a, b)
            } else {
                (b, a)
            }
        };
        out.push(LabeledPair::new(
            x.features.clone(),
            y.features.clone(),
            false,
        ));
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Mean eval-mode embedding of the positives. Embeddings are summed in a
/// canonical order so the result does not depend on list order.
pub fn compute_anchor<T: Scalar>(
    model: &ActionModel<T>,
    positives: &[&LabeledExample<T>],
) -> Result<Array1<T>> {
    if positives.is_empty() {
        return Err(Error::InsufficientData {
            action: model.action.to_string(),
            reason: "no positives to average".into(),
        });
    }
    if let Some(ex) = positives
        .iter()
        .find(|ex| ex.label_for(&model.action) != Some(true))
    {
        return Err(Error::InsufficientData {
            action: model.action.to_string(),
            reason: format!("`{}` is not a positive example", ex.id),
        });
    }
    let mut embeddings = positives
        .iter()
        .map(|ex| model.embed(&ex.features))
        .collect::<Result<Vec<_>>>()?;
    embeddings.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut sum = Array1::zeros(model.network.embedding_dim());
    for e in &embeddings {
        sum += e;
    }
    Ok(sum / T::from_usize_lossy(embeddings.len()))
}

/// `σ(wᵀ·dist(anchor, f(x)) + β)`.
pub fn score<T: Scalar>(model: &ActionModel<T>, features: &[T]) -> Result<T> {
    let anchor = model.anchor()?;
    let e = model.embed(features)?;
    Ok(model.network.head().similarity(anchor, &e))
}

/// Trained model and its per-epoch training loss.
#[derive(Debug, Clone)]
pub struct TrainedModel<T> {
    pub model: ActionModel<T>,
    pub loss_history: Vec<f64>,
}

/// Builds the kind's trunk, trains it on pairs for `action` and stores the
/// anchor of the training positives.
pub fn train_action_model<T: Scalar>(
    dataset: &[LabeledExample<T>],
    action: &ActionName,
    kind: ModelKind,
    cfg: &MatcherConfig,
) -> Result<TrainedModel<T>> {
    let (pos, neg) = split_pool(dataset, action)?;
    if let Some(ex) = pos
        .iter()
        .chain(&neg)
        .find(|ex| ex.features.len() != kind.input_dim())
    {
        return Err(Error::DimensionMismatch {
            expected: kind.input_dim(),
            got: ex.features.len(),
        });
    }
    let standardization = if cfg.standardize {
        Some(Standardization::fit(
            pos.iter().chain(&neg).map(|ex| &ex.features[..]),
        )?)
    } else {
        None
    };
    let prepared: Vec<LabeledExample<T>> = pos
        .iter()
        .chain(&neg)
        .map(|ex| {
            let features = match &standardization {
                Some(s) => s.apply(&ex.features)?,
                None => ex.features.to_vec(),
            };
            Ok(LabeledExample {
                features: features.into(),
                ..(*ex).clone()
            })
        })
        .collect::<Result<_>>()?;

    let root = cfg.train.rng_seed;
    let label = format!("{kind}/{action}");
    let pairs = make_pairs(&prepared, action, cfg.n_pairs, derive_seed(root, &label))?;
    let net = DualNetwork::new(
        &kind.layer_sizes(),
        kind.metric(),
        cfg.train.dropout_rate,
        derive_seed(root, &format!("{label}/init")),
    )?;
    let train_cfg = TrainConfig {
        rng_seed: derive_seed(root, &format!("{label}/train")),
        ..cfg.train.clone()
    };
    let (network, loss_history) = train(net, &pairs, &train_cfg)?;
    let mut model = ActionModel {
        action: action.clone(),
        kind,
        network,
        anchor: None,
        standardization,
    };
    model.anchor = Some(compute_anchor(&model, &pos)?);
    Ok(TrainedModel {
        model,
        loss_history,
    })
}

/// Fraction of examples labeled for the model's action whose score falls on
/// the correct side of 0.5.
pub fn classification_accuracy<T: Scalar>(
    model: &ActionModel<T>,
    examples: &[LabeledExample<T>],
) -> Result<f64> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for ex in examples {
        if let Some(label) = ex.label_for(&model.action) {
            total += 1;
            if (score(model, &ex.features)? > T::lit(0.5)) == label {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::InsufficientData {
            action: model.action.to_string(),
            reason: "no labeled examples to evaluate".into(),
        });
    }
    Ok(correct as f64 / total as f64)
}
