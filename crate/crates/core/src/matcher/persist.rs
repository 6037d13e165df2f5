//! JSON model files.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{ActionModel, ModelKind, Standardization};
use crate::action::ActionName;
use crate::error::{Error, Result};
use crate::neuralnet::{DistanceHead, DualNetwork, Metric, Mlp};
use crate::scalar::Scalar;

pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct StandardizationDoc<T> {
    mean: Vec<T>,
    std: Vec<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct ModelDoc<T> {
    version: u32,
    kind: ModelKind,
    action: ActionName,
    metric: Metric,
    layer_sizes: Vec<usize>,
    trunk_weights: Vec<Vec<T>>,
    trunk_biases: Vec<Vec<T>>,
    head_weights: Vec<T>,
    head_bias: T,
    input_standardization: Option<StandardizationDoc<T>>,
    anchor: Option<Vec<T>>,
}

impl<T: Scalar> ModelDoc<T> {
    fn from_model(m: &ActionModel<T>) -> Self {
        let trunk = m.network.trunk();
        let head = m.network.head();
        Self {
            version: MODEL_VERSION,
            kind: m.kind,
            action: m.action.clone(),
            metric: head.metric(),
            layer_sizes: trunk.layer_sizes().to_vec(),
            trunk_weights: trunk
                .weights()
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            trunk_biases: trunk.biases().iter().map(|b| b.to_vec()).collect(),
            head_weights: head.weights().to_vec(),
            head_bias: head.bias(),
            input_standardization: m.standardization.as_ref().map(|s| StandardizationDoc {
                mean: s.mean.clone(),
                std: s.std.clone(),
            }),
            anchor: m.anchor.as_ref().map(|a| a.to_vec()),
        }
    }

    fn into_model(self) -> Result<ActionModel<T>> {
        if self.version != MODEL_VERSION {
            return Err(Error::ModelMismatch(format!(
                "unsupported model version {}",
                self.version
            )));
        }
        let trunk = Mlp::from_parts(&self.layer_sizes, self.trunk_weights, self.trunk_biases)?;
        let head = DistanceHead::new(self.head_weights, self.head_bias, self.metric)?;
        let network = DualNetwork::from_parts(trunk, head)?;
        if let Some(a) = &self.anchor {
            if a.len() != network.embedding_dim() {
                return Err(Error::DimensionMismatch {
                    expected: network.embedding_dim(),
                    got: a.len(),
                });
            }
        }
        let standardization = match self.input_standardization {
            Some(s)
                if s.mean.len() != network.input_dim() || s.std.len() != network.input_dim() =>
            {
                return Err(Error::DimensionMismatch {
                    expected: network.input_dim(),
                    got: s.mean.len().min(s.std.len()),
                })
            }
            Some(s) => Some(Standardization {
                mean: s.mean,
                std: s.std,
            }),
            None => None,
        };
        Ok(ActionModel {
            action: self.action,
            kind: self.kind,
            network,
            anchor: self.anchor.map(Array1::from),
            standardization,
        })
    }
}

pub fn save_model<T: Scalar>(model: &ActionModel<T>, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &ModelDoc::from_model(model)).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<ActionModel<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let doc: ModelDoc<T> =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })?;
    doc.into_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::{compute_anchor, score, LabeledExample};
    use crate::seed::rng_from_seed;
    use rand::Rng;

    fn model<T: Scalar>() -> (ActionModel<T>, Vec<LabeledExample<T>>) {
        let mut rng = rng_from_seed(4);
        let hit = ActionName::new("Hit").unwrap();
        let data: Vec<LabeledExample<T>> = (0..6)
            .map(|i| {
                let f: Vec<T> = (0..5).map(|_| T::lit(rng.gen_range(-2.0..2.0))).collect();
                LabeledExample::new(format!("x{i}"), f).positive(hit.clone())
            })
            .collect();
        let net = DualNetwork::new(&[5, 4, 3], Metric::L1, 0.0, 11).unwrap();
        let mut m = ActionModel::new(hit, ModelKind::Material, net);
        m.standardization =
            Some(Standardization::fit(data.iter().map(|e| &e.features[..])).unwrap());
        let refs: Vec<&LabeledExample<T>> = data.iter().collect();
        m.anchor = Some(compute_anchor(&m, &refs).unwrap());
        (m, data)
    }

    #[test]
    fn f64_round_trip_is_bit_exact() {
        let (m, data) = model::<f64>();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_model(&m, &p).unwrap();
        let back: ActionModel<f64> = load_model(&p).unwrap();
        assert_eq!(back, m);
        for ex in &data {
            assert_eq!(
                score(&m, &ex.features).unwrap().to_bits(),
                score(&back, &ex.features).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn f32_round_trip_is_bit_exact() {
        let (m, _) = model::<f32>();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        save_model(&m, &p).unwrap();
        assert_eq!(load_model::<f32>(&p).unwrap(), m);
    }

    #[test]
    fn document_carries_schema_fields() {
        let (m, _) = model::<f64>();
        let v = serde_json::to_value(ModelDoc::from_model(&m)).unwrap();
        assert_eq!(v["kind"], "material");
        assert_eq!(v["metric"], "l1");
        assert_eq!(v["action"], "Hit");
        assert_eq!(v["layer_sizes"], serde_json::json!([5, 4, 3]));
        assert_eq!(v["trunk_weights"][0].as_array().unwrap().len(), 20);
        assert!(v["input_standardization"]["mean"].is_array());
        assert_eq!(v["anchor"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let (m, _) = model::<f64>();
        let mut v = serde_json::to_value(ModelDoc::from_model(&m)).unwrap();
        v["anchor"] = serde_json::json!([1.0]);
        fs::write(&p, v.to_string()).unwrap();
        assert!(matches!(
            load_model::<f64>(&p),
            Err(Error::DimensionMismatch { .. })
        ));
        v["version"] = serde_json::json!(99);
        fs::write(&p, v.to_string()).unwrap();
        assert!(matches!(
            load_model::<f64>(&p),
            Err(Error::ModelMismatch(_))
        ));
        fs::write(&p, "{").unwrap();
        assert!(matches!(load_model::<f64>(&p), Err(Error::Json { .. })));
        assert!(matches!(
            load_model::<f64>(&dir.path().join("none.json")),
            Err(Error::Io { .. })
        ));
    }
}
