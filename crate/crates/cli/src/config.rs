//! Run configuration: built-in defaults, overridden by a flat `key = value`
//! file, overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use toolsub::esf::EsfParams;
use toolsub::matcher::{MatcherConfig, ModelKind};
use toolsub::neuralnet::TrainConfig;
use toolsub::seed::derive_seed;
use toolsub::spectral::{default_compatibility, CompatibilityTable};

/// Training settings for one model kind.
#[derive(Debug, Clone, PartialEq)]
pub struct KindSettings {
    pub learning_rate: f64,
    pub epochs: usize,
    pub n_pairs: usize,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub lambda_reg: f64,
    pub regularize_trunk: bool,
    pub standardize: bool,
}

impl KindSettings {
    fn defaults(kind: ModelKind) -> Self {
        let m = MatcherConfig::for_kind(kind);
        Self {
            learning_rate: m.train.learning_rate,
            epochs: m.train.epochs,
            n_pairs: m.n_pairs,
            batch_size: m.train.batch_size,
            dropout_rate: m.train.dropout_rate,
            lambda_reg: m.train.lambda_reg,
            regularize_trunk: m.train.regularize_trunk,
            standardize: m.standardize,
        }
    }
}

/// Sizes of the synthetic corpus written by `gen-data`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSettings {
    pub cloud_points: usize,
    pub cloud_decimals: usize,
    pub shapes_per_family: usize,
    pub shape_holdout_per_family: usize,
    pub spectra_per_class: usize,
    pub spectra_holdout_per_class: usize,
    pub sets_per_action: usize,
    pub set_size: usize,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        Self {
            cloud_points: 3000,
            cloud_decimals: 6,
            shapes_per_family: 25,
            shape_holdout_per_family: 5,
            spectra_per_class: 40,
            spectra_holdout_per_class: 10,
            sets_per_action: 6,
            set_size: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub out_dir: PathBuf,
    pub compatibility: Option<PathBuf>,
    /// Worker threads; 0 lets the pool pick.
    pub jobs: usize,
    pub esf_samples: usize,
    pub esf_resolution: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub shape: KindSettings,
    pub material: KindSettings,
    pub corpus: CorpusSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let esf = EsfParams::default();
        let train = TrainConfig::default();
        Self {
            seed: 0,
            data_dir: "data".into(),
            model_dir: "models".into(),
            out_dir: "out".into(),
            compatibility: None,
            jobs: 0,
            esf_samples: esf.n_samples,
            esf_resolution: esf.voxel_resolution,
            adam_beta1: train.adam_beta1,
            adam_beta2: train.adam_beta2,
            adam_epsilon: train.adam_epsilon,
            shape: KindSettings::defaults(ModelKind::Shape),
            material: KindSettings::defaults(ModelKind::Material),
            corpus: CorpusSettings::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow::anyhow!("bad value `{value}` for `{key}`: {e}"))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_file(path)?;
        Ok(cfg)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        self.apply_str(&text)
            .with_context(|| format!("in config {}", path.display()))
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected `key = value`", i + 1))?;
            self.set(key.trim(), value.trim())
                .with_context(|| format!("line {}", i + 1))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some((kind, field)) = key
            .split_once('.')
            .filter(|(k, _)| *k == "shape" || *k == "material")
        {
            let s = if kind == "shape" {
                &mut self.shape
            } else {
                &mut self.material
            };
            match field {
                "learning_rate" => s.learning_rate = parse(key, value)?,
                "epochs" => s.epochs = parse(key, value)?,
                "n_pairs" => s.n_pairs = parse(key, value)?,
                "batch_size" => s.batch_size = parse(key, value)?,
                "dropout" => s.dropout_rate = parse(key, value)?,
                "lambda" => s.lambda_reg = parse(key, value)?,
                "regularize_trunk" => s.regularize_trunk = parse(key, value)?,
                "standardize" => s.standardize = parse(key, value)?,
                _ => bail!("unknown key `{key}`"),
            }
            return Ok(());
        }
        let c = &mut self.corpus;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "data_dir" => self.data_dir = value.into(),
            "model_dir" => self.model_dir = value.into(),
            "out_dir" => self.out_dir = value.into(),
            "compatibility" => self.compatibility = Some(value.into()),
            "jobs" => self.jobs = parse(key, value)?,
            "esf.samples" => self.esf_samples = parse(key, value)?,
            "esf.resolution" => self.esf_resolution = parse(key, value)?,
            "adam.beta1" => self.adam_beta1 = parse(key, value)?,
            "adam.beta2" => self.adam_beta2 = parse(key, value)?,
            "adam.epsilon" => self.adam_epsilon = parse(key, value)?,
            "corpus.cloud_points" => c.cloud_points = parse(key, value)?,
            "corpus.cloud_decimals" => c.cloud_decimals = parse(key, value)?,
            "corpus.shapes_per_family" => c.shapes_per_family = parse(key, value)?,
            "corpus.shape_holdout_per_family" => c.shape_holdout_per_family = parse(key, value)?,
            "corpus.spectra_per_class" => c.spectra_per_class = parse(key, value)?,
            "corpus.spectra_holdout_per_class" => c.spectra_holdout_per_class = parse(key, value)?,
            "corpus.sets_per_action" => c.sets_per_action = parse(key, value)?,
            "corpus.set_size" => c.set_size = parse(key, value)?,
            _ => bail!("unknown key `{key}`"),
        }
        Ok(())
    }

    pub fn esf_params(&self) -> EsfParams {
        EsfParams {
            n_samples: self.esf_samples,
            voxel_resolution: self.esf_resolution,
            rng_seed: derive_seed(self.seed, "esf"),
        }
    }

    pub fn kind(&self, kind: ModelKind) -> &KindSettings {
        match kind {
            ModelKind::Shape => &self.shape,
            ModelKind::Material => &self.material,
        }
    }

    pub fn matcher_config(&self, kind: ModelKind) -> MatcherConfig {
        let k = self.kind(kind);
        MatcherConfig {
            train: TrainConfig {
                learning_rate: k.learning_rate,
                adam_beta1: self.adam_beta1,
                adam_beta2: self.adam_beta2,
                adam_epsilon: self.adam_epsilon,
                lambda_reg: k.lambda_reg,
                regularize_trunk: k.regularize_trunk,
                epochs: k.epochs,
                batch_size: k.batch_size,
                rng_seed: derive_seed(self.seed, "train"),
                dropout_rate: k.dropout_rate,
            },
            n_pairs: k.n_pairs,
            standardize: k.standardize,
        }
    }

    pub fn compatibility_table(&self) -> Result<CompatibilityTable> {
        match &self.compatibility {
            Some(p) => CompatibilityTable::load(p)
                .with_context(|| format!("loading compatibility table {}", p.display())),
            None => Ok(default_compatibility()),
        }
    }

    /// Thread pool honouring `jobs`.
    pub fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .context("building thread pool")
    }
}
