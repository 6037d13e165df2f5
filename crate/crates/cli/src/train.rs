//! `train`: one model per (kind, action).

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use toolsub::matcher::{save_model, train_action_model, ModelKind, TrainedModel};
use toolsub::ActionName;

use crate::config::RunConfig;
use crate::features::load_examples;
use crate::gendata::{MATERIAL_TRAIN, SHAPE_TRAIN};

pub fn model_path(dir: &Path, kind: ModelKind, action: &ActionName) -> PathBuf {
    dir.join(format!("{kind}-{action}.json"))
}

pub fn loss_log_path(dir: &Path, kind: ModelKind, action: &ActionName) -> PathBuf {
    dir.join(format!("{kind}-{action}.loss.csv"))
}

pub fn default_manifest(cfg: &RunConfig, kind: ModelKind) -> PathBuf {
    cfg.data_dir.join(match kind {
        ModelKind::Shape => SHAPE_TRAIN,
        ModelKind::Material => MATERIAL_TRAIN,
    })
}

#[derive(Debug, Clone, Default)]
pub struct TrainRequest {
    pub kinds: Vec<ModelKind>,
    /// `None` trains every action in the compatibility table.
    pub actions: Option<Vec<ActionName>>,
    /// Overrides the kind's default manifest; only valid with one kind.
    pub manifest: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
}

/// Trains the requested models and returns the written model paths.
pub fn cmd_train(cfg: &RunConfig, req: &TrainRequest, w: &mut dyn Write) -> Result<Vec<PathBuf>> {
    if req.manifest.is_some() && req.kinds.len() != 1 {
        bail!("--manifest needs a single model kind");
    }
    let table = cfg.compatibility_table()?;
    let actions = match &req.actions {
        Some(a) => a.clone(),
        None => table.actions().cloned().collect(),
    };
    let model_dir = req
        .model_dir
        .clone()
        .unwrap_or_else(|| cfg.model_dir.clone());
    fs::create_dir_all(&model_dir).with_context(|| format!("creating {}", model_dir.display()))?;
    let pool = cfg.pool()?;

    let mut written = Vec::new();
    for &kind in &req.kinds {
        let manifest = req
            .manifest
            .clone()
            .unwrap_or_else(|| default_manifest(cfg, kind));
        if !manifest.exists() {
            bail!("{} manifest {} does not exist", kind, manifest.display());
        }
        let started = Instant::now();
        let dataset = load_examples(cfg, &pool, kind, &manifest, &table)?;
        log::info!(
            "{kind}: {} examples loaded in {:.2?}",
            dataset.len(),
            started.elapsed()
        );

        let mcfg = cfg.matcher_config(kind);
        let trained: Vec<TrainedModel<f64>> = pool.install(|| {
            actions
                .par_iter()
                .map(|action| {
                    let t = Instant::now();
                    let m = train_action_model(&dataset, action, kind, &mcfg)
                        .with_context(|| format!("training {kind} model for `{action}`"))?;
                    log::info!("{kind}/{action} trained in {:.2?}", t.elapsed());
                    Ok(m)
                })
                .collect::<Result<_>>()
        })?;

        for t in &trained {
            let action = &t.model.action;
            let path = model_path(&model_dir, kind, action);
            save_model(&t.model, &path)
                .with_context(|| format!("saving {kind} model for `{action}`"))?;
            let mut log_text = String::from("epoch,loss\n");
            for (e, l) in t.loss_history.iter().enumerate() {
                let _ = writeln!(log_text, "{},{l}", e + 1);
            }
            let log_path = loss_log_path(&model_dir, kind, action);
            fs::write(&log_path, log_text)
                .with_context(|| format!("writing {}", log_path.display()))?;
            writeln!(
                w,
                "{kind} {action}: final loss {:.6} -> {}",
                t.loss_history.last().copied().unwrap_or(f64::NAN),
                path.display()
            )?;
            written.push(path);
        }
    }
    Ok(written)
}
