//! Parallel manifest resolution shared by the commands.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use toolsub::geometry::CloudFormat;
use toolsub::matcher::{
    label_example, parse_manifest, FeatureSource, FeatureStore, ManifestEntry, ModelKind,
};
use toolsub::spectral::{CompatibilityTable, MaterialClass};
use toolsub::Example;

use crate::config::RunConfig;

pub type Row = (Vec<f64>, Option<MaterialClass>);

fn cloud_path(e: &ManifestEntry) -> Option<&PathBuf> {
    match &e.source {
        FeatureSource::File { path, .. } if CloudFormat::from_path(path).is_some() => Some(path),
        _ => None,
    }
}

/// Features for every entry, in order. Each distinct cloud file is described
/// once, on the pool.
pub fn resolve_entries(
    cfg: &RunConfig,
    pool: &rayon::ThreadPool,
    kind: ModelKind,
    entries: &[ManifestEntry],
) -> Result<Vec<Row>> {
    let store = FeatureStore::<f64>::open(entries, kind, cfg.esf_params())?;
    let mut first: HashMap<&PathBuf, usize> = HashMap::new();
    for (i, e) in entries.iter().enumerate() {
        if let Some(p) = cloud_path(e) {
            first.entry(p).or_insert(i);
        }
    }
    let mut unique: Vec<usize> = first.values().copied().collect();
    unique.sort_unstable();
    let clouds: HashMap<&PathBuf, Row> = pool.install(|| {
        unique
            .par_iter()
            .map(|&i| {
                let e = &entries[i];
                let row = store.resolve(e)?;
                Ok((cloud_path(e).expect("cloud entry"), row))
            })
            .collect::<toolsub::Result<_>>()
    })?;
    entries
        .iter()
        .map(|e| match cloud_path(e) {
            Some(p) => Ok(clouds[p].clone()),
            None => Ok(store.resolve(e)?),
        })
        .collect()
}

pub fn load_examples(
    cfg: &RunConfig,
    pool: &rayon::ThreadPool,
    kind: ModelKind,
    manifest: &Path,
    table: &CompatibilityTable,
) -> Result<Vec<Example>> {
    let entries = parse_manifest(manifest)?;
    let rows = resolve_entries(cfg, pool, kind, &entries)
        .with_context(|| format!("resolving {}", manifest.display()))?;
    Ok(entries
        .iter()
        .zip(rows)
        .map(|(e, (values, material))| label_example(e, values, material, table))
        .collect())
}
