//! `extract-esf`: descriptors for a batch of cloud files.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use toolsub::esf::{compute_esf, write_descriptors};
use toolsub::geometry::{load_cloud, CloudFormat};
use toolsub::Descriptor;

use crate::config::RunConfig;

pub const DESCRIPTORS_FILE: &str = "descriptors.csv";

#[derive(Debug, Clone)]
pub struct Extracted {
    pub id: String,
    pub descriptor: Descriptor,
    pub elapsed: Duration,
}

pub fn extract_one(cfg: &RunConfig, path: &Path) -> Result<Extracted> {
    let started = Instant::now();
    let format = CloudFormat::from_path(path)
        .with_context(|| format!("{}: unknown cloud format", path.display()))?;
    let cloud = load_cloud::<f64>(path, format)?;
    let descriptor = compute_esf(&cloud, &cfg.esf_params())
        .with_context(|| format!("describing {}", path.display()))?;
    Ok(Extracted {
        id: cloud.id().to_string(),
        descriptor,
        elapsed: started.elapsed(),
    })
}

/// Rows come out in input order whatever the thread count.
pub fn cmd_extract_esf(
    cfg: &RunConfig,
    clouds: &[PathBuf],
    out: Option<&Path>,
    w: &mut dyn Write,
) -> Result<Vec<Extracted>> {
    if clouds.is_empty() {
        bail!("no cloud files given");
    }
    let out = out.map_or_else(|| cfg.out_dir.join(DESCRIPTORS_FILE), Path::to_path_buf);
    let rows: Vec<Extracted> = cfg.pool()?.install(|| {
        clouds
            .par_iter()
            .map(|p| extract_one(cfg, p))
            .collect::<Result<_>>()
    })?;
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = rows.iter().find(|r| !seen.insert(r.id.as_str())) {
        bail!("two clouds share the id `{}`", dup.id);
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let table: Vec<_> = rows
        .iter()
        .map(|r| (r.id.clone(), r.descriptor.clone()))
        .collect();
    write_descriptors(&out, &table)?;
    for r in &rows {
        writeln!(w, "{:<24} {:>8.1} ms", r.id, r.elapsed.as_secs_f64() * 1e3)?;
    }
    let total: Duration = rows.iter().map(|r| r.elapsed).sum();
    writeln!(
        w,
        "{} descriptors -> {} (mean {:.1} ms per cloud)",
        rows.len(),
        out.display(),
        total.as_secs_f64() * 1e3 / rows.len() as f64
    )?;
    Ok(rows)
}
