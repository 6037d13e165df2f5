//! `gen-data`: a seeded synthetic corpus of tool clouds, spectra, training
//! manifests and evaluation sets.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use toolsub::geometry::{emit_cloud_fixed, synth_tool, CloudFormat, ToolFamily};
use toolsub::matcher::{write_manifest, FeatureSource, ManifestEntry};
use toolsub::ranker::{write_eval_manifest, EvalSpec};
use toolsub::seed::{derive_seed, rng_from_seed};
use toolsub::spectral::{synth_spectrum, write_spectra, CompatibilityTable, MaterialClass};
use toolsub::{ActionName, Reading};

use crate::config::RunConfig;

pub const CLOUD_DIR: &str = "clouds";
pub const SPECTRA_FILE: &str = "spectra.csv";
pub const SHAPE_TRAIN: &str = "shape_train.csv";
pub const SHAPE_HOLDOUT: &str = "shape_holdout.csv";
pub const MATERIAL_TRAIN: &str = "material_train.csv";
pub const MATERIAL_HOLDOUT: &str = "material_holdout.csv";
pub const CANDIDATES_SHAPE: &str = "candidates_shape.csv";
pub const CANDIDATES_MATERIAL: &str = "candidates_material.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const COMPATIBILITY_FILE: &str = "compatibility.txt";

/// What `gen-data` wrote.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSummary {
    pub clouds: usize,
    pub spectra: usize,
    pub eval_sets: usize,
}

fn cloud_id(family: ToolFamily, k: usize) -> String {
    format!("{}-{k:02}", family.name())
}

fn spectrum_id(material: MaterialClass, holdout: bool, k: usize) -> String {
    format!(
        "{}-{}{k:03}",
        material.name(),
        if holdout { 'h' } else { 't' }
    )
}

/// Positive for the family's action, negative for every other action.
fn shape_entry(
    out: &Path,
    id: String,
    family: ToolFamily,
    cloud: &str,
    actions: &[ActionName],
) -> ManifestEntry {
    let mut e = ManifestEntry::new(
        id,
        FeatureSource::File {
            path: out.join(CLOUD_DIR).join(format!("{cloud}.xyz")),
            row: None,
        },
    );
    for a in actions {
        if family.action().is_some_and(|fa| fa == a.as_str()) {
            e.positive_for.insert(a.clone());
        } else {
            e.negative_for.insert(a.clone());
        }
    }
    e
}

/// Material entries carry no labels; they come from the compatibility table.
fn material_entry(out: &Path, id: String, spectrum: &str) -> ManifestEntry {
    ManifestEntry::new(
        id,
        FeatureSource::File {
            path: out.join(SPECTRA_FILE),
            row: Some(spectrum.to_string()),
        },
    )
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_gen_data(
    cfg: &RunConfig,
    out: Option<&Path>,
    w: &mut dyn Write,
) -> Result<CorpusSummary> {
    let out: PathBuf = out.map_or_else(|| cfg.data_dir.clone(), Path::to_path_buf);
    let c = &cfg.corpus;
    if c.shapes_per_family < 2 || c.shape_holdout_per_family == 0 {
        bail!("need at least 2 training and 1 held-out cloud per family");
    }
    if c.spectra_per_class < 2 || c.spectra_holdout_per_class == 0 {
        bail!("need at least 2 training and 1 held-out spectrum per class");
    }
    if c.set_size < 4 {
        bail!(
            "evaluation sets need at least 4 candidates, got {}",
            c.set_size
        );
    }
    let table = cfg.compatibility_table()?;
    let actions: Vec<ActionName> = table.actions().cloned().collect();
    for a in &actions {
        if ToolFamily::for_action(a.as_str()).is_none() {
            bail!("no synthetic tool family for action `{a}`");
        }
    }
    let cloud_dir = out.join(CLOUD_DIR);
    fs::create_dir_all(&cloud_dir).with_context(|| format!("creating {}", cloud_dir.display()))?;

    // Clouds: k < shapes_per_family are training, the rest held out.
    let per_family = c.shapes_per_family + c.shape_holdout_per_family;
    let jobs: Vec<(ToolFamily, usize)> = ToolFamily::ALL
        .into_iter()
        .flat_map(|f| (0..per_family).map(move |k| (f, k)))
        .collect();
    cfg.pool()?.install(|| {
        jobs.par_iter().try_for_each(|&(family, k)| -> Result<()> {
            let id = cloud_id(family, k);
            let seed = derive_seed(cfg.seed, &format!("gen/{}/{k}", family.name()));
            let cloud = synth_tool::<f64>(family, seed, c.cloud_points)?.with_id(id.clone());
            let path = cloud_dir.join(format!("{id}.xyz"));
            emit_cloud_fixed(&cloud, &path, CloudFormat::Xyz, c.cloud_decimals)
                .with_context(|| format!("writing {}", path.display()))
        })
    })?;

    let mut shape_train = Vec::new();
    let mut shape_holdout = Vec::new();
    for &(family, k) in &jobs {
        let id = cloud_id(family, k);
        let entry = shape_entry(&out, id.clone(), family, &id, &actions);
        if k < c.shapes_per_family {
            shape_train.push(entry);
        } else {
            shape_holdout.push(entry);
        }
    }

    let per_class = c.spectra_per_class + c.spectra_holdout_per_class;
    let mut spectra: Vec<Reading> = Vec::new();
    let mut material_train = Vec::new();
    let mut material_holdout = Vec::new();
    for m in MaterialClass::ALL {
        for k in 0..per_class {
            let holdout = k >= c.spectra_per_class;
            let idx = if holdout { k - c.spectra_per_class } else { k };
            let id = spectrum_id(m, holdout, idx);
            let mut r: Reading = synth_spectrum(
                m,
                derive_seed(cfg.seed, &format!("gen/spectrum/{}/{k}", m.name())),
            );
            r.object_id = id.clone();
            spectra.push(r);
            let entry = material_entry(&out, id.clone(), &id);
            if holdout {
                material_holdout.push(entry);
            } else {
                material_train.push(entry);
            }
        }
    }
    let spectra_path = out.join(SPECTRA_FILE);
    write_spectra(&spectra_path, &spectra)?;

    let (specs, cand_shape, cand_material) = eval_sets(cfg, &out, &table, &actions)?;

    for (name, entries) in [
        (SHAPE_TRAIN, &shape_train),
        (SHAPE_HOLDOUT, &shape_holdout),
        (MATERIAL_TRAIN, &material_train),
        (MATERIAL_HOLDOUT, &material_holdout),
        (CANDIDATES_SHAPE, &cand_shape),
        (CANDIDATES_MATERIAL, &cand_material),
    ] {
        write_manifest(&out.join(name), entries)?;
    }
    write_eval_manifest(&out.join(EVAL_FILE), &specs)?;
    write_text(&out.join(COMPATIBILITY_FILE), &table.to_config_string())?;

    let summary = CorpusSummary {
        clouds: jobs.len(),
        spectra: spectra.len(),
        eval_sets: specs.len(),
    };
    writeln!(
        w,
        "wrote {} clouds, {} spectra and {} evaluation sets to {}",
        summary.clouds,
        summary.spectra,
        summary.eval_sets,
        out.display()
    )?;
    Ok(summary)
}

/// Cycles through a shuffled pool so short pools still fill a set.
fn draw<'a>(pool: &'a [String], rng: &mut impl rand::Rng, n: usize) -> Vec<&'a String> {
    let mut order: Vec<&String> = pool.iter().collect();
    order.shuffle(rng);
    (0..n).map(|i| order[i % order.len()]).collect()
}

type EvalCorpus = (Vec<EvalSpec>, Vec<ManifestEntry>, Vec<ManifestEntry>);

/// Per action, `sets_per_action` sets drawn from held-out clouds and spectra.
/// Each set has one candidate with the action's shape and a compatible
/// material; the other candidates cycle through right shape with wrong
/// material, wrong shape with right material, and both wrong.
fn eval_sets(
    cfg: &RunConfig,
    out: &Path,
    table: &CompatibilityTable,
    actions: &[ActionName],
) -> Result<EvalCorpus> {
    let c = &cfg.corpus;
    let holdout_clouds = |keep: &dyn Fn(ToolFamily) -> bool| -> Vec<(ToolFamily, String)> {
        ToolFamily::ALL
            .into_iter()
            .filter(|&f| keep(f))
            .flat_map(|f| {
                (c.shapes_per_family..c.shapes_per_family + c.shape_holdout_per_family)
                    .map(move |k| (f, cloud_id(f, k)))
            })
            .collect()
    };
    let holdout_spectra = |keep: &dyn Fn(MaterialClass) -> bool| -> Vec<String> {
        MaterialClass::ALL
            .into_iter()
            .filter(|&m| keep(m))
            .flat_map(|m| (0..c.spectra_holdout_per_class).map(move |k| spectrum_id(m, true, k)))
            .collect()
    };

    let mut specs = Vec::new();
    let mut cand_shape = Vec::new();
    let mut cand_material = Vec::new();
    for action in actions {
        let family = ToolFamily::for_action(action.as_str()).expect("checked by caller");
        let right_shape = holdout_clouds(&|f| f == family);
        let wrong_shape = holdout_clouds(&|f| f != family);
        let right_mat = holdout_spectra(&|m| table.is_compatible(action, m));
        let wrong_mat = holdout_spectra(&|m| !table.is_compatible(action, m));
        let family_of: std::collections::HashMap<&String, ToolFamily> = right_shape
            .iter()
            .chain(&wrong_shape)
            .map(|(f, id)| (id, *f))
            .collect();
        let right_ids: Vec<String> = right_shape.iter().map(|(_, id)| id.clone()).collect();
        let wrong_ids: Vec<String> = wrong_shape.iter().map(|(_, id)| id.clone()).collect();

        for s in 0..c.sets_per_action {
            let mut rng = rng_from_seed(derive_seed(cfg.seed, &format!("gen/eval/{action}/{s}")));
            let d = c.set_size - 1;
            let n_kind = |t: usize| (d + 2 - t) / 3;
            let shapes_r = draw(&right_ids, &mut rng, 1 + n_kind(0));
            let shapes_w = draw(&wrong_ids, &mut rng, n_kind(1) + n_kind(2));
            let mats_r = draw(&right_mat, &mut rng, 1 + n_kind(1));
            let mats_w = draw(&wrong_mat, &mut rng, n_kind(0) + n_kind(2));

            // (cloud, spectrum, is_correct)
            let mut members: Vec<(&String, &String, bool)> = vec![(shapes_r[0], mats_r[0], true)];
            members.extend(
                shapes_r[1..]
                    .iter()
                    .zip(&mats_w[..n_kind(0)])
                    .map(|(a, b)| (*a, *b, false)),
            );
            members.extend(
                shapes_w[..n_kind(1)]
                    .iter()
                    .zip(&mats_r[1..])
                    .map(|(a, b)| (*a, *b, false)),
            );
            members.extend(
                shapes_w[n_kind(1)..]
                    .iter()
                    .zip(&mats_w[n_kind(0)..])
                    .map(|(a, b)| (*a, *b, false)),
            );
            members.shuffle(&mut rng);

            let set_no = specs.len();
            let mut ids = Vec::with_capacity(members.len());
            let mut correct = String::new();
            for (j, (cloud, spectrum, is_correct)) in members.into_iter().enumerate() {
                let id = format!("set{set_no:02}-{j}");
                if is_correct {
                    correct = id.clone();
                }
                cand_shape.push(shape_entry(
                    out,
                    id.clone(),
                    family_of[cloud],
                    cloud,
                    actions,
                ));
                cand_material.push(material_entry(out, id.clone(), spectrum));
                ids.push(id);
            }
            specs.push(EvalSpec {
                action: action.clone(),
                correct_id: correct,
                candidate_ids: ids,
                line: 0,
            });
        }
    }
    Ok((specs, cand_shape, cand_material))
}

#[cfg(test)]
mod tests {
    use super::*;
    use toolsub::matcher::parse_manifest;
    use toolsub::ranker::parse_eval_manifest;
    use toolsub::spectral::default_compatibility;

    fn small() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.corpus.cloud_points = 600;
        cfg.corpus.shapes_per_family = 2;
        cfg.corpus.shape_holdout_per_family = 2;
        cfg.corpus.spectra_per_class = 2;
        cfg.corpus.spectra_holdout_per_class = 2;
        cfg
    }

    #[test]
    fn default_layout_has_36_sets_of_10() {
        let dir = tempfile::tempdir().unwrap();
        let s = cmd_gen_data(&small(), Some(dir.path()), &mut Vec::new()).unwrap();
        assert_eq!(s.eval_sets, 36);
        assert_eq!(s.clouds, 8 * 4);
        let specs = parse_eval_manifest(&dir.path().join(EVAL_FILE)).unwrap();
        assert_eq!(specs.len(), 36);
        assert!(specs.iter().all(|s| s.candidate_ids.len() == 10));
        for a in ActionName::defaults() {
            assert_eq!(specs.iter().filter(|s| s.action == a).count(), 6);
        }
    }

    #[test]
    fn correct_candidate_is_positive_in_both_modalities() {
        let dir = tempfile::tempdir().unwrap();
        cmd_gen_data(&small(), Some(dir.path()), &mut Vec::new()).unwrap();
        let table = default_compatibility();
        let shape = parse_manifest(&dir.path().join(CANDIDATES_SHAPE)).unwrap();
        let material = parse_manifest(&dir.path().join(CANDIDATES_MATERIAL)).unwrap();
        let spectra =
            toolsub::spectral::load_spectra::<f64>(&dir.path().join(SPECTRA_FILE)).unwrap();
        let material_of = |id: &str| -> MaterialClass {
            let e = material.iter().find(|e| e.id == id).unwrap();
            let FeatureSource::File { row: Some(row), .. } = &e.source else {
                panic!()
            };
            spectra
                .iter()
                .find(|r| &r.object_id == row)
                .unwrap()
                .material
                .unwrap()
        };
        for spec in parse_eval_manifest(&dir.path().join(EVAL_FILE)).unwrap() {
            let mut both = 0;
            for id in &spec.candidate_ids {
                let shape_ok = shape
                    .iter()
                    .find(|e| &e.id == id)
                    .unwrap()
                    .positive_for
                    .contains(&spec.action);
                let mat_ok = table.is_compatible(&spec.action, material_of(id));
                if shape_ok && mat_ok {
                    both += 1;
                    assert_eq!(id, &spec.correct_id);
                }
            }
            assert_eq!(both, 1);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        cmd_gen_data(&small(), Some(a.path()), &mut Vec::new()).unwrap();
        cmd_gen_data(&small(), Some(b.path()), &mut Vec::new()).unwrap();
        for name in [
            SPECTRA_FILE,
            SHAPE_TRAIN,
            CANDIDATES_SHAPE,
            CANDIDATES_MATERIAL,
            EVAL_FILE,
            "clouds/mallet-01.xyz",
        ] {
            assert_eq!(
                fs::read(a.path().join(name)).unwrap(),
                fs::read(b.path().join(name)).unwrap(),
                "{name}"
            );
        }
        let mut other = small();
        other.seed = 9;
        let c = tempfile::tempdir().unwrap();
        cmd_gen_data(&other, Some(c.path()), &mut Vec::new()).unwrap();
        assert_ne!(
            fs::read(a.path().join(SPECTRA_FILE)).unwrap(),
            fs::read(c.path().join(SPECTRA_FILE)).unwrap()
        );
    }
}
