//! Dataset manifests: `id,feature,actions`.
//!
//! `feature` is a cloud file (`.xyz`/`.ply`, ESF computed on load), a CSV row
//! reference (`file.csv#row_id`, or `file.csv` to look the entry id up), or
//! inline whitespace-separated numbers. `actions` is a `;`-separated list;
//! a leading `-` marks an explicit negative. A material entry without any
//! action labels takes them from its material class and the compatibility
//! table.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{LabeledExample, ModelKind};
use crate::action::ActionName;
use crate::error::{Error, Result};
use crate::esf::{compute_esf, read_descriptors, EsfParams};
use crate::geometry::{load_cloud, CloudFormat};
use crate::scalar::Scalar;
use crate::spectral::{load_spectra, CompatibilityTable, MaterialClass};

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSource {
    File { path: PathBuf, row: Option<String> },
    Inline(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub source: FeatureSource,
    pub positive_for: BTreeSet<ActionName>,
    pub negative_for: BTreeSet<ActionName>,
    /// Manifest file and 1-based line the entry came from.
    pub origin: (PathBuf, usize),
}

impl ManifestEntry {
    pub fn new(id: impl Into<String>, source: FeatureSource) -> Self {
        Self {
            id: id.into(),
            source,
            positive_for: BTreeSet::new(),
            negative_for: BTreeSet::new(),
            origin: (PathBuf::new(), 0),
        }
    }

    fn error(&self, msg: impl Into<String>) -> Error {
        Error::parse(
            &self.origin.0,
            self.origin.1,
            format!("`{}`: {}", self.id, msg.into()),
        )
    }
}

fn parse_inline(field: &str) -> Option<Vec<f64>> {
    let values: Vec<f64> = field
        .split_whitespace()
        .map(|t| t.parse::<f64>().ok())
        .collect::<Option<_>>()?;
    (!values.is_empty()).then_some(values)
}

pub fn parse_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut first = true;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if std::mem::take(&mut first) && line.starts_with("id,") {
            continue;
        }
        let mut fields = line.splitn(3, ',');
        let id = fields.next().unwrap_or("").trim();
        let feature = fields.next().unwrap_or("").trim();
        let actions = fields.next().unwrap_or("").trim();
        if id.is_empty() || feature.is_empty() {
            return Err(Error::parse(
                path,
                lineno,
                "expected `id,feature[,actions]`",
            ));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::parse(path, lineno, format!("duplicate id `{id}`")));
        }
        let source = match parse_inline(feature) {
            Some(values) => FeatureSource::Inline(values),
            None => {
                let (file, row) = match feature.split_once('#') {
                    Some((f, r)) => (f, Some(r.trim().to_string())),
                    None => (feature, None),
                };
                FeatureSource::File {
                    path: base.join(file),
                    row,
                }
            }
        };
        let mut entry = ManifestEntry::new(id, source);
        entry.origin = (path.to_path_buf(), lineno);
        for tok in actions.split(';').map(str::trim).filter(|t| !t.is_empty()) {
            let (negative, name) = match tok.strip_prefix('-') {
                Some(rest) => (true, rest),
                None => (false, tok),
            };
            let action: ActionName = name
                .parse()
                .map_err(|e: Error| Error::parse(path, lineno, e.to_string()))?;
            let (set, other) = if negative {
                (&mut entry.negative_for, &entry.positive_for)
            } else {
                (&mut entry.positive_for, &entry.negative_for)
            };
            if other.contains(&action) {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("`{action}` is both positive and negative"),
                ));
            }
            set.insert(action);
        }
        out.push(entry);
    }
    Ok(out)
}

/// Writes entries with file paths relative to the manifest's directory when
/// possible.
pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        writeln!(w, "id,feature,actions")?;
        for e in entries {
            let feature = match &e.source {
                FeatureSource::Inline(v) => {
                    v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
                }
                FeatureSource::File { path: p, row } => {
                    let rel = p
                        .strip_prefix(base)
                        .unwrap_or(p)
                        .to_string_lossy()
                        .into_owned();
                    match row {
                        Some(r) => format!("{rel}#{r}"),
                        None => rel,
                    }
                }
            };
            let actions: Vec<String> = e
                .positive_for
                .iter()
                .map(ToString::to_string)
                .chain(e.negative_for.iter().map(|a| format!("-{a}")))
                .collect();
            writeln!(w, "{},{},{}", e.id, feature, actions.join(";"))?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

type Row<T> = (Vec<T>, Option<MaterialClass>);

/// Resolves manifest features. CSV tables referenced by the entries are read
/// once up front; [`FeatureStore::resolve`] only reads clouds, so it can be
/// called from several threads.
pub struct FeatureStore<T> {
    kind: ModelKind,
    esf: EsfParams,
    tables: HashMap<PathBuf, HashMap<String, Row<T>>>,
}

impl<T: Scalar> FeatureStore<T> {
    pub fn open(entries: &[ManifestEntry], kind: ModelKind, esf: EsfParams) -> Result<Self> {
        let mut tables = HashMap::new();
        for e in entries {
            if let FeatureSource::File { path, .. } = &e.source {
                if is_csv(path) && !tables.contains_key(path) {
                    tables.insert(path.clone(), read_table::<T>(path, kind)?);
                }
            }
        }
        Ok(Self { kind, esf, tables })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Feature vector and, for spectra rows, the material class.
    pub fn resolve(&self, entry: &ManifestEntry) -> Result<Row<T>> {
        let (values, material) = match &entry.source {
            FeatureSource::Inline(v) => (v.iter().map(|&x| T::lit(x)).collect(), None),
            FeatureSource::File { path, row } if is_csv(path) => {
                let key = row.as_deref().unwrap_or(&entry.id);
                self.tables
                    .get(path)
                    .and_then(|t| t.get(key))
                    .cloned()
                    .ok_or_else(|| entry.error(format!("no row `{key}` in {}", path.display())))?
            }
            FeatureSource::File { path, .. } => {
                let format = CloudFormat::from_path(path).ok_or_else(|| {
                    entry.error(format!("unsupported feature file {}", path.display()))
                })?;
                if self.kind != ModelKind::Shape {
                    return Err(entry.error("point clouds only describe shape"));
                }
                let cloud = load_cloud::<T>(path, format)?;
                (compute_esf(&cloud, &self.esf)?.into_values(), None)
            }
        };
        if values.len() != self.kind.input_dim() {
            return Err(entry.error(format!(
                "expected {} {} features, found {}",
                self.kind.input_dim(),
                self.kind,
                values.len()
            )));
        }
        if values.iter().any(|v: &T| !v.is_finite()) {
            return Err(entry.error("non-finite feature value"));
        }
        Ok((values, material))
    }

    pub fn example(
        &self,
        entry: &ManifestEntry,
        table: &CompatibilityTable,
    ) -> Result<LabeledExample<T>> {
        let (values, material) = self.resolve(entry)?;
        Ok(label_example(entry, values, material, table))
    }
}

/// Applies the entry's labels, or the material-derived labels when the entry
/// carries none.
pub fn label_example<T: Scalar>(
    entry: &ManifestEntry,
    values: Vec<T>,
    material: Option<MaterialClass>,
    table: &CompatibilityTable,
) -> LabeledExample<T> {
    let mut ex = LabeledExample::new(entry.id.clone(), values);
    match material {
        Some(m) if entry.positive_for.is_empty() && entry.negative_for.is_empty() => {
            ex = ex.with_material_labels(m, table);
        }
        _ => {
            ex.positive_for = entry.positive_for.clone();
            ex.negative_for = entry.negative_for.clone();
        }
    }
    ex
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

fn read_table<T: Scalar>(path: &Path, kind: ModelKind) -> Result<HashMap<String, Row<T>>> {
    Ok(match kind {
        ModelKind::Shape => read_descriptors::<T>(path)?
            .into_iter()
            .map(|(id, d)| (id, (d.into_values(), None)))
            .collect(),
        ModelKind::Material => load_spectra::<T>(path)?
            .into_iter()
            .map(|r| {
                let material = r.material;
                let id = r.object_id.clone();
                (id, (r.values().to_vec(), material))
            })
            .collect(),
    })
}

/// Reads a manifest and resolves every entry in order.
pub fn load_dataset<T: Scalar>(
    manifest: &Path,
    kind: ModelKind,
    esf: &EsfParams,
    table: &CompatibilityTable,
) -> Result<Vec<LabeledExample<T>>> {
    let entries = parse_manifest(manifest)?;
    let store = FeatureStore::open(&entries, kind, *esf)?;
    entries.iter().map(|e| store.example(e, table)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esf::write_descriptors;
    use crate::geometry::{emit_cloud, synth_tool, ToolFamily};
    use crate::spectral::{default_compatibility, synth_spectrum, write_spectra, SPECTRUM_DIM};

    fn act(s: &str) -> ActionName {
        ActionName::new(s).unwrap()
    }

    #[test]
    fn parses_labels_paths_and_inline_features() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "id,feature,actions\n# comment\nhammer,clouds/h.xyz,Hit;-cut\nspoon,spectra.csv#s1,\nv,1 2 3.5,Poke\n").unwrap();
        let e = parse_manifest(&p).unwrap();
        assert_eq!(e.len(), 3);
        assert_eq!(
            e[0].source,
            FeatureSource::File {
                path: dir.path().join("clouds/h.xyz"),
                row: None
            }
        );
        assert!(e[0].positive_for.contains(&act("Hit")));
        assert!(e[0].negative_for.contains(&act("Cut")));
        assert_eq!(e[0].origin.1, 3);
        assert_eq!(
            e[1].source,
            FeatureSource::File {
                path: dir.path().join("spectra.csv"),
                row: Some("s1".into())
            }
        );
        assert!(e[1].positive_for.is_empty() && e[1].negative_for.is_empty());
        assert_eq!(e[2].source, FeatureSource::Inline(vec![1.0, 2.0, 3.5]));
    }

    #[test]
    fn malformed_manifests_report_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        for (body, line) in [
            ("a,x.xyz,Hit\nb\n", 2),
            ("a,x.xyz,Hit;-Hit\n", 1),
            ("a,x.xyz,Hit\na,y.xyz,Cut\n", 2),
            ("a,x.xyz,Hit;;bad name\n", 1),
        ] {
            fs::write(&p, body).unwrap();
            match parse_manifest(&p).unwrap_err() {
                Error::Parse { line: l, .. } => assert_eq!(l, line, "{body}"),
                other => panic!("{other}"),
            }
        }
    }

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(
            &p,
            "id,feature,actions\nhammer,clouds/h.xyz,Hit;-Cut\nspoon,s.csv#x,\nv,1 2.5,Poke\n",
        )
        .unwrap();
        let e = parse_manifest(&p).unwrap();
        let q = dir.path().join("n.csv");
        write_manifest(&q, &e).unwrap();
        let back = parse_manifest(&q).unwrap();
        for (a, b) in e.iter().zip(&back) {
            assert_eq!(
                (&a.id, &a.source, &a.positive_for, &a.negative_for),
                (&b.id, &b.source, &b.positive_for, &b.negative_for)
            );
        }
    }

    #[test]
    fn resolves_every_source_kind() {
        let dir = tempfile::tempdir().unwrap();
        let params = EsfParams {
            n_samples: 2000,
            ..EsfParams::default()
        };
        let cloud = synth_tool::<f64>(ToolFamily::Mallet, 1, 1500).unwrap();
        emit_cloud(&cloud, &dir.path().join("m.xyz"), CloudFormat::Xyz).unwrap();
        let desc = compute_esf(&cloud, &params).unwrap();
        write_descriptors(
            &dir.path().join("d.csv"),
            &[("mallet-1".into(), desc.clone())],
        )
        .unwrap();
        let inline: Vec<String> = desc.values().iter().map(|v: &f64| v.to_string()).collect();
        let manifest = dir.path().join("shape.csv");
        fs::write(
            &manifest,
            format!(
                "a,m.xyz,Hit\nmallet-1,d.csv,Hit\nc,d.csv#mallet-1,-Hit\nd,{},Hit\n",
                inline.join(" ")
            ),
        )
        .unwrap();
        let table = default_compatibility();
        let data = load_dataset::<f64>(&manifest, ModelKind::Shape, &params, &table).unwrap();
        assert_eq!(data.len(), 4);
        for ex in &data {
            assert_eq!(&ex.features[..], desc.values());
        }
        assert_eq!(data[2].label_for(&act("Hit")), Some(false));

        fs::write(&manifest, "a,d.csv#nothing,Hit\n").unwrap();
        assert!(matches!(
            load_dataset::<f64>(&manifest, ModelKind::Shape, &params, &table),
            Err(Error::Parse { line: 1, .. })
        ));
        fs::write(&manifest, "a,1 2 3,Hit\n").unwrap();
        assert!(load_dataset::<f64>(&manifest, ModelKind::Shape, &params, &table).is_err());
    }

    #[test]
    fn material_labels_come_from_table_when_absent() {
        let dir = tempfile::tempdir().unwrap();
        let spectra = vec![
            synth_spectrum::<f64>(MaterialClass::Wood, 1),
            synth_spectrum::<f64>(MaterialClass::Foam, 2),
        ];
        write_spectra(&dir.path().join("s.csv"), &spectra).unwrap();
        let manifest = dir.path().join("mat.csv");
        fs::write(
            &manifest,
            "w,s.csv#wood-1,\nf,s.csv#foam-2,\nx,s.csv#foam-2,Hit\n",
        )
        .unwrap();
        let table = default_compatibility();
        let data = load_dataset::<f64>(
            &manifest,
            ModelKind::Material,
            &EsfParams::default(),
            &table,
        )
        .unwrap();
        assert_eq!(data[0].features.len(), SPECTRUM_DIM);
        assert_eq!(data[0].label_for(&act("Hit")), Some(true));
        assert_eq!(data[0].label_for(&act("Cut")), Some(false));
        assert_eq!(data[1].label_for(&act("Hit")), Some(false));
        assert_eq!(data[2].label_for(&act("Hit")), Some(true));
        assert_eq!(data[2].label_for(&act("Cut")), None);
    }
}
