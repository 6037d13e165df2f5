//! Candidate ranking by combined shape and material scores, and the
//! hit@k / average-rank metrics.

mod report;

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::action::ActionName;
use crate::error::{Error, Result};
use crate::matcher::{score, ActionModel, ModelKind};
use crate::scalar::Scalar;
use crate::seed::{derive_seed, rng_from_seed};

pub use report::{evaluate, EvalReport, ModeMetrics};

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T> {
    pub id: String,
    pub esf: Option<Vec<T>>,
    pub spectrum: Option<Vec<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RankMode {
    Combined,
    ShapeOnly,
    MaterialOnly,
    Random(u64),
}

impl RankMode {
    /// The three scored modes plus random with the given seed.
    pub fn all(random_seed: u64) -> [RankMode; 4] {
        [
            RankMode::Combined,
            RankMode::ShapeOnly,
            RankMode::MaterialOnly,
            RankMode::Random(random_seed),
        ]
    }

    pub fn name(self) -> &'static str {
        match self {
            RankMode::Combined => "combined",
            RankMode::ShapeOnly => "shape-only",
            RankMode::MaterialOnly => "material-only",
            RankMode::Random(_) => "random",
        }
    }

    fn uses(self, kind: ModelKind) -> bool {
        matches!(
            (self, kind),
            (RankMode::Combined, _)
                | (RankMode::ShapeOnly, ModelKind::Shape)
                | (RankMode::MaterialOnly, ModelKind::Material)
        )
    }
}

impl fmt::Display for RankMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RankMode {
    type Err = Error;

    /// `combined`, `shape-only`, `material-only`, `random` or `random:<seed>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "combined" => Ok(RankMode::Combined),
            "shape-only" | "shape" => Ok(RankMode::ShapeOnly),
            "material-only" | "material" => Ok(RankMode::MaterialOnly),
            "random" => Ok(RankMode::Random(0)),
            _ => s
                .strip_prefix("random:")
                .and_then(|n| n.parse().ok())
                .map(RankMode::Random)
                .ok_or(Error::Unknown {
                    kind: "rank mode",
                    token: s,
                }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry<T> {
    pub id: String,
    pub p_shape: Option<T>,
    pub p_material: Option<T>,
    pub final_score: T,
}

/// Candidates ordered by `final_score` descending, ties by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList<T> {
    pub action: ActionName,
    pub mode: RankMode,
    pub entries: Vec<RankedEntry<T>>,
}

impl<T: Scalar> RankedList<T> {
    /// 1-based rank of `id`.
    pub fn rank_of(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id).map(|i| i + 1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn by_score_then_id<T: Scalar>(a: &RankedEntry<T>, b: &RankedEntry<T>) -> Ordering {
    b.final_score
        .partial_cmp(&a.final_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.id.cmp(&b.id))
}

fn check_model<'a, T: Scalar>(
    model: Option<&'a ActionModel<T>>,
    kind: ModelKind,
    action: &ActionName,
) -> Result<&'a ActionModel<T>> {
    let m = model.ok_or_else(|| Error::ModelMismatch(format!("no {kind} model for `{action}`")))?;
    if m.kind != kind || &m.action != action {
        return Err(Error::ModelMismatch(format!(
            "expected a {kind} model for `{action}`, got {} model for `{}`",
            m.kind, m.action
        )));
    }
    Ok(m)
}

/// Ranks candidates for `action`. Combined mode multiplies the two scores;
/// single-modality modes use one score and skip the other model entirely;
/// random mode ignores the models and shuffles the id-sorted candidates.
pub fn rank<T: Scalar>(
    action: &ActionName,
    candidates: &[Candidate<T>],
    shape_model: Option<&ActionModel<T>>,
    material_model: Option<&ActionModel<T>>,
    mode: RankMode,
) -> Result<RankedList<T>> {
    if candidates.is_empty() {
        return Err(Error::TrainingData(format!(
            "no candidates to rank for `{action}`"
        )));
    }
    let mut entries = Vec::with_capacity(candidates.len());
    if let RankMode::Random(seed) = mode {
        let mut ids: Vec<&str> = candidates.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        let mut rng = rng_from_seed(derive_seed(seed, &format!("random/{action}")));
        ids.shuffle(&mut rng);
        let n = T::from_usize_lossy(ids.len() + 1);
        for (i, id) in ids.into_iter().enumerate() {
            entries.push(RankedEntry {
                id: id.to_string(),
                p_shape: None,
                p_material: None,
                final_score: T::from_usize_lossy(candidates.len() - i) / n,
            });
        }
        return Ok(RankedList {
            action: action.clone(),
            mode,
            entries,
        });
    }

    let shape = mode
        .uses(ModelKind::Shape)
        .then(|| check_model(shape_model, ModelKind::Shape, action))
        .transpose()?;
    let material = mode
        .uses(ModelKind::Material)
        .then(|| check_model(material_model, ModelKind::Material, action))
        .transpose()?;
    for c in candidates {
        let missing =
            |what: &str| Error::TrainingData(format!("candidate `{}` has no {what}", c.id));
        let p_shape = match shape {
            Some(m) => Some(score(
                m,
                c.esf
                    .as_deref()
                    .ok_or_else(|| missing("shape descriptor"))?,
            )?),
            None => None,
        };
        let p_material = match material {
            Some(m) => Some(score(
                m,
                c.spectrum.as_deref().ok_or_else(|| missing("spectrum"))?,
            )?),
            None => None,
        };
        let final_score = match (p_shape, p_material) {
            (Some(s), Some(m)) => s * m,
            (Some(s), None) => s,
            (None, Some(m)) => m,
            (None, None) => unreachable!("scored modes use at least one model"),
        };
        entries.push(RankedEntry {
            id: c.id.clone(),
            p_shape,
            p_material,
            final_score,
        });
    }
    entries.sort_by(by_score_then_id);
    Ok(RankedList {
        action: action.clone(),
        mode,
        entries,
    })
}

/// One evaluation set: candidates, the action and the single correct id.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet<T> {
    pub action: ActionName,
    pub correct_id: String,
    pub candidates: Vec<Candidate<T>>,
}

impl<T: Scalar> EvalSet<T> {
    pub fn new(
        action: ActionName,
        correct_id: impl Into<String>,
        candidates: Vec<Candidate<T>>,
    ) -> Result<Self> {
        let correct_id = correct_id.into();
        if candidates.len() < 2 {
            return Err(Error::Config(format!(
                "set for `{action}` needs at least 2 candidates"
            )));
        }
        let mut seen = HashSet::new();
        if let Some(c) = candidates.iter().find(|c| !seen.insert(c.id.as_str())) {
            return Err(Error::Config(format!("duplicate candidate `{}`", c.id)));
        }
        if !seen.contains(correct_id.as_str()) {
            return Err(Error::Config(format!(
                "correct id `{correct_id}` is not a candidate"
            )));
        }
        Ok(Self {
            action,
            correct_id,
            candidates,
        })
    }
}

fn correct_ranks<T: Scalar>(results: &[RankedList<T>], sets: &[EvalSet<T>]) -> Result<Vec<usize>> {
    if results.len() != sets.len() {
        return Err(Error::Misaligned(format!(
            "{} rankings for {} sets",
            results.len(),
            sets.len()
        )));
    }
    results
        .iter()
        .zip(sets)
        .enumerate()
        .map(|(i, (r, s))| {
            if r.action != s.action {
                return Err(Error::Misaligned(format!(
                    "set {i}: ranking is for `{}`, set is for `{}`",
                    r.action, s.action
                )));
            }
            r.rank_of(&s.correct_id).ok_or_else(|| {
                Error::Misaligned(format!("set {i}: `{}` missing from ranking", s.correct_id))
            })
        })
        .collect()
}

/// Fraction of sets whose correct candidate is ranked within the top `k`.
pub fn hit_at_k<T: Scalar>(
    results: &[RankedList<T>],
    sets: &[EvalSet<T>],
    k: usize,
) -> Result<f64> {
    let ranks = correct_ranks(results, sets)?;
    if ranks.is_empty() {
        return Err(Error::Misaligned("no sets".into()));
    }
    Ok(ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64)
}

/// Mean 1-based rank of the correct candidate.
pub fn average_rank<T: Scalar>(results: &[RankedList<T>], sets: &[EvalSet<T>]) -> Result<f64> {
    let ranks = correct_ranks(results, sets)?;
    if ranks.is_empty() {
        return Err(Error::Misaligned("no sets".into()));
    }
    Ok(ranks.iter().sum::<usize>() as f64 / ranks.len() as f64)
}

/// Line of an evaluation manifest: `action,correct_id,candidate_id,...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalSpec {
    pub action: ActionName,
    pub correct_id: String,
    pub candidate_ids: Vec<String>,
    pub line: usize,
}

pub fn parse_eval_manifest(path: &Path) -> Result<Vec<EvalSpec>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty()
            || line.starts_with('#')
            || (out.is_empty() && line.starts_with("action,"))
        {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 4 || fields.iter().any(|f| f.is_empty()) {
            return Err(Error::parse(
                path,
                i + 1,
                "expected `action,correct_id,candidate,candidate[,...]`",
            ));
        }
        let action = fields[0]
            .parse()
            .map_err(|e: Error| Error::parse(path, i + 1, e.to_string()))?;
        let spec = EvalSpec {
            action,
            correct_id: fields[1].to_string(),
            candidate_ids: fields[2..].iter().map(|s| s.to_string()).collect(),
            line: i + 1,
        };
        if !spec.candidate_ids.contains(&spec.correct_id) {
            return Err(Error::parse(
                path,
                i + 1,
                format!(
                    "correct id `{}` is not listed as a candidate",
                    spec.correct_id
                ),
            ));
        }
        let unique: HashSet<&String> = spec.candidate_ids.iter().collect();
        if unique.len() != spec.candidate_ids.len() {
            return Err(Error::parse(path, i + 1, "duplicate candidate id"));
        }
        out.push(spec);
    }
    Ok(out)
}

pub fn write_eval_manifest(path: &Path, specs: &[EvalSpec]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        writeln!(w, "action,correct_id,candidates")?;
        for s in specs {
            writeln!(
                w,
                "{},{},{}",
                s.action,
                s.correct_id,
                s.candidate_ids.join(",")
            )?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

/// Trained models indexed by kind and action.
#[derive(Debug, Clone, Default)]
pub struct ModelBank<T> {
    models: BTreeMap<(ModelKind, ActionName), ActionModel<T>>,
}

impl<T: Scalar> ModelBank<T> {
    pub fn new() -> Self {
        Self {
            models: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, model: ActionModel<T>) {
        self.models
            .insert((model.kind, model.action.clone()), model);
    }

    pub fn get(&self, kind: ModelKind, action: &ActionName) -> Option<&ActionModel<T>> {
        self.models.get(&(kind, action.clone()))
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Ranks one set. Random mode derives a per-set seed from `set_index`.
    pub fn rank_set(
        &self,
        set: &EvalSet<T>,
        mode: RankMode,
        set_index: usize,
    ) -> Result<RankedList<T>> {
        let mode_for_set = match mode {
            RankMode::Random(seed) => {
                RankMode::Random(derive_seed(seed, &format!("set/{set_index}")))
            }
            m => m,
        };
        let mut list = rank(
            &set.action,
            &set.candidates,
            self.get(ModelKind::Shape, &set.action),
            self.get(ModelKind::Material, &set.action),
            mode_for_set,
        )?;
        list.mode = mode;
        Ok(list)
    }
}
