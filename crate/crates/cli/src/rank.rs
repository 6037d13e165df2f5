//! `rank` and `evaluate`.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use toolsub::matcher::{load_model, parse_manifest, ModelKind};
use toolsub::ranker::{
    evaluate, parse_eval_manifest, rank, EvalReport, EvalSet, ModelBank, RankMode,
};
use toolsub::seed::derive_seed;
use toolsub::{ActionName, Models, Ranking, Tool};

use crate::config::RunConfig;
use crate::features::resolve_entries;
use crate::gendata::{CANDIDATES_MATERIAL, CANDIDATES_SHAPE, EVAL_FILE};
use crate::train::model_path;

pub const METRICS_FILE: &str = "metrics.csv";
pub const RANKS_FILE: &str = "ranks.csv";

/// Like [`RankMode::from_str`], but a bare `random` takes its seed from the
/// root seed.
pub fn parse_mode(cfg: &RunConfig, s: &str) -> Result<RankMode> {
    if s.trim().eq_ignore_ascii_case("random") {
        return Ok(RankMode::Random(derive_seed(cfg.seed, "random")));
    }
    Ok(s.parse()?)
}

fn kinds_for(modes: &[RankMode]) -> BTreeSet<ModelKind> {
    let mut kinds = BTreeSet::new();
    for m in modes {
        match m {
            RankMode::Combined => {
                kinds.insert(ModelKind::Shape);
                kinds.insert(ModelKind::Material);
            }
            RankMode::ShapeOnly => {
                kinds.insert(ModelKind::Shape);
            }
            RankMode::MaterialOnly => {
                kinds.insert(ModelKind::Material);
            }
            RankMode::Random(_) => {}
        }
    }
    kinds
}

/// Candidate manifests; `None` falls back to the data directory.
#[derive(Debug, Clone, Default)]
pub struct CandidateSources {
    pub shape: Option<PathBuf>,
    pub material: Option<PathBuf>,
}

impl CandidateSources {
    fn path(&self, cfg: &RunConfig, kind: ModelKind) -> PathBuf {
        let (given, default) = match kind {
            ModelKind::Shape => (&self.shape, CANDIDATES_SHAPE),
            ModelKind::Material => (&self.material, CANDIDATES_MATERIAL),
        };
        given.clone().unwrap_or_else(|| cfg.data_dir.join(default))
    }
}

/// Candidates by id, carrying features for the requested kinds only. The
/// returned order follows the first manifest read.
fn load_candidates(
    cfg: &RunConfig,
    sources: &CandidateSources,
    kinds: &BTreeSet<ModelKind>,
) -> Result<Vec<Tool>> {
    let pool = cfg.pool()?;
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Tool> = HashMap::new();
    let read = [ModelKind::Shape, ModelKind::Material]
        .into_iter()
        .filter(|k| kinds.contains(k) || (kinds.is_empty() && *k == ModelKind::Shape));
    for kind in read {
        let path = sources.path(cfg, kind);
        let entries =
            parse_manifest(&path).with_context(|| format!("reading {kind} candidates"))?;
        let rows = if kinds.contains(&kind) {
            resolve_entries(cfg, &pool, kind, &entries)
                .with_context(|| format!("resolving {}", path.display()))?
        } else {
            Vec::new()
        };
        for (i, e) in entries.iter().enumerate() {
            let c = by_id.entry(e.id.clone()).or_insert_with(|| {
                order.push(e.id.clone());
                Tool {
                    id: e.id.clone(),
                    esf: None,
                    spectrum: None,
                }
            });
            if let Some((values, _)) = rows.get(i) {
                match kind {
                    ModelKind::Shape => c.esf = Some(values.clone()),
                    ModelKind::Material => c.spectrum = Some(values.clone()),
                }
            }
        }
    }
    Ok(order
        .into_iter()
        .map(|id| by_id.remove(&id).expect("inserted above"))
        .collect())
}

fn load_bank(
    model_dir: &Path,
    actions: &BTreeSet<ActionName>,
    kinds: &BTreeSet<ModelKind>,
) -> Result<Models> {
    let mut bank = ModelBank::new();
    for action in actions {
        for &kind in kinds {
            let path = model_path(model_dir, kind, action);
            if !path.exists() {
                bail!(
                    "no {kind} model for `{action}`: {} does not exist",
                    path.display()
                );
            }
            let model =
                load_model::<f64>(&path).with_context(|| format!("loading {}", path.display()))?;
            if model.kind != kind || &model.action != action {
                bail!(
                    "{} holds a {} model for `{}`",
                    path.display(),
                    model.kind,
                    model.action
                );
            }
            bank.insert(model);
        }
    }
    Ok(bank)
}

fn fmt_score(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

pub fn ranking_table(list: &Ranking) -> String {
    let mut out = format!(
        "action {} ({})\n{:>4}  {:<16} {:>9} {:>10} {:>9}\n",
        list.action, list.mode, "rank", "id", "p_shape", "p_material", "final"
    );
    for (i, e) in list.entries.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:>4}  {:<16} {:>9} {:>10} {:>9.6}",
            i + 1,
            e.id,
            fmt_score(e.p_shape),
            fmt_score(e.p_material),
            e.final_score
        );
    }
    out
}

pub fn ranking_csv(list: &Ranking) -> String {
    let mut out = String::from("rank,id,p_shape,p_material,final_score\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    for (i, e) in list.entries.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6}",
            i + 1,
            e.id,
            opt(e.p_shape),
            opt(e.p_material),
            e.final_score
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct RankRequest {
    pub action: ActionName,
    pub mode: RankMode,
    /// Restrict to these candidate ids; empty ranks every candidate.
    pub ids: Vec<String>,
    pub sources: CandidateSources,
    pub model_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

pub fn cmd_rank(cfg: &RunConfig, req: &RankRequest, w: &mut dyn Write) -> Result<Ranking> {
    let kinds = kinds_for(&[req.mode]);
    let model_dir = req
        .model_dir
        .clone()
        .unwrap_or_else(|| cfg.model_dir.clone());
    let bank = load_bank(&model_dir, &BTreeSet::from([req.action.clone()]), &kinds)?;
    let mut candidates = load_candidates(cfg, &req.sources, &kinds)?;
    if !req.ids.is_empty() {
        let mut picked = Vec::with_capacity(req.ids.len());
        for id in &req.ids {
            let Some(pos) = candidates.iter().position(|c| &c.id == id) else {
                bail!("unknown candidate `{id}`");
            };
            picked.push(candidates.swap_remove(pos));
        }
        candidates = picked;
    }
    let list = rank(
        &req.action,
        &candidates,
        bank.get(ModelKind::Shape, &req.action),
        bank.get(ModelKind::Material, &req.action),
        req.mode,
    )
    .with_context(|| format!("ranking candidates for `{}`", req.action))?;
    w.write_all(ranking_table(&list).as_bytes())?;
    if let Some(out) = &req.out {
        fs::write(out, ranking_csv(&list)).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(list)
}

#[derive(Debug, Clone, Default)]
pub struct EvalRequest {
    pub eval_manifest: Option<PathBuf>,
    /// Empty means all four modes.
    pub modes: Vec<RankMode>,
    pub sources: CandidateSources,
    pub model_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

pub fn cmd_evaluate(
    cfg: &RunConfig,
    req: &EvalRequest,
    w: &mut dyn Write,
) -> Result<EvalReport<f64>> {
    let modes = if req.modes.is_empty() {
        RankMode::all(derive_seed(cfg.seed, "random")).to_vec()
    } else {
        req.modes.clone()
    };
    let eval_path = req
        .eval_manifest
        .clone()
        .unwrap_or_else(|| cfg.data_dir.join(EVAL_FILE));
    let specs = parse_eval_manifest(&eval_path)?;
    if specs.is_empty() {
        bail!("{} lists no evaluation sets", eval_path.display());
    }
    let kinds = kinds_for(&modes);
    let actions: BTreeSet<ActionName> = specs.iter().map(|s| s.action.clone()).collect();
    let model_dir = req
        .model_dir
        .clone()
        .unwrap_or_else(|| cfg.model_dir.clone());
    let bank = load_bank(&model_dir, &actions, &kinds)?;

    let candidates: HashMap<String, Tool> = load_candidates(cfg, &req.sources, &kinds)?
        .into_iter()
        .map(|c| (c.id.clone(), c))
        .collect();
    let sets = specs
        .iter()
        .map(|s| {
            let cands = s
                .candidate_ids
                .iter()
                .map(|id| {
                    candidates.get(id).cloned().with_context(|| {
                        format!(
                            "{}:{}: unknown candidate `{id}`",
                            eval_path.display(),
                            s.line
                        )
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(EvalSet::new(s.action.clone(), s.correct_id.clone(), cands)?)
        })
        .collect::<Result<Vec<_>>>()?;

    let report = evaluate(&sets, &bank, &modes)?;
    let out_dir = req.out_dir.clone().unwrap_or_else(|| cfg.out_dir.clone());
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    for (name, text) in [
        (METRICS_FILE, report.metrics_csv()),
        (RANKS_FILE, report.detail_csv()),
    ] {
        let path = out_dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    writeln!(w, "{} sets, {} actions", sets.len(), actions.len())?;
    w.write_all(report.table().as_bytes())?;
    Ok(report)
}
