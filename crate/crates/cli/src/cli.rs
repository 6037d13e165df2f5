use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use toolsub::matcher::ModelKind;
use toolsub::ActionName;

use crate::config::RunConfig;
use crate::extract::cmd_extract_esf;
use crate::gendata::cmd_gen_data;
use crate::rank::{cmd_evaluate, cmd_rank, parse_mode, CandidateSources, EvalRequest, RankRequest};
use crate::selfcheck::cmd_selfcheck;
use crate::train::{cmd_train, TrainRequest};

#[derive(Debug, Parser)]
#[command(
    name = "toolsub",
    version,
    about = "Rank substitute tools for an action by shape and material"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,

    #[arg(long, global = true)]
    pub model_dir: Option<PathBuf>,

    /// Where reports go.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    #[arg(long, global = true)]
    pub compatibility: Option<PathBuf>,

    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Shape,
    Material,
    All,
}

impl KindArg {
    fn kinds(self) -> Vec<ModelKind> {
        match self {
            KindArg::Shape => vec![ModelKind::Shape],
            KindArg::Material => vec![ModelKind::Material],
            KindArg::All => ModelKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic corpus: clouds, spectra, manifests and evaluation sets.
    GenData {
        /// Output directory (defaults to the data dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute ESF descriptors for cloud files.
    ExtractEsf {
        /// Descriptor CSV (defaults to <out-dir>/descriptors.csv).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true)]
        clouds: Vec<PathBuf>,
    },
    /// Train per-action models.
    Train {
        #[arg(value_enum)]
        kind: KindArg,
        /// An action name or `all`.
        #[arg(default_value = "all")]
        target: String,
        /// Same as the positional action.
        #[arg(long)]
        action: Option<String>,
        /// Training manifest (defaults to <data-dir>/<kind>_train.csv).
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Model directory (defaults to the model dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank candidates for one action.
    Rank {
        #[arg(long)]
        action: String,
        /// combined, shape-only, material-only, random or random:<seed>.
        #[arg(long, default_value = "combined")]
        mode: String,
        #[arg(long)]
        shape_candidates: Option<PathBuf>,
        #[arg(long)]
        material_candidates: Option<PathBuf>,
        /// Also write the ranking as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Candidate ids to rank (default: all).
        ids: Vec<String>,
    },
    /// Score every evaluation set and report hit@1, hit@5 and average rank.
    Evaluate {
        /// Evaluation manifest (defaults to <data-dir>/eval.csv).
        #[arg(long)]
        eval: Option<PathBuf>,
        /// Repeatable; default is all four modes.
        #[arg(long)]
        mode: Vec<String>,
        #[arg(long)]
        shape_candidates: Option<PathBuf>,
        #[arg(long)]
        material_candidates: Option<PathBuf>,
        /// Report directory (defaults to the out dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient, ESF, symmetry and anchor checks.
    Selfcheck,
}

/// Defaults, then the config file, then flags.
pub fn resolve_config(g: &GlobalOpts) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(j) = g.jobs {
        cfg.jobs = j;
    }
    if let Some(d) = &g.data_dir {
        cfg.data_dir = d.clone();
    }
    if let Some(d) = &g.model_dir {
        cfg.model_dir = d.clone();
    }
    if let Some(d) = &g.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(p) = &g.compatibility {
        cfg.compatibility = Some(p.clone());
    }
    Ok(cfg)
}

fn action_list(target: &str) -> Result<Option<Vec<ActionName>>> {
    if target.eq_ignore_ascii_case("all") {
        Ok(None)
    } else {
        Ok(Some(vec![ActionName::new(target)?]))
    }
}

/// Runs one command. `Ok(false)` means the command ran but reported failure.
pub fn run(cli: &Cli, w: &mut dyn Write) -> Result<bool> {
    let cfg = resolve_config(&cli.global)?;
    if let Some(p) = &cfg.compatibility {
        if !p.exists() {
            bail!("compatibility table {} does not exist", p.display());
        }
    }
    match &cli.command {
        Command::GenData { out } => {
            cmd_gen_data(&cfg, out.as_deref(), w)?;
        }
        Command::ExtractEsf { out, clouds } => {
            cmd_extract_esf(&cfg, clouds, out.as_deref(), w)?;
        }
        Command::Train {
            kind,
            target,
            action,
            manifest,
            out,
        } => {
            let target = action.as_deref().unwrap_or(target);
            let req = TrainRequest {
                kinds: kind.kinds(),
                actions: action_list(target)?,
                manifest: manifest.clone(),
                model_dir: out.clone(),
            };
            cmd_train(&cfg, &req, w)?;
        }
        Command::Rank {
            action,
            mode,
            shape_candidates,
            material_candidates,
            out,
            ids,
        } => {
            let req = RankRequest {
                action: ActionName::new(action)?,
                mode: parse_mode(&cfg, mode)?,
                ids: ids.clone(),
                sources: CandidateSources {
                    shape: shape_candidates.clone(),
                    material: material_candidates.clone(),
                },
                model_dir: None,
                out: out.clone(),
            };
            cmd_rank(&cfg, &req, w)?;
        }
        Command::Evaluate {
            eval,
            mode,
            shape_candidates,
            material_candidates,
            out,
        } => {
            let req = EvalRequest {
                eval_manifest: eval.clone(),
                modes: mode
                    .iter()
                    .map(|m| parse_mode(&cfg, m))
                    .collect::<Result<_>>()?,
                sources: CandidateSources {
                    shape: shape_candidates.clone(),
                    material: material_candidates.clone(),
                },
                model_dir: None,
                out_dir: out.clone(),
            };
            cmd_evaluate(&cfg, &req, w)?;
        }
        Command::Selfcheck => return cmd_selfcheck(&cfg, w),
    }
    Ok(true)
}
