//! `selfcheck`: quick numerical sanity checks on a fresh build.

use std::io::Write;
use std::time::Instant;

use anyhow::Result;
use rand::Rng;
use toolsub::esf::{compute_esf, EsfBlock, ESF_DIM};
use toolsub::geometry::{synth_tool, ToolFamily};
use toolsub::matcher::{score, ActionModel, ModelKind};
use toolsub::neuralnet::{gradcheck, Metric};
use toolsub::scalar::sigmoid;
use toolsub::seed::{derive_seed, rng_from_seed};
use toolsub::{ActionName, Net};

use crate::config::RunConfig;

pub const GRADCHECK_TOL: f64 = 1e-4;
pub const BLOCK_SUM_TOL: f64 = 1e-6;
const GRADCHECK_SEEDS: u64 = 5;
const GRADCHECK_LAYERS: [usize; 4] = [8, 7, 6, 5];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e:#}")),
        }
    }
}

fn check_gradients(metric: Metric, root: u64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for s in 0..GRADCHECK_SEEDS {
        let err = gradcheck(
            &GRADCHECK_LAYERS,
            metric,
            derive_seed(root, &format!("selfcheck/grad/{metric}/{s}")),
        )?;
        worst = worst.max(err);
    }
    Ok((
        worst < GRADCHECK_TOL,
        format!("max relative error {worst:.3e} over {GRADCHECK_SEEDS} nets"),
    ))
}

fn check_esf(cfg: &RunConfig) -> Result<(bool, String)> {
    let params = cfg.esf_params();
    let mut worst = 0.0f64;
    let mut flagged = 0;
    for family in ToolFamily::ALL {
        let cloud = synth_tool::<f64>(
            family,
            derive_seed(cfg.seed, &format!("selfcheck/esf/{}", family.name())),
            3000,
        )?;
        let d = compute_esf(&cloud, &params)?;
        if d.values().len() != ESF_DIM {
            return Ok((
                false,
                format!("{}: {} values", family.name(), d.values().len()),
            ));
        }
        for block in EsfBlock::ALL {
            let values = d.block(block);
            // Empty blocks are allowed only as flagged all-zeros.
            if d.empty_blocks().contains(&block) {
                if values.iter().any(|&v| v != 0.0) {
                    return Ok((
                        false,
                        format!("{}: flagged block {block} is not zero", family.name()),
                    ));
                }
                flagged += 1;
                continue;
            }
            let sum: f64 = values.iter().sum();
            worst = worst.max((sum - 1.0).abs());
        }
    }
    Ok((
        worst <= BLOCK_SUM_TOL,
        format!(
            "{} families, worst block sum deviation {worst:.3e}, {flagged} flagged empty blocks",
            ToolFamily::ALL.len()
        ),
    ))
}

fn random_net(kind: ModelKind, root: u64) -> Result<(Net, impl Rng)> {
    let label = format!("selfcheck/net/{kind}");
    let net = Net::new(
        &kind.layer_sizes(),
        kind.metric(),
        0.5,
        derive_seed(root, &label),
    )?;
    Ok((
        net,
        rng_from_seed(derive_seed(root, &format!("{label}/inputs"))),
    ))
}

fn check_symmetry(root: u64) -> Result<(bool, String)> {
    let mut trials = 0;
    for kind in ModelKind::ALL {
        let (net, mut rng) = random_net(kind, root)?;
        let target = sigmoid(net.head().bias());
        for _ in 0..20 {
            let a: Vec<f64> = (0..kind.input_dim())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let b: Vec<f64> = (0..kind.input_dim())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let (ab, ba) = (net.predict_pair(&a, &b)?, net.predict_pair(&b, &a)?);
            if ab.to_bits() != ba.to_bits() {
                return Ok((
                    false,
                    format!("{kind}: p(a,b) = {ab:e} but p(b,a) = {ba:e}"),
                ));
            }
            let aa = net.predict_pair(&a, &a)?;
            if aa != target {
                return Ok((
                    false,
                    format!("{kind}: p(x,x) = {aa:e}, sigma(beta) = {target:e}"),
                ));
            }
            trials += 1;
        }
    }
    Ok((true, format!("{trials} pairs exact")))
}

fn check_anchor(root: u64) -> Result<(bool, String)> {
    for kind in ModelKind::ALL {
        let (net, mut rng) = random_net(kind, root)?;
        let x: Vec<f64> = (0..kind.input_dim())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let mut model = ActionModel::new(ActionName::new("Hit")?, kind, net);
        model.anchor = Some(model.embed(&x)?);
        let s = score(&model, &x)?;
        let target = sigmoid(model.network.head().bias());
        if s != target {
            return Ok((
                false,
                format!("{kind}: score {s:e}, sigma(beta) = {target:e}"),
            ));
        }
    }
    Ok((
        true,
        "score at the anchor equals sigma(beta) for both kinds".into(),
    ))
}

pub fn run_checks(cfg: &RunConfig) -> Vec<Check> {
    vec![
        Check::from_result(
            "gradcheck l2sq",
            check_gradients(Metric::L2Squared, cfg.seed),
        ),
        Check::from_result("gradcheck l1", check_gradients(Metric::L1, cfg.seed)),
        Check::from_result("esf block normalization", check_esf(cfg)),
        Check::from_result("pair symmetry", check_symmetry(cfg.seed)),
        Check::from_result("anchor identity", check_anchor(cfg.seed)),
    ]
}

/// Prints one line per check; returns whether all passed.
pub fn cmd_selfcheck(cfg: &RunConfig, w: &mut dyn Write) -> Result<bool> {
    let started = Instant::now();
    let checks = run_checks(cfg);
    for c in &checks {
        writeln!(
            w,
            "{} {:<24} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        )?;
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    writeln!(
        w,
        "{} of {} checks passed in {:.1?}",
        checks.len() - failed,
        checks.len(),
        started.elapsed()
    )?;
    Ok(failed == 0)
}
