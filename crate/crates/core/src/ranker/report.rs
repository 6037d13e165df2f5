use std::fmt::Write;

use super::{average_rank, hit_at_k, EvalSet, ModelBank, RankMode, RankedList};
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct ModeMetrics {
    pub mode: RankMode,
    pub hit_at_1: f64,
    pub hit_at_5: f64,
    pub average_rank: f64,
}

/// Metrics per mode plus every ranking they were computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<T> {
    pub metrics: Vec<ModeMetrics>,
    pub rankings: Vec<(RankMode, Vec<RankedList<T>>)>,
    pub correct_ids: Vec<String>,
}

impl<T: Scalar> EvalReport<T> {
    pub fn from_rankings(
        sets: &[EvalSet<T>],
        rankings: Vec<(RankMode, Vec<RankedList<T>>)>,
    ) -> Result<Self> {
        let metrics = rankings
            .iter()
            .map(|(mode, lists)| {
                Ok(ModeMetrics {
                    mode: *mode,
                    hit_at_1: hit_at_k(lists, sets, 1)?,
                    hit_at_5: hit_at_k(lists, sets, 5)?,
                    average_rank: average_rank(lists, sets)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            metrics,
            rankings,
            correct_ids: sets.iter().map(|s| s.correct_id.clone()).collect(),
        })
    }

    pub fn metrics_for(&self, mode: RankMode) -> Option<&ModeMetrics> {
        self.metrics.iter().find(|m| m.mode == mode)
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("mode,hit@1,hit@5,average_rank\n");
        for m in &self.metrics {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6}",
                m.mode, m.hit_at_1, m.hit_at_5, m.average_rank
            );
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<14} {:>7} {:>7} {:>9}\n",
            "mode", "hit@1", "hit@5", "avg rank"
        );
        for m in &self.metrics {
            let _ = writeln!(
                out,
                "{:<14} {:>7.3} {:>7.3} {:>9.3}",
                m.mode.name(),
                m.hit_at_1,
                m.hit_at_5,
                m.average_rank
            );
        }
        out
    }

    /// One row per (mode, set, candidate) with both scores.
    pub fn detail_csv(&self) -> String {
        let mut out = String::from(
            "mode,set,action,correct_id,candidate_id,rank,p_shape,p_material,final_score\n",
        );
        let opt = |v: Option<T>| v.map_or(String::new(), |x| format!("{:.6}", x.to_f64_lossy()));
        for (mode, lists) in &self.rankings {
            for (i, (list, correct)) in lists.iter().zip(&self.correct_ids).enumerate() {
                for (r, e) in list.entries.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{:.6}",
                        mode,
                        i,
                        list.action,
                        correct,
                        e.id,
                        r + 1,
                        opt(e.p_shape),
                        opt(e.p_material),
                        e.final_score.to_f64_lossy()
                    );
                }
            }
        }
        out
    }
}

/// Ranks every set in every mode.
pub fn evaluate<T: Scalar>(
    sets: &[EvalSet<T>],
    models: &ModelBank<T>,
    modes: &[RankMode],
) -> Result<EvalReport<T>> {
    let rankings = modes
        .iter()
        .map(|&mode| {
            let lists = sets
                .iter()
                .enumerate()
                .map(|(i, s)| models.rank_set(s, mode, i))
                .collect::<Result<Vec<_>>>()?;
            Ok((mode, lists))
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_rankings(sets, rankings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ActionName;
    use crate::matcher::{ActionModel, ModelKind};
    use crate::neuralnet::{DistanceHead, DualNetwork, Metric, Mlp};
    use crate::ranker::Candidate;

    fn bank() -> ModelBank<f64> {
        let mut b = ModelBank::new();
        for kind in ModelKind::ALL {
            let trunk = Mlp::from_parts(&[1, 1], vec![vec![1.0]], vec![vec![0.0]]).unwrap();
            let head = DistanceHead::new(vec![-2.0], 1.0, Metric::L1).unwrap();
            let mut m = ActionModel::new(
                ActionName::new("Hit").unwrap(),
                kind,
                DualNetwork::from_parts(trunk, head).unwrap(),
            );
            m.anchor = Some(ndarray::arr1(&[0.0]));
            b.insert(m);
        }
        b
    }

    fn sets() -> Vec<EvalSet<f64>> {
        (0..3)
            .map(|s| {
                let cands = (0..10)
                    .map(|i| Candidate {
                        id: format!("s{s}c{i}"),
                        esf: Some(vec![i as f64 * 0.1]),
                        spectrum: Some(vec![
                            (9 - i) as f64 * 0.05 + if i == 0 { 0.0 } else { 0.2 },
                        ]),
                    })
                    .collect();
                EvalSet::new(ActionName::new("Hit").unwrap(), format!("s{s}c0"), cands).unwrap()
            })
            .collect()
    }

    #[test]
    fn report_has_four_modes_by_three_metrics() {
        let r = evaluate(&sets(), &bank(), &RankMode::all(7)).unwrap();
        assert_eq!(r.metrics.len(), 4);
        let csv = r.metrics_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 4));
        assert_eq!(r.detail_csv().lines().count(), 1 + 4 * 3 * 10);
        assert!(r.table().contains("material-only"));
        let combined = r.metrics_for(RankMode::Combined).unwrap();
        assert_eq!(combined.hit_at_1, 1.0);
    }

    #[test]
    fn random_mode_reproducible_and_per_set() {
        let a = evaluate(&sets(), &bank(), &[RankMode::Random(5)]).unwrap();
        let b = evaluate(&sets(), &bank(), &[RankMode::Random(5)]).unwrap();
        assert_eq!(a, b);
        let lists = &a.rankings[0].1;
        let orders: Vec<Vec<String>> = lists
            .iter()
            .map(|l| l.entries.iter().map(|e| e.id[2..].to_string()).collect())
            .collect();
        assert!(orders.windows(2).any(|w| w[0] != w[1]));
    }
}
