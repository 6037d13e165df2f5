use toolsub::matcher::{
    classification_accuracy, load_model, save_model, score, train_action_model, LabeledExample,
    MatcherConfig, ModelKind,
};
use toolsub::ranker::{rank, Candidate, RankMode};
use toolsub::seed::derive_seed;
use toolsub::spectral::{default_compatibility, synth_spectrum, MaterialClass};
use toolsub::ActionName;

fn spectra(tag: &str, per_class: usize) -> Vec<(MaterialClass, Vec<f64>)> {
    MaterialClass::ALL
        .iter()
        .flat_map(|&m| {
            (0..per_class).map(move |k| {
                let seed = derive_seed(7, &format!("{tag}/{}/{k}", m.name()));
                (m, synth_spectrum::<f64>(m, seed).values().to_vec())
            })
        })
        .collect()
}

fn examples(rows: &[(MaterialClass, Vec<f64>)]) -> Vec<LabeledExample<f64>> {
    let table = default_compatibility();
    rows.iter()
        .enumerate()
        .map(|(i, (m, v))| {
            LabeledExample::new(format!("{}-{i}", m.name()), v.clone())
                .with_material_labels(*m, &table)
        })
        .collect()
}

#[test]
fn train_save_load_and_rank() {
    let cut = ActionName::new("Cut").unwrap();
    let train = examples(&spectra("train", 8));
    let holdout = examples(&spectra("holdout", 4));

    let mut cfg = MatcherConfig::for_kind(ModelKind::Material);
    cfg.train.epochs = 6;
    cfg.n_pairs = 400;
    let trained = train_action_model(&train, &cut, ModelKind::Material, &cfg).unwrap();
    assert_eq!(trained.loss_history.len(), 6);
    assert!(trained.loss_history.iter().all(|l| l.is_finite()));
    assert!(classification_accuracy(&trained.model, &holdout).unwrap() >= 0.9);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("material-Cut.json");
    save_model(&trained.model, &path).unwrap();
    let loaded = load_model::<f64>(&path).unwrap();
    for ex in &holdout {
        assert_eq!(
            score(&trained.model, &ex.features).unwrap(),
            score(&loaded, &ex.features).unwrap()
        );
    }

    let candidates: Vec<Candidate<f64>> = holdout
        .iter()
        .step_by(4)
        .map(|ex| Candidate {
            id: ex.id.clone(),
            esf: None,
            spectrum: Some(ex.features.to_vec()),
        })
        .collect();
    let list = rank(&cut, &candidates, None, Some(&loaded), RankMode::MaterialOnly).unwrap();
    assert_eq!(list.len(), MaterialClass::ALL.len());
    assert!(list.entries[0].id.starts_with("metal-"), "{list:?}");
    assert!(list.entries.iter().all(|e| e.p_shape.is_none()));
    assert!(list
        .entries
        .windows(2)
        .all(|w| w[0].final_score >= w[1].final_score));
}

#[test]
fn combined_mode_needs_both_models() {
    let hit = ActionName::new("Hit").unwrap();
    let c = Candidate {
        id: "a".into(),
        esf: None,
        spectrum: Some(vec![0.0; 331]),
    };
    let d = Candidate {
        id: "b".into(),
        ..c.clone()
    };
    assert!(rank::<f64>(&hit, &[c, d], None, None, RankMode::Combined).is_err());
}
