use scm_core::corpus::{Dataset, LabeledExample, Label, Schema};
use scm_core::model::ScmConfig;
use scm_core::pipeline::tokenize_dataset;
use scm_core::pooling::{PoolKind, PoolSpec};
use scm_core::synthetic::{marker_dataset, MarkerSpec};
use scm_core::text::{NormalizationConfig, TextPipeline};
use scm_core::trainer::{cross_validate, DataAccess, TrainConfig};

fn small() -> (ScmConfig, TrainConfig) {
    let scm = ScmConfig {
        embedding_dim: 4,
        max_len: 20,
        conv_filters: vec![4, 4],
        dense_units: 4,
        pooling: PoolSpec::new(PoolKind::Mma, 2).unwrap(),
        ..Default::default()
    };
    (scm, TrainConfig { epochs: 1, batch_size: 8, ..Default::default() })
}

fn tokenized(n: usize) -> scm_core::pipeline::TokenizedDataset {
    let ds = marker_dataset(&MarkerSpec { examples: n, ..Default::default() }).unwrap();
    tokenize_dataset(&ds, &TextPipeline::new(NormalizationConfig::default(), None))
}

#[test]
fn test_folds_never_leak_into_fitting_or_training() {
    let (scm, train) = small();
    let ds = tokenized(40);
    let mut accesses: Vec<(String, usize, Vec<usize>)> = Vec::new();
    let result = cross_validate(&scm, &train, &ds, 4, 5, |a| {
        let (kind, fold, idx) = match a {
            DataAccess::Fit { fold, indices } => ("fit", fold, indices),
            DataAccess::Train { fold, indices } => ("train", fold, indices),
            DataAccess::Validate { fold, indices } => ("validate", fold, indices),
            DataAccess::Test { fold, indices } => ("test", fold, indices),
        };
        accesses.push((kind.into(), fold, idx.to_vec()));
    })
    .unwrap();
    assert_eq!(result.folds.len(), 4);

    let mut tested = Vec::new();
    for fold in 0..4 {
        let of = |kind: &str| -> Vec<usize> {
            accesses
                .iter()
                .filter(|(k, f, _)| k == kind && *f == fold)
                .flat_map(|(_, _, i)| i.clone())
                .collect()
        };
        let test = of("test");
        for kind in ["fit", "train", "validate"] {
            assert!(of(kind).iter().all(|i| !test.contains(i)), "fold {fold}: {kind} touches test rows");
        }
        assert!(of("fit").iter().all(|i| !of("validate").contains(i)));
        assert_eq!(of("fit").len() + of("validate").len() + test.len(), 40);
        assert_eq!(test.len(), 10);
        tested.extend(test);
    }
    tested.sort_unstable();
    assert_eq!(tested, (0..40).collect::<Vec<_>>());
}

#[test]
fn folds_are_reproducible_and_seeded() {
    let (scm, train) = small();
    let ds = tokenized(30);
    let a = cross_validate(&scm, &train, &ds, 3, 11, |_| {}).unwrap();
    let b = cross_validate(&scm, &train, &ds, 3, 11, |_| {}).unwrap();
    let c = cross_validate(&scm, &train, &ds, 3, 12, |_| {}).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.folds[0].seed, c.folds[0].seed);
    let mean = a.folds.iter().map(|f| f.metrics.accuracy).sum::<f64>() / 3.0;
    assert!((a.mean_accuracy - mean).abs() < 1e-15);
}

#[test]
fn class_count_mismatch_is_rejected() {
    let (scm, train) = small();
    let ds = Dataset::new(
        "three",
        Schema::ThreeClass,
        (0..9).map(|i| LabeledExample::new(format!("كلمه{i} اخرى"), Label::ALL[i % 3])).collect(),
    )
    .unwrap();
    let tok = tokenize_dataset(&ds, &TextPipeline::new(NormalizationConfig::default(), None));
    assert!(cross_validate(&scm, &train, &tok, 3, 1, |_| {}).is_err());
}
