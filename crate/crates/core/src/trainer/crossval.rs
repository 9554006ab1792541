use serde::Serialize;

use crate::corpus::kfold_indices;
use crate::error::{Error, Result};
use crate::model::{build_scm, ScmConfig};
use crate::pipeline::{encode_dataset, fit_encoder, TokenizedDataset};
use crate::rng::Rng;

use super::{evaluate, mean_std, train, Metrics, TrainConfig, TrainingHistory};

const VALIDATION_STREAM: u64 = 10_000;

/// What a fold did with which examples, by index into the tokenized dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataAccess<'a> {
    /// Vocabulary and TF-IDF fitting.
    Fit { fold: usize, indices: &'a [usize] },
    Train { fold: usize, indices: &'a [usize] },
    Validate { fold: usize, indices: &'a [usize] },
    Test { fold: usize, indices: &'a [usize] },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub train_examples: usize,
    pub validation_examples: usize,
    pub test_examples: usize,
    pub vocabulary_size: usize,
    pub metrics: Metrics,
    pub history: TrainingHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossValResult {
    pub folds: Vec<FoldResult>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

/// k-fold cross-validation. Each fold fits its own vocabulary on its training
/// portion, holds out `validation_fraction` of that portion for validation,
/// and trains a freshly initialized model from a fold-derived seed. Only the
/// held-out fold is used for the reported metrics.
pub fn cross_validate(
    scm_config: &ScmConfig,
    train_config: &TrainConfig,
    ds: &TokenizedDataset,
    k: usize,
    seed: u64,
    mut observe: impl FnMut(DataAccess<'_>),
) -> Result<CrossValResult> {
    if scm_config.num_classes != ds.schema.num_classes() {
        return Err(Error::config(format!(
            "num_classes {} does not match the {}-class dataset",
            scm_config.num_classes,
            ds.schema.num_classes()
        )));
    }
    let test_folds = kfold_indices(ds.len(), k, seed)?;
    let mut folds = Vec::with_capacity(k);
    for (fold, test_idx) in test_folds.iter().enumerate() {
        let fold_seed = Rng::derive(seed, fold as u64).next_u64();
        let mut in_test = vec![false; ds.len()];
        for &i in test_idx {
            in_test[i] = true;
        }
        let mut rest: Vec<usize> = (0..ds.len()).filter(|&i| !in_test[i]).collect();
        Rng::derive(fold_seed, VALIDATION_STREAM).shuffle(&mut rest);
        let n_val = (rest.len() as f64 * train_config.validation_fraction + 1e-9).floor() as usize;
        let (val_idx, train_idx) = rest.split_at(n_val);

        let train_tok = ds.subset(format!("{}-fold{fold}-train", ds.name), train_idx);
        let val_tok = ds.subset(format!("{}-fold{fold}-val", ds.name), val_idx);
        let test_tok = ds.subset(format!("{}-fold{fold}-test", ds.name), test_idx);

        observe(DataAccess::Fit { fold, indices: train_idx });
        let mut config = scm_config.clone();
        config.seed = fold_seed;
        let (vocab, tfidf) = fit_encoder(&train_tok, &config)?;
        let mut model = build_scm::<f64>(&config, &vocab, None)?;
        model.tfidf = tfidf;

        let train_enc = encode_dataset(&model, &vocab, &train_tok);
        let val_enc = encode_dataset(&model, &vocab, &val_tok);
        let test_enc = encode_dataset(&model, &vocab, &test_tok);
        let fold_train = TrainConfig {
            seed: fold_seed,
            ..train_config.clone()
        };
        observe(DataAccess::Train { fold, indices: train_idx });
        if !val_idx.is_empty() {
            observe(DataAccess::Validate { fold, indices: val_idx });
        }
        let history = train(&mut model, &train_enc, Some(&val_enc), &fold_train)?;
        observe(DataAccess::Test { fold, indices: test_idx });
        let metrics = evaluate(&model, &test_enc)?;
        log::info!("fold {}/{k}: accuracy {:.4}", fold + 1, metrics.accuracy);
        folds.push(FoldResult {
            fold,
            seed: fold_seed,
            train_examples: train_idx.len(),
            validation_examples: val_idx.len(),
            test_examples: test_idx.len(),
            vocabulary_size: vocab.len(),
            metrics,
            history,
        });
    }
    let accuracies: Vec<f64> = folds.iter().map(|f| f.metrics.accuracy).collect();
    let (mean_accuracy, std_accuracy) = mean_std(&accuracies);
    Ok(CrossValResult {
        folds,
        mean_accuracy,
        std_accuracy,
    })
}
