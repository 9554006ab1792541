//! From labeled raw text to encoded model inputs.

use serde::Serialize;

use crate::corpus::{Dataset, Label, Schema};
use crate::encoder::{build_vocabulary, fit_tfidf, EncodedSequence, TfIdfModel, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{ScmConfig, ScmModel};
use crate::scalar::Scalar;
use crate::text::TextPipeline;

#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedExample {
    pub tokens: Vec<String>,
    pub label: Label,
    /// Row of the example in the source dataset.
    pub source_index: usize,
}

/// A dataset after preprocessing. Examples that normalize to nothing are
/// dropped and counted.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedDataset {
    pub name: String,
    pub schema: Schema,
    pub examples: Vec<TokenizedExample>,
    pub dropped_empty: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreprocessStats {
    pub input_examples: usize,
    pub kept_examples: usize,
    pub dropped_empty: usize,
    pub total_tokens: usize,
    pub mean_tokens: f64,
    pub max_tokens: usize,
}

pub fn tokenize_dataset(ds: &Dataset, pipeline: &TextPipeline) -> TokenizedDataset {
    let mut examples = Vec::with_capacity(ds.len());
    let mut dropped_empty = 0;
    for (i, ex) in ds.examples().iter().enumerate() {
        let tokens = pipeline.tokens(&ex.text);
        if tokens.is_empty() {
            dropped_empty += 1;
            continue;
        }
        examples.push(TokenizedExample {
            tokens,
            label: ex.label,
            source_index: i,
        });
    }
    TokenizedDataset {
        name: ds.name.clone(),
        schema: ds.schema,
        examples,
        dropped_empty,
    }
}

impl TokenizedDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn corpus(&self) -> Vec<Vec<String>> {
        self.examples.iter().map(|e| e.tokens.clone()).collect()
    }

    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> TokenizedDataset {
        TokenizedDataset {
            name: name.into(),
            schema: self.schema,
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            dropped_empty: 0,
        }
    }

    pub fn stats(&self) -> PreprocessStats {
        let total_tokens: usize = self.examples.iter().map(|e| e.tokens.len()).sum();
        PreprocessStats {
            input_examples: self.examples.len() + self.dropped_empty,
            kept_examples: self.examples.len(),
            dropped_empty: self.dropped_empty,
            total_tokens,
            mean_tokens: if self.examples.is_empty() {
                0.0
            } else {
                total_tokens as f64 / self.examples.len() as f64
            },
            max_tokens: self.examples.iter().map(|e| e.tokens.len()).max().unwrap_or(0),
        }
    }
}

/// Vocabulary and, when TF-IDF scaling is on, document frequencies, fitted on
/// training data only.
pub fn fit_encoder(train: &TokenizedDataset, config: &ScmConfig) -> Result<(Vocabulary, Option<TfIdfModel>)> {
    if train.is_empty() {
        return Err(Error::data(format!("{}: no examples left to fit the vocabulary", train.name)));
    }
    let corpus = train.corpus();
    let vocab = build_vocabulary(&corpus, config.max_features)?;
    let tfidf = if config.tfidf_scaling { Some(fit_tfidf(&corpus)?) } else { None };
    Ok((vocab, tfidf))
}

/// Fixed-length model inputs with class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    pub name: String,
    pub schema: Schema,
    pub sequences: Vec<EncodedSequence>,
    pub labels: Vec<usize>,
    pub source_indices: Vec<usize>,
}

impl EncodedDataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

}

pub fn encode_dataset<T: Scalar>(model: &ScmModel<T>, vocab: &Vocabulary, ds: &TokenizedDataset) -> EncodedDataset {
    EncodedDataset {
        name: ds.name.clone(),
        schema: ds.schema,
        sequences: ds.examples.iter().map(|e| model.encode_tokens(&e.tokens, vocab)).collect(),
        labels: ds.examples.iter().map(|e| e.label.index()).collect(),
        source_indices: ds.examples.iter().map(|e| e.source_index).collect(),
    }
}
