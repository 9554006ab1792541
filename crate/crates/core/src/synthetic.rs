//! Generated marker-token corpora for end-to-end training checks.
//!
//! Every sequence is noise words with several marker words of its class
//! mixed in at random positions. Words are built from Arabic letters that no normalization step
//! rewrites, with no letter repeated back to back, so the raw text survives
//! preprocessing unchanged.

use std::collections::BTreeSet;

use crate::corpus::{split_dataset, Dataset, Label, LabeledExample, Schema};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::model::{build_scm, ScmConfig};
use crate::pipeline::{encode_dataset, fit_encoder, tokenize_dataset};
use crate::text::{NormalizationConfig, StopwordList, TextPipeline};
use crate::trainer::{evaluate, train, TrainConfig, TrainingHistory};

const LETTERS: &[char] = &[
    'ب', 'ت', 'ث', 'ج', 'ح', 'خ', 'د', 'ذ', 'ر', 'ز', 'س', 'ش', 'ص', 'ض', 'ط', 'ظ', 'ع', 'غ', 'ف', 'ق', 'ك', 'ل', 'م',
    'ن', 'و',
];

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSpec {
    pub examples: usize,
    pub num_classes: usize,
    pub markers_per_class: usize,
    pub noise_words: usize,
    pub min_markers: usize,
    pub max_markers: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for MarkerSpec {
    fn default() -> Self {
        MarkerSpec {
            examples: 400,
            num_classes: 2,
            markers_per_class: 5,
            noise_words: 20,
            min_markers: 6,
            max_markers: 10,
            min_len: 14,
            max_len: 20,
            seed: 42,
        }
    }
}

fn random_word(len: usize, rng: &mut Rng) -> String {
    let mut word = String::new();
    let mut prev = None;
    while word.chars().count() < len {
        let c = LETTERS[rng.below(LETTERS.len())];
        if Some(c) != prev {
            word.push(c);
            prev = Some(c);
        }
    }
    word
}

fn distinct_words(count: usize, len: usize, taken: &mut BTreeSet<String>, stop: &StopwordList, rng: &mut Rng) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w = random_word(len, rng);
        if !stop.contains(&w) && taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Class-balanced dataset whose label is decided by which marker words occur.
pub fn marker_dataset(spec: &MarkerSpec) -> Result<Dataset> {
    if spec.min_len == 0 || spec.min_len > spec.max_len || spec.min_markers == 0 || spec.min_markers > spec.max_markers {
        return Err(Error::config("marker corpus: need 0 < min_len <= max_len and 0 < min_markers <= max_markers"));
    }
    if spec.markers_per_class == 0 || spec.noise_words == 0 {
        return Err(Error::config("marker corpus: marker and noise vocabularies must be non-empty"));
    }
    let schema = Schema::from_num_classes(spec.num_classes)?;
    let mut rng = Rng::new(spec.seed);
    let stop = StopwordList::builtin(&NormalizationConfig::default());
    let mut taken = BTreeSet::new();
    let markers: Vec<Vec<String>> = (0..spec.num_classes)
        .map(|_| distinct_words(spec.markers_per_class, 5, &mut taken, &stop, &mut rng))
        .collect();
    let noise = distinct_words(spec.noise_words, 4, &mut taken, &stop, &mut rng);
    let examples = (0..spec.examples)
        .map(|i| {
            let class = i % spec.num_classes;
            let len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
            let mut words: Vec<&str> = (0..len).map(|_| noise[rng.below(noise.len())].as_str()).collect();
            // Markers overwrite random positions, so a collision can leave
            // fewer than drawn, never zero.
            for _ in 0..spec.min_markers + rng.below(spec.max_markers - spec.min_markers + 1) {
                let pos = rng.below(words.len());
                words[pos] = markers[class][rng.below(spec.markers_per_class)].as_str();
            }
            LabeledExample::new(words.join(" "), Label::from_index(class).expect("class within schema"))
        })
        .collect();
    Dataset::new(format!("markers-{}class", spec.num_classes), schema, examples)
}

/// Outcome of [`marker_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerRun {
    /// Accuracy on validation and test together; neither is used for any
    /// training decision.
    pub held_out_accuracy: f64,
    pub test_accuracy: f64,
    pub held_out_examples: usize,
    pub history: TrainingHistory,
}

/// Generates a marker corpus, splits it 80/10/10, fits the vocabulary on the
/// training part, trains and scores the held-out parts.
pub fn marker_experiment(spec: &MarkerSpec, config: &ScmConfig, train_config: &TrainConfig) -> Result<MarkerRun> {
    let ds = marker_dataset(spec)?;
    let (train_ds, val_ds, test_ds) = split_dataset(&ds, (0.8, 0.1, 0.1), spec.seed)?;
    let pipeline = TextPipeline::new(NormalizationConfig::default(), Some(StopwordList::builtin(&Default::default())));
    let train_tok = tokenize_dataset(&train_ds, &pipeline);
    let val_tok = tokenize_dataset(&val_ds, &pipeline);
    let test_tok = tokenize_dataset(&test_ds, &pipeline);
    let (vocab, tfidf) = fit_encoder(&train_tok, config)?;
    let mut model = build_scm::<f64>(config, &vocab, None)?;
    model.tfidf = tfidf;
    let train_enc = encode_dataset(&model, &vocab, &train_tok);
    let val_enc = encode_dataset(&model, &vocab, &val_tok);
    let test_enc = encode_dataset(&model, &vocab, &test_tok);
    let history = train(&mut model, &train_enc, Some(&val_enc), train_config)?;
    let mut held_out = val_enc.clone();
    held_out.sequences.extend(test_enc.sequences.iter().cloned());
    held_out.labels.extend(test_enc.labels.iter().copied());
    held_out.source_indices.extend(test_enc.source_indices.iter().copied());
    let held = evaluate(&model, &held_out)?;
    let test = evaluate(&model, &test_enc)?;
    Ok(MarkerRun {
        held_out_accuracy: held.accuracy,
        test_accuracy: test.accuracy,
        held_out_examples: held_out.len(),
        history,
    })
}
