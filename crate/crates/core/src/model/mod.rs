//! The sentiment convolutional model: configuration, forward and backward
//! passes, prediction and checkpoints.

mod checkpoint;
mod config;
mod scm;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use config::{ScmConfig, ShapeChain};
pub use scm::{argmax, BatchCache, ScmModel};

use serde::Serialize;

use crate::corpus::Label;
use crate::encoder::{EmbeddingTable, Vocabulary};
use crate::error::Result;
use crate::nn::gradcheck::GradCheckTarget;
use crate::nn::{Mode, Tensor};
use crate::encoder::EncodedSequence;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::text::TextPipeline;

/// Builds a freshly initialized model for `vocab`. Pretrained embeddings,
/// when given, must already be aligned with the vocabulary.
pub fn build_scm<T: Scalar>(
    config: &ScmConfig,
    vocab: &Vocabulary,
    pretrained: Option<EmbeddingTable<T>>,
) -> Result<ScmModel<T>> {
    ScmModel::assemble(config.clone(), vocab.len(), vocab.content_hash(), pretrained)
}

/// Outcome of classifying one raw text.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Prediction {
    Label {
        label: Label,
        confidence: f64,
        probabilities: Vec<f64>,
    },
    /// Nothing was left after normalization and stopword removal.
    EmptyAfterPreprocessing,
}

impl Prediction {
    pub fn label(&self) -> Option<Label> {
        match self {
            Prediction::Label { label, .. } => Some(*label),
            Prediction::EmptyAfterPreprocessing => None,
        }
    }
}

/// Preprocesses, encodes and classifies each text in inference mode.
pub fn predict<T: Scalar>(
    model: &ScmModel<T>,
    vocab: &Vocabulary,
    pipeline: &TextPipeline,
    texts: &[&str],
) -> Result<Vec<Prediction>> {
    model.check_vocabulary(vocab)?;
    let mut out = vec![Prediction::EmptyAfterPreprocessing; texts.len()];
    let mut batch = Vec::new();
    let mut slots = Vec::new();
    for (i, text) in texts.iter().enumerate() {
        let tokens = pipeline.tokens(text);
        if tokens.is_empty() {
            continue;
        }
        batch.push(model.encode_tokens(&tokens, vocab));
        slots.push(i);
    }
    if batch.is_empty() {
        return Ok(out);
    }
    let probs = model.predict_proba(&batch)?;
    for (row, &slot) in slots.iter().enumerate() {
        let p: Vec<f64> = probs.row(row).iter().map(|v| v.as_f64()).collect();
        let best = argmax(&p);
        out[slot] = Prediction::Label {
            label: Label::from_index(best).expect("class index within schema"),
            confidence: p[best],
            probabilities: p,
        };
    }
    Ok(out)
}

/// Whole-model gradient target: the mean cross-entropy of a fixed batch as a
/// function of every parameter, with batch normalization in inference mode so
/// the loss is a deterministic function of the parameters.
pub struct ModelGradProbe {
    pub mode: Mode,
    model: std::cell::RefCell<ScmModel<f64>>,
    batch: Vec<EncodedSequence>,
    labels: Vec<usize>,
}

impl ModelGradProbe {
    /// Dropout is disabled and the running statistics are randomized so the
    /// inference-mode normalization is not the identity. Biases start at zero,
    /// which puts the activations of all-padding windows exactly on the ReLU
    /// kink, so they are moved off it.
    pub fn new(mut model: ScmModel<f64>, batch: Vec<EncodedSequence>, labels: Vec<usize>, rng: &mut Rng) -> Self {
        model.config_mut().dropout_rate = 0.0;
        let mut biases: Vec<&mut crate::nn::Parameter<f64>> = model.convs.iter_mut().map(|c| &mut c.bias).collect();
        biases.extend([&mut model.dense.bias, &mut model.head.bias, &mut model.batchnorm.beta]);
        for p in biases {
            for v in p.value.data_mut() {
                let magnitude = rng.uniform(0.1, 0.5);
                *v = if rng.next_f64() < 0.5 { -magnitude } else { magnitude };
            }
        }
        for v in model.batchnorm.gamma.value.data_mut() {
            *v = rng.uniform(0.5, 1.5);
        }
        for v in model.batchnorm.running_mean.data_mut() {
            *v = rng.uniform(-0.5, 0.5);
        }
        for v in model.batchnorm.running_var.data_mut() {
            *v = rng.uniform(0.5, 1.5);
        }
        ModelGradProbe {
            mode: Mode::Eval,
            model: std::cell::RefCell::new(model),
            batch,
            labels,
        }
    }

    /// A small random model and batch for whole-network checks.
    pub fn tiny(seed: u64) -> Result<Self> {
        let config = ScmConfig {
            embedding_dim: 4,
            max_len: 12,
            conv_filters: vec![4, 4],
            dense_units: 4,
            num_classes: 3,
            dropout_rate: 0.0,
            seed,
            ..Default::default()
        };
        let vocab_size = 20;
        let mut rng = Rng::derive(seed, 99);
        let model = ScmModel::assemble(config, vocab_size, String::new(), None)?;
        let batch: Vec<EncodedSequence> = (0..4)
            .map(|_| {
                let true_length = 6 + rng.below(7);
                let mut indices: Vec<usize> = (0..true_length).map(|_| 1 + rng.below(vocab_size - 1)).collect();
                indices.resize(12, crate::encoder::PAD);
                EncodedSequence {
                    indices,
                    true_length,
                    weights: None,
                }
            })
            .collect();
        let labels = (0..4).map(|_| rng.below(3)).collect();
        Ok(ModelGradProbe::new(model, batch, labels, &mut rng))
    }

    pub fn parameter_count(&self) -> usize {
        self.model.borrow().parameter_count()
    }
}

impl GradCheckTarget for ModelGradProbe {
    fn point(&self) -> Vec<f64> {
        self.model.borrow().flat_values()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let mut model = self.model.borrow_mut();
        model.set_flat_values(x)?;
        let (logits, _) = model.forward_pass(&self.batch, self.mode, &mut Rng::new(0))?;
        Ok(crate::nn::softmax_cross_entropy(&logits, &self.labels)?.0)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut model = self.model.borrow_mut();
        model.set_flat_values(x)?;
        model.zero_grad();
        model.loss_and_backward(&self.batch, &self.labels, self.mode, &mut Rng::new(0))?;
        Ok(model.flat_grads())
    }
}

/// Probabilities for a batch as plain `f64` rows.
pub fn probabilities_f64<T: Scalar>(probs: &Tensor<T>) -> Vec<Vec<f64>> {
    let (rows, _) = probs.dims2().expect("probabilities are a matrix");
    (0..rows).map(|r| probs.row(r).iter().map(|v| v.as_f64()).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::build_vocabulary;
    use crate::nn::gradcheck::{grad_check, DEFAULT_EPS};
    use crate::pooling::{PoolKind, PoolSpec};

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn toy() -> (ScmConfig, Vocabulary) {
        let vocab = build_vocabulary(&[toks("ا ب")], None).unwrap();
        let config = ScmConfig {
            embedding_dim: 2,
            max_len: 4,
            conv_filters: vec![2],
            kernel_size: 3,
            dense_units: 2,
            num_classes: 2,
            ..Default::default()
        };
        (config, vocab)
    }

    #[test]
    fn toy_parameter_count_matches_closed_form() {
        let (config, vocab) = toy();
        assert_eq!(vocab.len(), 4);
        let model = build_scm::<f64>(&config, &vocab, None).unwrap();
        // embedding 4·2, conv 3·2·2+2, dense 2·2+2, batchnorm 2·2, head 2·2+2
        assert_eq!(model.parameter_count(), 8 + 14 + 6 + 4 + 6);
    }

    #[test]
    fn whole_model_gradient_check() {
        for seed in 0..5 {
            let probe = ModelGradProbe::tiny(seed).unwrap();
            let report = grad_check(&probe, DEFAULT_EPS).unwrap();
            assert!(report.max_relative_error < 1e-4, "seed {seed}: {report:?}");
            let mut probe = ModelGradProbe::tiny(seed).unwrap();
            probe.mode = Mode::Train;
            let x = probe.point();
            let analytic = probe.gradient(&x).unwrap();
            let numeric = crate::nn::gradcheck::numeric_gradient(|p| probe.value(p), &x, DEFAULT_EPS).unwrap();
            for (i, (&a, &n)) in analytic.iter().zip(&numeric).enumerate() {
                if a.abs().max(n.abs()) > 1e-6 {
                    let err = crate::nn::gradcheck::relative_error(a, n);
                    assert!(err < 1e-4, "train seed {seed} index {i}: {a} vs {n}");
                }
            }
        }
    }

    #[test]
    fn pad_row_stays_zero_and_train_needs_two() {
        let (config, vocab) = toy();
        let mut model = build_scm::<f64>(&config, &vocab, None).unwrap();
        assert!(model.embedding.value.row(0).iter().all(|&v| v == 0.0));
        let batch = vec![
            model.encode_tokens(&toks("ا"), &vocab),
            model.encode_tokens(&toks("ب ا"), &vocab),
        ];
        let mut rng = Rng::new(1);
        model.loss_and_backward(&batch, &[0, 1], Mode::Train, &mut rng).unwrap();
        assert!(model.embedding.grad.row(0).iter().all(|&v| v == 0.0));
        assert!(model.loss_and_backward(&batch[..1], &[0], Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn checkpoint_round_trip_and_vocab_guard() {
        let (mut config, vocab) = toy();
        config.pooling = PoolSpec::new(PoolKind::Max, 2).unwrap();
        let mut model = build_scm::<f64>(&config, &vocab, None).unwrap();
        model.tfidf = Some(crate::encoder::fit_tfidf(&[toks("ا ب"), toks("ا")]).unwrap());
        model.batchnorm.running_mean.data_mut()[0] = 0.1 + 0.2;
        let text = write_checkpoint(&model);
        let back: ScmModel<f64> = read_checkpoint(&text, std::path::Path::new("m.ckpt")).unwrap();
        assert_eq!(back, model);
        assert_eq!(write_checkpoint(&back), text);

        let other = build_vocabulary(&[toks("ا ج")], None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&model, &path).unwrap();
        assert!(load_checkpoint::<f64>(&path, &vocab).is_ok());
        let err = load_checkpoint::<f64>(&path, &other).unwrap_err().to_string();
        assert!(err.contains("vocabulary hash"), "{err}");
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let (config, vocab) = toy();
        let model = build_scm::<f64>(&config, &vocab, None).unwrap();
        let text = write_checkpoint(&model);
        let cut = &text[..text.len() / 2];
        assert!(read_checkpoint::<f64>(cut, std::path::Path::new("m")).is_err());
    }

    #[test]
    fn predict_flags_empty_inputs() {
        let (config, vocab) = toy();
        let model = build_scm::<f64>(&config, &vocab, None).unwrap();
        let pipeline = TextPipeline::new(Default::default(), None);
        let out = predict(&model, &vocab, &pipeline, &["123 !!", "ا ب"]).unwrap();
        assert_eq!(out[0], Prediction::EmptyAfterPreprocessing);
        let Prediction::Label { probabilities, confidence, .. } = &out[1] else {
            panic!("expected a label")
        };
        assert!((probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(*confidence, probabilities.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn f32_model_runs() {
        let (config, vocab) = toy();
        let model = build_scm::<f32>(&config, &vocab, None).unwrap();
        let seq = model.encode_tokens(&toks("ا"), &vocab);
        let p = model.predict_proba(&[seq]).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-5);
    }
}
