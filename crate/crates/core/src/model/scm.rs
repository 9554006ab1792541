use crate::encoder::{apply_tfidf, encode_with, EmbeddingTable, EncodedSequence, TfIdfModel, Vocabulary, PAD};
use crate::error::{Error, Result};
use crate::nn::{
    batchnorm_eval, batchnorm_train, dropout, dropout_backward, relu, relu_backward, softmax, softmax_cross_entropy,
    BatchNorm, BatchNormCache, Conv1d, Dense, DropoutMask, Mode, Parameter, Tensor,
};
use crate::pooling::{pool, pool_backward};
use crate::rng::Rng;
use crate::scalar::Scalar;

use super::config::ScmConfig;

/// Embedding → [Conv1d + ReLU]×n → pooling → position-wise Dense + ReLU →
/// Dropout → BatchNorm → Dropout → Dense head → softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmModel<T = f64> {
    config: ScmConfig,
    vocab_hash: String,
    pub embedding: Parameter<T>,
    pub convs: Vec<Conv1d<T>>,
    pub dense: Dense<T>,
    pub batchnorm: BatchNorm<T>,
    pub head: Dense<T>,
    pub tfidf: Option<TfIdfModel>,
}

struct ConvCache<T> {
    input: Tensor<T>,
    pre_activation: Tensor<T>,
    /// Post-ReLU output when pooling follows this layer.
    pool_input: Option<Tensor<T>>,
}

struct ExampleCache<T> {
    indices: Vec<usize>,
    weights: Option<Vec<T>>,
    convs: Vec<ConvCache<T>>,
    pool_input: Option<Tensor<T>>,
    pooled: Tensor<T>,
    dense_pre: Tensor<T>,
}

/// Everything the backward pass needs from one batched forward pass.
pub struct BatchCache<T> {
    examples: Vec<ExampleCache<T>>,
    first_dropout: DropoutMask<T>,
    batchnorm: BatchNormCache<T>,
    second_dropout: DropoutMask<T>,
    head_input: Tensor<T>,
}

impl<T: Scalar> ScmModel<T> {
    pub(crate) fn assemble(
        config: ScmConfig,
        vocab_size: usize,
        vocab_hash: String,
        pretrained: Option<EmbeddingTable<T>>,
    ) -> Result<Self> {
        config.validate()?;
        let chain = config.shape_chain()?;
        let embedding = match pretrained {
            Some(table) => {
                if table.vocab_size() != vocab_size || table.dim() != config.embedding_dim {
                    return Err(Error::config(format!(
                        "pretrained embeddings are {}x{}, model needs {}x{}",
                        table.vocab_size(),
                        table.dim(),
                        vocab_size,
                        config.embedding_dim
                    )));
                }
                Parameter::new(table.into_matrix())
            }
            None => Parameter::new(
                EmbeddingTable::random(vocab_size, config.embedding_dim, &mut Rng::derive(config.seed, 0)).into_matrix(),
            ),
        };
        let mut in_channels = config.embedding_dim;
        let convs = config
            .conv_filters
            .iter()
            .enumerate()
            .map(|(i, &filters)| {
                let mut rng = Rng::derive(config.seed, 1 + i as u64);
                let layer = Conv1d::new(config.kernel_size, in_channels, filters, config.conv_stride, &mut rng);
                in_channels = filters;
                layer
            })
            .collect();
        let layers = config.conv_filters.len() as u64;
        let dense = Dense::new(in_channels, config.dense_units, &mut Rng::derive(config.seed, 1 + layers));
        let features = chain.pooled_len * config.dense_units;
        let head = Dense::new(features, config.num_classes, &mut Rng::derive(config.seed, 2 + layers));
        Ok(ScmModel {
            vocab_hash,
            embedding,
            convs,
            dense,
            batchnorm: BatchNorm::new(features),
            head,
            tfidf: None,
            config,
        })
    }

    pub fn config(&self) -> &ScmConfig {
        &self.config
    }

    pub(crate) fn config_mut(&mut self) -> &mut ScmConfig {
        &mut self.config
    }

    pub fn vocab_hash(&self) -> &str {
        &self.vocab_hash
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.value.shape()[0]
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    /// Fails unless `vocab` is the vocabulary the model was built with.
    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        if vocab.content_hash() != self.vocab_hash {
            return Err(Error::Checkpoint(format!(
                "vocabulary hash {} does not match the model's {}",
                vocab.content_hash(),
                self.vocab_hash
            )));
        }
        Ok(())
    }

    /// Named parameters in a fixed order.
    pub fn parameters(&self) -> Vec<(String, &Parameter<T>)> {
        let mut out = vec![("embedding".to_owned(), &self.embedding)];
        for (i, conv) in self.convs.iter().enumerate() {
            out.push((format!("conv{i}.weights"), &conv.weights));
            out.push((format!("conv{i}.bias"), &conv.bias));
        }
        out.push(("dense.weights".into(), &self.dense.weights));
        out.push(("dense.bias".into(), &self.dense.bias));
        out.push(("batchnorm.gamma".into(), &self.batchnorm.gamma));
        out.push(("batchnorm.beta".into(), &self.batchnorm.beta));
        out.push(("head.weights".into(), &self.head.weights));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    /// Same order as [`Self::parameters`].
    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut out = vec![&mut self.embedding];
        for conv in &mut self.convs {
            out.push(&mut conv.weights);
            out.push(&mut conv.bias);
        }
        out.extend([
            &mut self.dense.weights,
            &mut self.dense.bias,
            &mut self.batchnorm.gamma,
            &mut self.batchnorm.beta,
            &mut self.head.weights,
            &mut self.head.bias,
        ]);
        out
    }

    /// Parameters the optimizer updates; excludes a frozen embedding.
    pub fn trainable_parameters_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let frozen = self.config.freeze_embeddings;
        let mut params = self.parameters_mut();
        if frozen {
            params.remove(0);
        }
        params
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, p)| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    pub fn flat_values(&self) -> Vec<T> {
        self.parameters().iter().flat_map(|(_, p)| p.value.data().to_vec()).collect()
    }

    pub fn flat_grads(&self) -> Vec<T> {
        self.parameters().iter().flat_map(|(_, p)| p.grad.data().to_vec()).collect()
    }

    pub fn set_flat_values(&mut self, values: &[T]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(Error::shape(format!(
                "{} values for {} parameters",
                values.len(),
                self.parameter_count()
            )));
        }
        let mut offset = 0;
        for p in self.parameters_mut() {
            let n = p.len();
            p.value.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Encodes normalized tokens to the model's fixed input length, attaching
    /// TF-IDF weights when scaling is enabled.
    pub fn encode_tokens(&self, tokens: &[String], vocab: &Vocabulary) -> EncodedSequence {
        let mut seq = encode_with(tokens, vocab, self.config.max_len, self.config.truncation);
        if self.config.tfidf_scaling {
            if let Some(tfidf) = &self.tfidf {
                let all = apply_tfidf(tfidf, tokens);
                let start = match self.config.truncation {
                    crate::encoder::Truncation::KeepHead => 0,
                    crate::encoder::Truncation::KeepTail => tokens.len() - seq.true_length,
                };
                let mut weights = all[start..start + seq.true_length].to_vec();
                weights.resize(self.config.max_len, 0.0);
                seq.weights = Some(weights);
            }
        }
        seq
    }

    fn embed(&self, seq: &EncodedSequence) -> Result<(Tensor<T>, Option<Vec<T>>)> {
        let (len, dim) = (self.config.max_len, self.config.embedding_dim);
        if seq.indices.len() != len {
            return Err(Error::shape(format!(
                "sequence length {} does not match max_len {len}",
                seq.indices.len()
            )));
        }
        let weights: Option<Vec<T>> = match (&seq.weights, self.config.tfidf_scaling) {
            (Some(w), true) if w.len() == len => Some(w.iter().map(|&x| T::lit(x)).collect()),
            (Some(w), true) => {
                return Err(Error::shape(format!("{} TF-IDF weights for length {len}", w.len())));
            }
            _ => None,
        };
        let mut x = Tensor::zeros(&[len, dim]);
        for (t, &idx) in seq.indices.iter().enumerate() {
            if idx >= self.vocab_size() {
                return Err(Error::data(format!("token index {idx} outside vocabulary of {}", self.vocab_size())));
            }
            if idx == PAD {
                continue;
            }
            let scale = weights.as_ref().map_or(T::one(), |w| w[t]);
            for (dst, &src) in x.row_mut(t).iter_mut().zip(self.embedding.value.row(idx)) {
                *dst = src * scale;
            }
        }
        Ok((x, weights))
    }

    fn forward_example(&self, seq: &EncodedSequence) -> Result<(Vec<T>, ExampleCache<T>)> {
        let (mut x, weights) = self.embed(seq)?;
        let spec = self.config.pooling;
        let per_layer = self.config.pool_after_each_conv;
        let mut convs = Vec::with_capacity(self.convs.len());
        for conv in &self.convs {
            let pre = conv.forward(&x)?;
            let act = relu(&pre);
            let input = std::mem::replace(&mut x, act);
            let pool_input = if per_layer {
                let pooled = pool(&x, &spec)?;
                Some(std::mem::replace(&mut x, pooled))
            } else {
                None
            };
            convs.push(ConvCache {
                input,
                pre_activation: pre,
                pool_input,
            });
        }
        let pool_input = if per_layer {
            None
        } else {
            let pooled = pool(&x, &spec)?;
            Some(std::mem::replace(&mut x, pooled))
        };
        let dense_pre = self.dense.forward(&x)?;
        let features = relu(&dense_pre).into_data();
        Ok((
            features,
            ExampleCache {
                indices: seq.indices.clone(),
                weights,
                convs,
                pool_input,
                pooled: x,
                dense_pre,
            },
        ))
    }

    /// Logits for a batch plus the state needed to backpropagate. Running
    /// batch-norm statistics are not touched.
    pub fn forward_pass(&self, batch: &[EncodedSequence], mode: Mode, rng: &mut Rng) -> Result<(Tensor<T>, BatchCache<T>)> {
        if batch.is_empty() {
            return Err(Error::data("empty batch"));
        }
        if mode == Mode::Train && batch.len() < 2 {
            return Err(Error::data("training mode needs a batch of at least 2 (batch normalization)"));
        }
        let features = self.batchnorm.features();
        let mut flat = Vec::with_capacity(batch.len() * features);
        let mut examples = Vec::with_capacity(batch.len());
        for seq in batch {
            let (row, cache) = self.forward_example(seq)?;
            flat.extend(row);
            examples.push(cache);
        }
        let h = Tensor::from_vec(&[batch.len(), features], flat)?;
        let rate = self.config.dropout_rate;
        let (d1, first_dropout) = dropout(&h, rate, mode, rng)?;
        let bn = &self.batchnorm;
        let (normed, bn_cache) = match mode {
            Mode::Train => batchnorm_train(&d1, &bn.gamma.value, &bn.beta.value, bn.eps)?,
            Mode::Eval => batchnorm_eval(&d1, &bn.gamma.value, &bn.beta.value, &bn.running_mean, &bn.running_var, bn.eps)?,
        };
        let (d2, second_dropout) = dropout(&normed, rate, mode, rng)?;
        let logits = self.head.forward(&d2)?;
        Ok((
            logits,
            BatchCache {
                examples,
                first_dropout,
                batchnorm: bn_cache,
                second_dropout,
                head_input: d2,
            },
        ))
    }

    fn update_running_stats(&mut self, cache: &BatchCache<T>) {
        if let BatchNormCache::Train { batch_mean, batch_var, .. } = &cache.batchnorm {
            let bn = &mut self.batchnorm;
            let keep = bn.momentum;
            let take = T::one() - keep;
            for (r, &m) in bn.running_mean.data_mut().iter_mut().zip(batch_mean) {
                *r = keep * *r + take * m;
            }
            for (r, &v) in bn.running_var.data_mut().iter_mut().zip(batch_var) {
                *r = keep * *r + take * v;
            }
        }
    }

    /// Class probabilities, one row per sequence. Train mode updates the
    /// running batch-norm statistics.
    pub fn forward(&mut self, batch: &[EncodedSequence], mode: Mode, rng: &mut Rng) -> Result<Tensor<T>> {
        let (logits, cache) = self.forward_pass(batch, mode, rng)?;
        if mode == Mode::Train {
            self.update_running_stats(&cache);
        }
        softmax(&logits)
    }

    /// Deterministic inference.
    pub fn predict_proba(&self, batch: &[EncodedSequence]) -> Result<Tensor<T>> {
        let (logits, _) = self.forward_pass(batch, Mode::Eval, &mut Rng::new(0))?;
        softmax(&logits)
    }

    /// Mean cross-entropy of the batch; gradients are accumulated into every
    /// parameter. Returns the loss and class probabilities.
    pub fn loss_and_backward(
        &mut self,
        batch: &[EncodedSequence],
        labels: &[usize],
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(T, Tensor<T>)> {
        let (logits, cache) = self.forward_pass(batch, mode, rng)?;
        if mode == Mode::Train {
            self.update_running_stats(&cache);
        }
        let (loss, logit_grad) = softmax_cross_entropy(&logits, labels)?;
        self.backward(&cache, &logit_grad)?;
        Ok((loss, softmax(&logits)?))
    }

    fn backward(&mut self, cache: &BatchCache<T>, logit_grad: &Tensor<T>) -> Result<()> {
        let d2 = self.head.backward(&cache.head_input, logit_grad)?;
        let d_norm = dropout_backward(&cache.second_dropout, &d2)?;
        let d1 = self.batchnorm.backward(&cache.batchnorm, &d_norm)?;
        let dh = dropout_backward(&cache.first_dropout, &d1)?;

        let spec = self.config.pooling;
        let (pooled_len, units) = (self.config.shape_chain()?.pooled_len, self.config.dense_units);
        let frozen = self.config.freeze_embeddings;
        for (b, ex) in cache.examples.iter().enumerate() {
            let d_features = Tensor::from_vec(&[pooled_len, units], dh.row(b).to_vec())?;
            let d_dense_pre = relu_backward(&ex.dense_pre, &d_features)?;
            let mut dx = self.dense.backward(&ex.pooled, &d_dense_pre)?;
            if let Some(input) = &ex.pool_input {
                dx = pool_backward(input, &spec, &dx)?;
            }
            for (conv, cc) in self.convs.iter_mut().zip(&ex.convs).rev() {
                if let Some(input) = &cc.pool_input {
                    dx = pool_backward(input, &spec, &dx)?;
                }
                let d_pre = relu_backward(&cc.pre_activation, &dx)?;
                dx = conv.backward(&cc.input, &d_pre)?;
            }
            if frozen {
                continue;
            }
            for (t, &idx) in ex.indices.iter().enumerate() {
                if idx == PAD {
                    continue;
                }
                let scale = ex.weights.as_ref().map_or(T::one(), |w| w[t]);
                for (g, &d) in self.embedding.grad.row_mut(idx).iter_mut().zip(dx.row(t)) {
                    *g += d * scale;
                }
            }
        }
        Ok(())
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
