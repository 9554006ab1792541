//! Mini-batch training, evaluation and k-fold cross-validation.

mod crossval;
mod history;
mod metrics;

pub use crossval::{cross_validate, CrossValResult, DataAccess, FoldResult};
pub use history::{EpochRecord, TrainingHistory};
pub use metrics::{mean_std, Metrics};

use crate::error::{Error, Result};
use crate::kv::{self, KeyValue};
use crate::model::{argmax, ScmModel};
use crate::nn::{adam_step, softmax, softmax_cross_entropy, AdamConfig, Mode};
use crate::pipeline::EncodedDataset;
use crate::rng::Rng;
use crate::scalar::Scalar;

const SHUFFLE_STREAM: u64 = 1_000;
const DROPOUT_STREAM: u64 = 1_000_000;
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
    /// Share of each cross-validation training portion held out for
    /// validation.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 10,
            adam: AdamConfig::default(),
            seed: 42,
            shuffle_each_epoch: true,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::config("batch_size must be at least 2"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(Error::config("Adam betas must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::config("validation_fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

impl KeyValue for TrainConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "batch_size" => self.batch_size = kv::parse_value(key, value)?,
            "epochs" => self.epochs = kv::parse_value(key, value)?,
            "learning_rate" => self.adam.learning_rate = kv::parse_value(key, value)?,
            "adam_beta1" => self.adam.beta1 = kv::parse_value(key, value)?,
            "adam_beta2" => self.adam.beta2 = kv::parse_value(key, value)?,
            "adam_eps" => self.adam.eps = kv::parse_value(key, value)?,
            "seed" => self.seed = kv::parse_value(key, value)?,
            "shuffle_each_epoch" => self.shuffle_each_epoch = kv::parse_bool(key, value)?,
            "validation_fraction" => self.validation_fraction = kv::parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(String, String)> {
        vec![
            ("batch_size".into(), self.batch_size.to_string()),
            ("epochs".into(), self.epochs.to_string()),
            ("learning_rate".into(), self.adam.learning_rate.to_string()),
            ("adam_beta1".into(), self.adam.beta1.to_string()),
            ("adam_beta2".into(), self.adam.beta2.to_string()),
            ("adam_eps".into(), self.adam.eps.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("shuffle_each_epoch".into(), self.shuffle_each_epoch.to_string()),
            ("validation_fraction".into(), self.validation_fraction.to_string()),
        ]
    }
}

/// Splits `order` into batches of `batch_size`; a trailing batch of one is
/// merged into the one before it.
pub fn batch_plan(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut batches: Vec<&[usize]> = order.chunks(batch_size).collect();
    if batches.len() >= 2 && batches.last().is_some_and(|b| b.len() == 1) {
        batches.pop();
        let start = (batches.len() - 1) * batch_size;
        *batches.last_mut().expect("at least one batch") = &order[start..];
    }
    batches
}

fn check_schema<T: Scalar>(model: &ScmModel<T>, ds: &EncodedDataset) -> Result<()> {
    if ds.schema.num_classes() != model.num_classes() {
        return Err(Error::data(format!(
            "{} has {} classes, the model {}",
            ds.name,
            ds.schema.num_classes(),
            model.num_classes()
        )));
    }
    Ok(())
}

/// Trains for exactly `config.epochs` epochs. Validation metrics are computed
/// with [`evaluate`] at the end of every epoch when `val` is non-empty.
pub fn train<T: Scalar>(
    model: &mut ScmModel<T>,
    train_ds: &EncodedDataset,
    val: Option<&EncodedDataset>,
    config: &TrainConfig,
) -> Result<TrainingHistory> {
    config.validate()?;
    check_schema(model, train_ds)?;
    if train_ds.len() < 2 {
        return Err(Error::data(format!(
            "{}: training needs at least 2 examples, got {}",
            train_ds.name,
            train_ds.len()
        )));
    }
    let val = val.filter(|v| !v.is_empty());
    if let Some(v) = val {
        check_schema(model, v)?;
    }
    let mut history = TrainingHistory::default();
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    for epoch in 0..config.epochs {
        if config.shuffle_each_epoch {
            order = Rng::derive(config.seed, SHUFFLE_STREAM + epoch as u64).permutation(train_ds.len());
        }
        let mut dropout_rng = Rng::derive(config.seed, DROPOUT_STREAM + epoch as u64);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch_idx in batch_plan(&order, config.batch_size) {
            let batch: Vec<_> = batch_idx.iter().map(|&i| train_ds.sequences[i].clone()).collect();
            let labels: Vec<usize> = batch_idx.iter().map(|&i| train_ds.labels[i]).collect();
            model.zero_grad();
            let (loss, probs) = model.loss_and_backward(&batch, &labels, Mode::Train, &mut dropout_rng)?;
            for p in model.trainable_parameters_mut() {
                adam_step(p, &config.adam);
            }
            loss_sum += loss.as_f64() * batch.len() as f64;
            correct += labels
                .iter()
                .enumerate()
                .filter(|&(r, &l)| argmax(probs.row(r)) == l)
                .count();
        }
        let (val_loss, val_accuracy) = match val {
            Some(v) => {
                let m = evaluate(model, v)?;
                (Some(m.loss), Some(m.accuracy))
            }
            None => (None, None),
        };
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / train_ds.len() as f64,
            train_accuracy: correct as f64 / train_ds.len() as f64,
            val_loss,
            val_accuracy,
        };
        log::info!(
            "epoch {}: loss {:.4} acc {:.4}{}",
            record.epoch,
            record.train_loss,
            record.train_accuracy,
            record
                .val_accuracy
                .map(|a| format!(" val_acc {a:.4}"))
                .unwrap_or_default()
        );
        history.epochs.push(record);
    }
    Ok(history)
}

/// Inference-mode metrics over `ds`.
pub fn evaluate<T: Scalar>(model: &ScmModel<T>, ds: &EncodedDataset) -> Result<Metrics> {
    if ds.is_empty() {
        return Err(Error::data(format!("{}: cannot evaluate on an empty dataset", ds.name)));
    }
    check_schema(model, ds)?;
    let mut predicted = Vec::with_capacity(ds.len());
    let mut loss_sum = 0.0;
    let mut rng = Rng::new(0);
    for (chunk, labels) in ds.sequences.chunks(EVAL_CHUNK).zip(ds.labels.chunks(EVAL_CHUNK)) {
        let (logits, _) = model.forward_pass(chunk, Mode::Eval, &mut rng)?;
        let (loss, _) = softmax_cross_entropy(&logits, labels)?;
        loss_sum += loss.as_f64() * chunk.len() as f64;
        let probs = softmax(&logits)?;
        predicted.extend((0..chunk.len()).map(|r| argmax(probs.row(r))));
    }
    Metrics::from_predictions(&ds.labels, &predicted, model.num_classes(), loss_sum / ds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_plan_merges_a_single_leftover() {
        let order: Vec<usize> = (0..9).collect();
        let plan = batch_plan(&order, 4);
        assert_eq!(plan.iter().map(|b| b.len()).collect::<Vec<_>>(), vec![4, 5]);
        let order: Vec<usize> = (0..10).collect();
        assert_eq!(batch_plan(&order, 4).iter().map(|b| b.len()).collect::<Vec<_>>(), vec![4, 4, 2]);
        assert_eq!(batch_plan(&order, 32).len(), 1);
    }

    #[test]
    fn config_validation_and_kv() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate().is_ok());
        assert!(cfg.set("batch_size", "1").unwrap());
        assert!(cfg.validate().is_err());
        assert!(!cfg.set("pooling", "max").unwrap());
        let mut back = TrainConfig::default();
        for (k, v) in cfg.entries() {
            back.set(&k, &v).unwrap();
        }
        assert_eq!(back, cfg);
    }
}
