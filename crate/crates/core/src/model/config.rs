use crate::encoder::Truncation;
use crate::error::{Error, Result};
use crate::kv::{self, KeyValue};
use crate::nn::conv1d_output_len;
use crate::pooling::{PoolKind, PoolSpec};

/// Architecture hyperparameters of the sentiment convolutional model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmConfig {
    pub embedding_dim: usize,
    pub max_len: usize,
    pub conv_filters: Vec<usize>,
    pub kernel_size: usize,
    pub conv_stride: usize,
    pub pooling: PoolSpec,
    /// Pool after every convolution instead of once after the stack.
    pub pool_after_each_conv: bool,
    pub dense_units: usize,
    pub dropout_rate: f64,
    pub num_classes: usize,
    /// Vocabulary cap, `None` keeps every distinct token.
    pub max_features: Option<usize>,
    pub truncation: Truncation,
    pub tfidf_scaling: bool,
    pub freeze_embeddings: bool,
    pub seed: u64,
}

impl Default for ScmConfig {
    fn default() -> Self {
        ScmConfig {
            embedding_dim: 128,
            max_len: 50,
            conv_filters: vec![512, 256, 128, 64],
            kernel_size: 3,
            conv_stride: 1,
            pooling: PoolSpec::default(),
            pool_after_each_conv: false,
            dense_units: 32,
            dropout_rate: 0.5,
            num_classes: 2,
            max_features: None,
            truncation: Truncation::KeepHead,
            tfidf_scaling: false,
            freeze_embeddings: false,
            seed: 42,
        }
    }
}

/// Sequence lengths through the model for one input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeChain {
    /// Output length of each convolution.
    pub conv_lens: Vec<usize>,
    /// Length after pooling, the number of positions fed to the dense layer.
    pub pooled_len: usize,
}

impl ScmConfig {
    /// Sequence lengths through the stack for an input of `len` tokens.
    pub fn shape_chain_for(&self, len: usize) -> Option<ShapeChain> {
        let mut current = len;
        let mut conv_lens = Vec::with_capacity(self.conv_filters.len());
        for _ in &self.conv_filters {
            current = conv1d_output_len(current, self.kernel_size, self.conv_stride)?;
            conv_lens.push(current);
            if self.pool_after_each_conv {
                current = self.pooling.output_len(current)?;
            }
        }
        if !self.pool_after_each_conv {
            current = self.pooling.output_len(current)?;
        }
        Some(ShapeChain {
            conv_lens,
            pooled_len: current,
        })
    }

    /// Smallest `max_len` for which the stack is well defined.
    pub fn min_max_len(&self) -> usize {
        (1..)
            .find(|&len| self.shape_chain_for(len).is_some())
            .expect("some length satisfies the chain")
    }

    pub fn shape_chain(&self) -> Result<ShapeChain> {
        self.shape_chain_for(self.max_len).ok_or_else(|| {
            Error::config(format!(
                "max_len {} is too small for the convolution and pooling stack (minimum {})",
                self.max_len,
                self.min_max_len()
            ))
        })
    }

    /// Number of flattened features entering batch normalization.
    pub fn flat_features(&self) -> Result<usize> {
        Ok(self.shape_chain()?.pooled_len * self.dense_units)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config(format!("num_classes must be at least 2, got {}", self.num_classes)));
        }
        if self.conv_filters.is_empty() || self.conv_filters.contains(&0) {
            return Err(Error::config("conv_filters must be a non-empty list of positive sizes"));
        }
        for (name, v) in [
            ("embedding_dim", self.embedding_dim),
            ("kernel_size", self.kernel_size),
            ("conv_stride", self.conv_stride),
            ("dense_units", self.dense_units),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!("dropout_rate must be in [0, 1), got {}", self.dropout_rate)));
        }
        if self.max_features == Some(0) {
            return Err(Error::config("max_features must be positive"));
        }
        self.shape_chain().map(|_| ())
    }
}

impl KeyValue for ScmConfig {
    fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "embedding_dim" => self.embedding_dim = kv::parse_value(key, value)?,
            "max_len" => self.max_len = kv::parse_value(key, value)?,
            "conv_filters" => self.conv_filters = kv::parse_list(key, value)?,
            "kernel_size" => self.kernel_size = kv::parse_value(key, value)?,
            "conv_stride" => self.conv_stride = kv::parse_value(key, value)?,
            "pooling" => self.pooling.kind = value.parse::<PoolKind>()?,
            "pool_size" => {
                let size = kv::parse_value(key, value)?;
                let stride = if self.pooling.stride == self.pooling.size { size } else { self.pooling.stride };
                self.pooling = PoolSpec::with_stride(self.pooling.kind, size, stride)?;
            }
            "pool_stride" => {
                self.pooling = PoolSpec::with_stride(self.pooling.kind, self.pooling.size, kv::parse_value(key, value)?)?
            }
            "pool_after_each_conv" => self.pool_after_each_conv = kv::parse_bool(key, value)?,
            "dense_units" => self.dense_units = kv::parse_value(key, value)?,
            "dropout_rate" => self.dropout_rate = kv::parse_value(key, value)?,
            "num_classes" => self.num_classes = kv::parse_value(key, value)?,
            "max_features" => {
                self.max_features = match value {
                    "all" => None,
                    v => Some(kv::parse_value(key, v)?),
                }
            }
            "truncation" => self.truncation = value.parse()?,
            "tfidf_scaling" => self.tfidf_scaling = kv::parse_bool(key, value)?,
            "freeze_embeddings" => self.freeze_embeddings = kv::parse_bool(key, value)?,
            "seed" => self.seed = kv::parse_value(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn entries(&self) -> Vec<(String, String)> {
        vec![
            ("embedding_dim".into(), self.embedding_dim.to_string()),
            ("max_len".into(), self.max_len.to_string()),
            ("conv_filters".into(), kv::join_list(&self.conv_filters)),
            ("kernel_size".into(), self.kernel_size.to_string()),
            ("conv_stride".into(), self.conv_stride.to_string()),
            ("pooling".into(), self.pooling.kind.to_string()),
            ("pool_size".into(), self.pooling.size.to_string()),
            ("pool_stride".into(), self.pooling.stride.to_string()),
            ("pool_after_each_conv".into(), self.pool_after_each_conv.to_string()),
            ("dense_units".into(), self.dense_units.to_string()),
            ("dropout_rate".into(), self.dropout_rate.to_string()),
            ("num_classes".into(), self.num_classes.to_string()),
            (
                "max_features".into(),
                self.max_features.map_or_else(|| "all".to_owned(), |m| m.to_string()),
            ),
            ("truncation".into(), self.truncation.id().into()),
            ("tfidf_scaling".into(), self.tfidf_scaling.to_string()),
            ("freeze_embeddings".into(), self.freeze_embeddings.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chain_at_max_len_50() {
        let cfg = ScmConfig::default();
        let chain = cfg.shape_chain().unwrap();
        assert_eq!(chain.conv_lens.last(), Some(&42));
        assert_eq!(chain.pooled_len, 21);
    }

    #[test]
    fn minimum_length_is_10() {
        let cfg = ScmConfig {
            max_len: 9,
            ..Default::default()
        };
        assert_eq!(cfg.min_max_len(), 10);
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("minimum 10"), "{err}");
    }

    #[test]
    fn per_layer_pooling_shrinks_faster() {
        let cfg = ScmConfig {
            pool_after_each_conv: true,
            max_len: 80,
            ..Default::default()
        };
        // 80 → 78 → 39 → 37 → 18 → 16 → 8 → 6 → 3
        assert_eq!(cfg.shape_chain().unwrap().pooled_len, 3);
    }

    #[test]
    fn kv_round_trip() {
        let cfg = ScmConfig {
            conv_filters: vec![8, 4],
            pooling: PoolSpec::with_stride(PoolKind::Min, 4, 1).unwrap(),
            max_features: Some(100),
            tfidf_scaling: true,
            ..Default::default()
        };
        let mut back = ScmConfig::default();
        for (k, v) in cfg.entries() {
            assert!(back.set(&k, &v).unwrap(), "{k}");
        }
        assert_eq!(back, cfg);
    }

    #[test]
    fn pool_size_drags_default_stride() {
        let mut cfg = ScmConfig::default();
        cfg.set("pool_size", "4").unwrap();
        assert_eq!((cfg.pooling.size, cfg.pooling.stride), (4, 4));
        assert!(cfg.set("pooling", "median").is_err());
        assert!(!cfg.set("unknown", "1").unwrap());
    }
}
