use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// One record per completed epoch.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// `epoch,train_loss,train_acc,val_loss,val_acc`; validation cells are
    /// empty when there was no validation set.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch,
                r.train_loss,
                r.train_accuracy,
                opt(r.val_loss),
                opt(r.val_accuracy)
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let h = TrainingHistory {
            epochs: vec![
                EpochRecord {
                    epoch: 1,
                    train_loss: 0.5,
                    train_accuracy: 0.75,
                    val_loss: None,
                    val_accuracy: None,
                },
                EpochRecord {
                    epoch: 2,
                    train_loss: 0.25,
                    train_accuracy: 1.0,
                    val_loss: Some(0.3),
                    val_accuracy: Some(0.9),
                },
            ],
        };
        assert_eq!(
            h.to_csv(),
            "epoch,train_loss,train_acc,val_loss,val_acc\n1,0.5,0.75,,\n2,0.25,1,0.3,0.9\n"
        );
    }
}
