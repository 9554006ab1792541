use serde::{Deserialize, Serialize};

use crate::corpus::Label;
use crate::error::{Error, Result};

/// Classification quality on one dataset. Class order is Positive, Negative,
/// Neutral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub examples: usize,
    pub accuracy: f64,
    /// Mean cross-entropy.
    pub loss: f64,
    pub labels: Vec<Label>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    /// Rows are true classes, columns predicted classes.
    pub confusion_matrix: Vec<Vec<usize>>,
    /// Entries of `precision`/`recall` that were 0/0 and reported as 0, as
    /// `precision:<label>` or `recall:<label>`.
    pub undefined: Vec<String>,
}

impl Metrics {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], num_classes: usize, loss: f64) -> Result<Metrics> {
        if truth.is_empty() {
            return Err(Error::data("cannot compute metrics on an empty dataset"));
        }
        if truth.len() != predicted.len() {
            return Err(Error::shape(format!(
                "{} labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let labels: Vec<Label> = (0..num_classes)
            .map(|i| Label::from_index(i).ok_or_else(|| Error::config(format!("unsupported class count {num_classes}"))))
            .collect::<Result<_>>()?;
        let mut confusion = vec![vec![0usize; num_classes]; num_classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= num_classes || p >= num_classes {
                return Err(Error::data(format!("class index outside 0..{num_classes}")));
            }
            confusion[t][p] += 1;
        }
        let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
        let mut precision = Vec::with_capacity(num_classes);
        let mut recall = Vec::with_capacity(num_classes);
        let mut undefined = Vec::new();
        for (c, label) in labels.iter().enumerate() {
            let tp = confusion[c][c] as f64;
            let predicted_c: usize = (0..num_classes).map(|r| confusion[r][c]).sum();
            let actual_c: usize = confusion[c].iter().sum();
            precision.push(if predicted_c == 0 {
                undefined.push(format!("precision:{}", label.token()));
                0.0
            } else {
                tp / predicted_c as f64
            });
            recall.push(if actual_c == 0 {
                undefined.push(format!("recall:{}", label.token()));
                0.0
            } else {
                tp / actual_c as f64
            });
        }
        Ok(Metrics {
            examples: truth.len(),
            accuracy: correct as f64 / truth.len() as f64,
            loss,
            labels,
            precision,
            recall,
            confusion_matrix: confusion,
            undefined,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }
}

/// Arithmetic mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
