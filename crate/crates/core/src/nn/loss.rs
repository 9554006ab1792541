use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// The derivative at exactly zero is taken as 0.
pub fn relu_backward<T: Scalar>(x: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    x.check_same_shape(upstream)?;
    let data = x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(x.shape(), data)
}

/// Row-wise softmax of `[B, C]` logits with max-shift.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (rows, cols) = logits.dims2()?;
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let row = logits.row(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&z| (z - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        out.extend(exps.into_iter().map(|e| e / total));
    }
    Tensor::from_vec(&[rows, cols], out)
}

/// Mean cross-entropy over the batch and its gradient `(softmax − onehot)/B`.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    let (rows, cols) = logits.dims2()?;
    if labels.len() != rows {
        return Err(Error::shape(format!("{} labels for a batch of {rows}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= cols) {
        return Err(Error::data(format!("label {bad} out of range for {cols} classes")));
    }
    let batch = T::from_usize_lossy(rows);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(rows * cols);
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let log_total = row.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
        // −log softmax[label] = log Σ exp(z − max) − (z_label − max)
        loss += log_total - (row[label] - max);
        for (c, &z) in row.iter().enumerate() {
            let p = (z - max - log_total).exp();
            let onehot = if c == label { T::one() } else { T::zero() };
            grad.push((p - onehot) / batch);
        }
    }
    Ok((loss / batch, Tensor::from_vec(&[rows, cols], grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_examples() {
        let x = Tensor::<f64>::from_f64(&[3], &[-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let up = Tensor::filled(&[3], 1.0);
        assert_eq!(relu_backward(&x, &up).unwrap().data(), &[0.0, 0.0, 1.0]);
        let pos = Tensor::<f64>::from_f64(&[2], &[0.5, 3.0]).unwrap();
        assert_eq!(relu(&pos), pos);
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let logits = Tensor::<f64>::zeros(&[2, 3]);
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 2]).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn large_logit_is_stable() {
        let logits = Tensor::<f64>::from_f64(&[1, 2], &[1000.0, 0.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss.abs() < 1e-12 && grad.is_finite());
        let (loss, _) = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!((loss - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn softmax_rows_are_distributions() {
        let logits = Tensor::<f64>::from_f64(&[2, 3], &[1.0, 2.0, 3.0, -5.0, 0.0, 700.0]).unwrap();
        let p = softmax(&logits).unwrap();
        for r in 0..2 {
            let s: f64 = p.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn label_out_of_range() {
        assert!(softmax_cross_entropy(&Tensor::<f64>::zeros(&[1, 2]), &[2]).is_err());
    }
}
