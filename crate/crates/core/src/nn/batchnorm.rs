use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::param::Parameter;
use super::{Mode, Tensor};

/// Forward-pass state kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub enum BatchNormCache<T> {
    Train {
        x_hat: Tensor<T>,
        inv_std: Vec<T>,
        batch_mean: Vec<T>,
        batch_var: Vec<T>,
    },
    Eval {
        x_hat: Tensor<T>,
        inv_std: Vec<T>,
    },
}

fn check_affine<T: Scalar>(features: usize, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<()> {
    if gamma.shape() != [features] || beta.shape() != [features] {
        return Err(Error::shape(format!(
            "batchnorm: {features} features but gamma {:?}, beta {:?}",
            gamma.shape(),
            beta.shape()
        )));
    }
    Ok(())
}

/// Normalizes each feature column by its batch mean and population variance.
pub fn batchnorm_train<T: Scalar>(
    batch: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let (rows, features) = batch.dims2()?;
    if rows < 2 {
        return Err(Error::shape(format!("batchnorm in train mode needs a batch of at least 2, got {rows}")));
    }
    check_affine(features, gamma, beta)?;
    let n = T::from_usize_lossy(rows);
    let mut mean = vec![T::zero(); features];
    for r in 0..rows {
        for (m, &x) in mean.iter_mut().zip(batch.row(r)) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![T::zero(); features];
    for r in 0..rows {
        for ((v, &x), &m) in var.iter_mut().zip(batch.row(r)).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();

    let mut x_hat = Tensor::zeros(&[rows, features]);
    let mut out = Tensor::zeros(&[rows, features]);
    for r in 0..rows {
        for f in 0..features {
            let xh = (batch.at2(r, f) - mean[f]) * inv_std[f];
            *x_hat.at2_mut(r, f) = xh;
            *out.at2_mut(r, f) = gamma.data()[f] * xh + beta.data()[f];
        }
    }
    Ok((
        out,
        BatchNormCache::Train {
            x_hat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
        },
    ))
}

/// Returns `(input_grad, gamma_grad, beta_grad)`.
pub fn batchnorm_train_backward<T: Scalar>(
    x_hat: &Tensor<T>,
    inv_std: &[T],
    gamma: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    x_hat.check_same_shape(upstream)?;
    let (rows, features) = x_hat.dims2()?;
    let n = T::from_usize_lossy(rows);
    let mut dgamma = vec![T::zero(); features];
    let mut dbeta = vec![T::zero(); features];
    for r in 0..rows {
        for f in 0..features {
            let g = upstream.at2(r, f);
            dbeta[f] += g;
            dgamma[f] += g * x_hat.at2(r, f);
        }
    }
    // dx = γ·inv_std/B · (B·g − Σg − x̂·Σ(g·x̂))
    let mut dx = Tensor::zeros(&[rows, features]);
    for r in 0..rows {
        for f in 0..features {
            let g = upstream.at2(r, f);
            let scale = gamma.data()[f] * inv_std[f] / n;
            *dx.at2_mut(r, f) = scale * (n * g - dbeta[f] - x_hat.at2(r, f) * dgamma[f]);
        }
    }
    Ok((dx, Tensor::vector(dgamma), Tensor::vector(dbeta)))
}

/// Normalizes with frozen running statistics.
pub fn batchnorm_eval<T: Scalar>(
    batch: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let (rows, features) = batch.dims2()?;
    check_affine(features, gamma, beta)?;
    check_affine(features, running_mean, running_var)?;
    let inv_std: Vec<T> = running_var.data().iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut x_hat = Tensor::zeros(&[rows, features]);
    let mut out = Tensor::zeros(&[rows, features]);
    for r in 0..rows {
        for f in 0..features {
            let xh = (batch.at2(r, f) - running_mean.data()[f]) * inv_std[f];
            *x_hat.at2_mut(r, f) = xh;
            *out.at2_mut(r, f) = gamma.data()[f] * xh + beta.data()[f];
        }
    }
    Ok((out, BatchNormCache::Eval { x_hat, inv_std }))
}

pub fn batchnorm_eval_backward<T: Scalar>(
    x_hat: &Tensor<T>,
    inv_std: &[T],
    gamma: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    x_hat.check_same_shape(upstream)?;
    let (rows, features) = x_hat.dims2()?;
    let mut dgamma = vec![T::zero(); features];
    let mut dbeta = vec![T::zero(); features];
    let mut dx = Tensor::zeros(&[rows, features]);
    for r in 0..rows {
        for f in 0..features {
            let g = upstream.at2(r, f);
            dbeta[f] += g;
            dgamma[f] += g * x_hat.at2(r, f);
            *dx.at2_mut(r, f) = g * gamma.data()[f] * inv_std[f];
        }
    }
    Ok((dx, Tensor::vector(dgamma), Tensor::vector(dbeta)))
}

/// Batch normalization layer with running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Parameter<T>,
    pub beta: Parameter<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub eps: T,
    pub momentum: T,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(features: usize) -> Self {
        BatchNorm {
            gamma: Parameter::new(Tensor::filled(&[features], T::one())),
            beta: Parameter::zeros(&[features]),
            running_mean: Tensor::zeros(&[features]),
            running_var: Tensor::filled(&[features], T::one()),
            eps: T::lit(1e-5),
            momentum: T::lit(0.9),
        }
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }

    /// In train mode the running statistics are updated as
    /// `running = momentum·running + (1 − momentum)·batch`.
    pub fn forward(&mut self, batch: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        match mode {
            Mode::Train => {
                let (out, cache) = batchnorm_train(batch, &self.gamma.value, &self.beta.value, self.eps)?;
                if let BatchNormCache::Train { batch_mean, batch_var, .. } = &cache {
                    let keep = self.momentum;
                    let take = T::one() - keep;
                    for (r, &m) in self.running_mean.data_mut().iter_mut().zip(batch_mean) {
                        *r = keep * *r + take * m;
                    }
                    for (r, &v) in self.running_var.data_mut().iter_mut().zip(batch_var) {
                        *r = keep * *r + take * v;
                    }
                }
                Ok((out, cache))
            }
            Mode::Eval => self.forward_eval(batch),
        }
    }

    pub fn forward_eval(&self, batch: &Tensor<T>) -> Result<(Tensor<T>, BatchNormCache<T>)> {
        batchnorm_eval(
            batch,
            &self.gamma.value,
            &self.beta.value,
            &self.running_mean,
            &self.running_var,
            self.eps,
        )
    }

    pub fn backward(&mut self, cache: &BatchNormCache<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let (dx, dgamma, dbeta) = match cache {
            BatchNormCache::Train { x_hat, inv_std, .. } => {
                batchnorm_train_backward(x_hat, inv_std, &self.gamma.value, upstream)?
            }
            BatchNormCache::Eval { x_hat, inv_std } => batchnorm_eval_backward(x_hat, inv_std, &self.gamma.value, upstream)?,
        };
        self.gamma.grad.add_assign(&dgamma)?;
        self.beta.grad.add_assign(&dbeta)?;
        Ok(dx)
    }
}
