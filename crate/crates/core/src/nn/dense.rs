use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

use super::param::{glorot_uniform, Parameter};
use super::Tensor;

fn rows_of<T: Scalar>(input: &Tensor<T>) -> Result<(usize, usize)> {
    match input.shape() {
        [n] => Ok((1, *n)),
        [r, n] => Ok((*r, *n)),
        s => Err(Error::shape(format!("dense: expected [N] or [R, N] input, got {s:?}"))),
    }
}

/// Fully connected map `out = Wᵀ·x + b`, applied to each row of a rank-2
/// input. `weights` is `[N, M]`.
pub fn dense<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (rows, n) = rows_of(input)?;
    let (wn, m) = weights.dims2()?;
    if wn != n || bias.shape() != [m] {
        return Err(Error::shape(format!(
            "dense: input {:?}, weights {:?}, bias {:?} are inconsistent",
            input.shape(),
            weights.shape(),
            bias.shape()
        )));
    }
    let x = input.data();
    let w = weights.data();
    let mut out = Vec::with_capacity(rows * m);
    for r in 0..rows {
        out.extend_from_slice(bias.data());
        let out_row = &mut out[r * m..(r + 1) * m];
        for (i, &xv) in x[r * n..(r + 1) * n].iter().enumerate() {
            for (o, &wv) in out_row.iter_mut().zip(&w[i * m..(i + 1) * m]) {
                *o += xv * wv;
            }
        }
    }
    let shape: Vec<usize> = if input.rank() == 1 { vec![m] } else { vec![rows, m] };
    Tensor::from_vec(&shape, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn dense_backward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, upstream: &Tensor<T>) -> Result<DenseGrads<T>> {
    let (rows, n) = rows_of(input)?;
    let (wn, m) = weights.dims2()?;
    let (up_rows, up_m) = rows_of(upstream)?;
    if wn != n || up_rows != rows || up_m != m {
        return Err(Error::shape(format!(
            "dense backward: input {:?}, weights {:?}, upstream {:?} are inconsistent",
            input.shape(),
            weights.shape(),
            upstream.shape()
        )));
    }
    let x = input.data();
    let w = weights.data();
    let up = upstream.data();
    let mut dx = vec![T::zero(); rows * n];
    let mut dw = vec![T::zero(); n * m];
    let mut db = vec![T::zero(); m];
    for r in 0..rows {
        let up_row = &up[r * m..(r + 1) * m];
        for (b, &g) in db.iter_mut().zip(up_row) {
            *b += g;
        }
        for i in 0..n {
            let xv = x[r * n + i];
            let mut acc = T::zero();
            for o in 0..m {
                dw[i * m + o] += xv * up_row[o];
                acc += w[i * m + o] * up_row[o];
            }
            dx[r * n + i] = acc;
        }
    }
    Ok(DenseGrads {
        input: Tensor::from_vec(input.shape(), dx)?,
        weights: Tensor::from_vec(&[n, m], dw)?,
        bias: Tensor::from_vec(&[m], db)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weights: Parameter<T>,
    pub bias: Parameter<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        Dense {
            weights: glorot_uniform(&[inputs, outputs], inputs, outputs, rng),
            bias: Parameter::zeros(&[outputs]),
        }
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        dense(input, &self.weights.value, &self.bias.value)
    }

    pub fn backward(&mut self, input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let grads = dense_backward(input, &self.weights.value, upstream)?;
        self.weights.grad.add_assign(&grads.weights)?;
        self.bias.grad.add_assign(&grads.bias)?;
        Ok(grads.input)
    }
}
