use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

use super::param::{glorot_uniform, Parameter};
use super::Tensor;

/// Output length of a valid-padding 1-D convolution, or `None` if the input
/// is shorter than the kernel.
pub fn conv1d_output_len(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    (len >= kernel && stride > 0).then(|| (len - kernel) / stride + 1)
}

/// Valid-padding 1-D convolution.
///
/// `input` is `[L, Cin]`, `weights` is `[K, Cin, Cout]`, `bias` is `[Cout]`.
/// `out[t, o] = bias[o] + Σ_{k,c} input[t·stride + k, c] · weights[k, c, o]`.
pub fn conv1d<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    let (len, cin) = input.dims2()?;
    let (kernel, wcin, cout) = weights.dims3()?;
    if wcin != cin {
        return Err(Error::shape(format!("conv1d: input has {cin} channels, weights expect {wcin}")));
    }
    if bias.shape() != [cout] {
        return Err(Error::shape(format!("conv1d: bias shape {:?}, expected [{cout}]", bias.shape())));
    }
    let out_len = conv1d_output_len(len, kernel, stride).ok_or_else(|| {
        Error::shape(format!("conv1d: input length {len} is shorter than kernel length {kernel}"))
    })?;

    let x = input.data();
    let w = weights.data();
    let mut out = Vec::with_capacity(out_len * cout);
    for _ in 0..out_len {
        out.extend_from_slice(bias.data());
    }
    for t in 0..out_len {
        let out_row = &mut out[t * cout..(t + 1) * cout];
        for k in 0..kernel {
            let in_row = &x[(t * stride + k) * cin..(t * stride + k + 1) * cin];
            for (c, &xv) in in_row.iter().enumerate() {
                let w_row = &w[(k * cin + c) * cout..(k * cin + c + 1) * cout];
                for (o, &wv) in out_row.iter_mut().zip(w_row) {
                    *o += xv * wv;
                }
            }
        }
    }
    Tensor::from_vec(&[out_len, cout], out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv1dGrads<T> {
    pub input: Tensor<T>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

pub fn conv1d_backward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    upstream: &Tensor<T>,
    stride: usize,
) -> Result<Conv1dGrads<T>> {
    let (len, cin) = input.dims2()?;
    let (kernel, wcin, cout) = weights.dims3()?;
    let (up_len, up_c) = upstream.dims2()?;
    let out_len = conv1d_output_len(len, kernel, stride)
        .ok_or_else(|| Error::shape(format!("conv1d: input length {len} is shorter than kernel length {kernel}")))?;
    if wcin != cin || up_len != out_len || up_c != cout {
        return Err(Error::shape(format!(
            "conv1d backward: input {:?}, weights {:?}, upstream {:?} are inconsistent",
            input.shape(),
            weights.shape(),
            upstream.shape()
        )));
    }

    let x = input.data();
    let w = weights.data();
    let up = upstream.data();
    let mut dx = vec![T::zero(); len * cin];
    let mut dw = vec![T::zero(); kernel * cin * cout];
    let mut db = vec![T::zero(); cout];

    for t in 0..out_len {
        let up_row = &up[t * cout..(t + 1) * cout];
        for (b, &g) in db.iter_mut().zip(up_row) {
            *b += g;
        }
        for k in 0..kernel {
            let pos = t * stride + k;
            for c in 0..cin {
                let xv = x[pos * cin + c];
                let base = (k * cin + c) * cout;
                let mut acc = T::zero();
                for o in 0..cout {
                    dw[base + o] += xv * up_row[o];
                    acc += w[base + o] * up_row[o];
                }
                dx[pos * cin + c] += acc;
            }
        }
    }

    Ok(Conv1dGrads {
        input: Tensor::from_vec(&[len, cin], dx)?,
        weights: Tensor::from_vec(&[kernel, cin, cout], dw)?,
        bias: Tensor::from_vec(&[cout], db)?,
    })
}

/// Convolution layer owning its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T> {
    pub weights: Parameter<T>,
    pub bias: Parameter<T>,
    pub stride: usize,
}

impl<T: Scalar> Conv1d<T> {
    pub fn new(kernel: usize, in_channels: usize, out_channels: usize, stride: usize, rng: &mut Rng) -> Self {
        Conv1d {
            weights: glorot_uniform(
                &[kernel, in_channels, out_channels],
                kernel * in_channels,
                kernel * out_channels,
                rng,
            ),
            bias: Parameter::zeros(&[out_channels]),
            stride,
        }
    }

    pub fn kernel(&self) -> usize {
        self.weights.value.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.weights.value.shape()[2]
    }

    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        conv1d(input, &self.weights.value, &self.bias.value, self.stride)
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
        let grads = conv1d_backward(input, &self.weights.value, upstream, self.stride)?;
        self.weights.grad.add_assign(&grads.weights)?;
        self.bias.grad.add_assign(&grads.bias)?;
        Ok(grads.input)
    }
}
