//! Max, average, min and mean-max-average pooling over the time axis.
//!
//! For a region `P_k` of activations `c_1 … c_|P_k|` in one channel:
//!
//! * Max: `max c_i`
//! * Avg: `(1/|P_k|) Σ c_i`
//! * Min: `min c_i`
//! * MMA: `(max c_i + (1/|P_k|) Σ c_i) / 2`
//!
//! Windows that do not fit entirely inside the input are dropped.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolKind {
    Max,
    Avg,
    Min,
    Mma,
}

impl PoolKind {
    pub const ALL: [PoolKind; 4] = [PoolKind::Max, PoolKind::Avg, PoolKind::Min, PoolKind::Mma];

    pub fn id(self) -> &'static str {
        match self {
            PoolKind::Max => "max",
            PoolKind::Avg => "avg",
            PoolKind::Min => "min",
            PoolKind::Mma => "mma",
        }
    }
}

impl fmt::Display for PoolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for PoolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PoolKind::ALL
            .into_iter()
            .find(|k| k.id() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::config(format!("pooling must be one of max, avg, min, mma; got {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kind: PoolKind,
    pub size: usize,
    pub stride: usize,
}

impl PoolSpec {
    /// Non-overlapping windows of `size`.
    pub fn new(kind: PoolKind, size: usize) -> Result<Self> {
        Self::with_stride(kind, size, size)
    }

    pub fn with_stride(kind: PoolKind, size: usize, stride: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::config(format!("pool size must be at least 2, got {size}")));
        }
        if stride < 1 {
            return Err(Error::config("pool stride must be at least 1"));
        }
        Ok(PoolSpec { kind, size, stride })
    }

    pub fn output_len(&self, len: usize) -> Option<usize> {
        (len >= self.size).then(|| (len - self.size) / self.stride + 1)
    }
}

impl Default for PoolSpec {
    fn default() -> Self {
        PoolSpec {
            kind: PoolKind::Mma,
            size: 2,
            stride: 2,
        }
    }
}

fn dims<T: Scalar>(input: &Tensor<T>, spec: &PoolSpec) -> Result<(usize, usize, usize)> {
    let (len, channels) = input.dims2()?;
    let out = spec
        .output_len(len)
        .ok_or_else(|| Error::shape(format!("pooling: input length {len} is shorter than pool size {}", spec.size)))?;
    Ok((len, channels, out))
}

/// First index of the extremum in `window`, scanning in order.
fn arg_extreme<T: Scalar>(window: impl Iterator<Item = T>, better: impl Fn(T, T) -> bool) -> (usize, T) {
    let mut best = (0, T::nan());
    for (i, v) in window.enumerate() {
        if i == 0 || better(v, best.1) {
            best = (i, v);
        }
    }
    best
}

pub fn pool<T: Scalar>(input: &Tensor<T>, spec: &PoolSpec) -> Result<Tensor<T>> {
    let (_, channels, out_len) = dims(input, spec)?;
    let size = T::from_usize_lossy(spec.size);
    let mut out = Tensor::zeros(&[out_len, channels]);
    for k in 0..out_len {
        let start = k * spec.stride;
        for c in 0..channels {
            let window = (start..start + spec.size).map(|t| input.at2(t, c));
            let value = match spec.kind {
                PoolKind::Max => arg_extreme(window, |a, b| a > b).1,
                PoolKind::Min => arg_extreme(window, |a, b| a < b).1,
                PoolKind::Avg => window.sum::<T>() / size,
                PoolKind::Mma => {
                    let (max, sum) = window.fold((T::neg_infinity(), T::zero()), |(m, s), v| (m.max(v), s + v));
                    (max + sum / size) / T::lit(2.0)
                }
            };
            *out.at2_mut(k, c) = value;
        }
    }
    Ok(out)
}

/// Gradient of [`pool`] with respect to its input. Max and Min route to the
/// first extremal index of each window; overlapping windows accumulate.
pub fn pool_backward<T: Scalar>(input: &Tensor<T>, spec: &PoolSpec, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    let (len, channels, out_len) = dims(input, spec)?;
    if upstream.shape() != [out_len, channels] {
        return Err(Error::shape(format!(
            "pool backward: upstream {:?}, expected [{out_len}, {channels}]",
            upstream.shape()
        )));
    }
    let size = T::from_usize_lossy(spec.size);
    let half = T::lit(0.5);
    let mut grad = Tensor::zeros(&[len, channels]);
    for k in 0..out_len {
        let start = k * spec.stride;
        for c in 0..channels {
            let g = upstream.at2(k, c);
            let window = || (start..start + spec.size).map(|t| input.at2(t, c));
            match spec.kind {
                PoolKind::Max => {
                    let (i, _) = arg_extreme(window(), |a, b| a > b);
                    *grad.at2_mut(start + i, c) += g;
                }
                PoolKind::Min => {
                    let (i, _) = arg_extreme(window(), |a, b| a < b);
                    *grad.at2_mut(start + i, c) += g;
                }
                PoolKind::Avg => {
                    for t in start..start + spec.size {
                        *grad.at2_mut(t, c) += g / size;
                    }
                }
                PoolKind::Mma => {
                    let (i, _) = arg_extreme(window(), |a, b| a > b);
                    *grad.at2_mut(start + i, c) += half * g;
                    for t in start..start + spec.size {
                        *grad.at2_mut(t, c) += half * g / size;
                    }
                }
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(data: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(&[data.len(), 1], data).unwrap()
    }

    fn spec(kind: PoolKind) -> PoolSpec {
        PoolSpec::new(kind, 2).unwrap()
    }

    #[test]
    fn forward_on_one_region() {
        let x = col(&[1.0, 3.0]);
        let expect = [(PoolKind::Max, 3.0), (PoolKind::Avg, 2.0), (PoolKind::Min, 1.0), (PoolKind::Mma, 2.5)];
        for (kind, value) in expect {
            assert_eq!(pool(&x, &spec(kind)).unwrap().data(), &[value], "{kind}");
        }
        for kind in PoolKind::ALL {
            assert_eq!(pool(&col(&[5.0, 5.0]), &spec(kind)).unwrap().data(), &[5.0]);
        }
    }

    #[test]
    fn tail_dropped_and_short_input_rejected() {
        let out = pool(&col(&[1.0, 2.0, 3.0, 4.0, 5.0]), &spec(PoolKind::Max)).unwrap();
        assert_eq!(out.data(), &[2.0, 4.0]);
        assert!(pool(&col(&[1.0]), &spec(PoolKind::Avg)).is_err());
        assert!(PoolSpec::new(PoolKind::Max, 1).is_err());
    }

    #[test]
    fn backward_examples() {
        let x = col(&[1.0, 3.0]);
        let g = col(&[1.0]);
        assert_eq!(pool_backward(&x, &spec(PoolKind::Max), &g).unwrap().data(), &[0.0, 1.0]);
        assert_eq!(pool_backward(&x, &spec(PoolKind::Avg), &g).unwrap().data(), &[0.5, 0.5]);
        assert_eq!(pool_backward(&x, &spec(PoolKind::Mma), &g).unwrap().data(), &[0.25, 0.75]);
        assert_eq!(pool_backward(&x, &spec(PoolKind::Min), &g).unwrap().data(), &[1.0, 0.0]);
        let tie = col(&[3.0, 3.0]);
        assert_eq!(pool_backward(&tie, &spec(PoolKind::Max), &g).unwrap().data(), &[1.0, 0.0]);
        assert_eq!(pool_backward(&tie, &spec(PoolKind::Min), &g).unwrap().data(), &[1.0, 0.0]);
    }

    #[test]
    fn backward_tail_and_overlap() {
        let x = col(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let g = pool_backward(&x, &spec(PoolKind::Avg), &col(&[1.0, 1.0])).unwrap();
        assert_eq!(g.data(), &[0.5, 0.5, 0.5, 0.5, 0.0]);
        let overlap = PoolSpec::with_stride(PoolKind::Avg, 2, 1).unwrap();
        let g = pool_backward(&col(&[1.0, 2.0, 3.0]), &overlap, &col(&[1.0, 1.0])).unwrap();
        assert_eq!(g.data(), &[0.5, 1.0, 0.5]);
        assert!(pool_backward(&x, &spec(PoolKind::Avg), &col(&[1.0])).is_err());
    }

    #[test]
    fn f32_instantiation() {
        let x = Tensor::<f32>::from_f64(&[2, 1], &[1.0, 3.0]).unwrap();
        assert_eq!(pool(&x, &spec(PoolKind::Mma)).unwrap().data(), &[2.5f32]);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("MMA".parse::<PoolKind>().unwrap(), PoolKind::Mma);
        assert!("median".parse::<PoolKind>().is_err());
    }

    fn region_input() -> impl Strategy<Value = (Tensor<f64>, PoolSpec)> {
        (2usize..6, 1usize..4, 1usize..4, 0usize..4).prop_flat_map(|(size, stride, channels, extra)| {
            let len = size + extra;
            prop::collection::vec(-10.0f64..10.0, len * channels).prop_map(move |data| {
                (
                    Tensor::from_vec(&[len, channels], data).unwrap(),
                    PoolSpec::with_stride(PoolKind::Max, size, stride).unwrap(),
                )
            })
        })
    }

    proptest! {
        #[test]
        fn sandwich_and_identity((x, s) in region_input()) {
            let at = |kind| pool(&x, &PoolSpec { kind, ..s }).unwrap();
            let (max, avg, min, mma) = (at(PoolKind::Max), at(PoolKind::Avg), at(PoolKind::Min), at(PoolKind::Mma));
            for i in 0..max.len() {
                let (mx, av, mn, mm) = (max.data()[i], avg.data()[i], min.data()[i], mma.data()[i]);
                prop_assert!((mm - (mx + av) / 2.0).abs() <= 1e-12);
                prop_assert!(mn <= av && av <= mm && mm <= mx);
            }
        }

        #[test]
        fn gradient_mass_equals_upstream((x, s) in region_input(), g in -5.0f64..5.0) {
            let non_overlapping = PoolSpec { stride: s.size, ..s };
            let out_len = non_overlapping.output_len(x.shape()[0]).unwrap();
            let up = Tensor::filled(&[out_len, x.shape()[1]], g);
            for kind in PoolKind::ALL {
                let spec = PoolSpec { kind, ..non_overlapping };
                let grad = pool_backward(&x, &spec, &up).unwrap();
                for k in 0..out_len {
                    for c in 0..x.shape()[1] {
                        let mass: f64 = (k * spec.size..(k + 1) * spec.size).map(|t| grad.at2(t, c)).sum();
                        prop_assert!((mass - g).abs() < 1e-12);
                    }
                }
            }
        }

        #[test]
        fn permutation_invariant_within_region(mut values in prop::collection::vec(-10.0f64..10.0, 4), seed in any::<u64>()) {
            let original = col(&values);
            crate::rng::Rng::new(seed).shuffle(&mut values);
            let permuted = col(&values);
            for kind in PoolKind::ALL {
                let spec = PoolSpec::new(kind, 4).unwrap();
                let a = pool(&original, &spec).unwrap().data()[0];
                let b = pool(&permuted, &spec).unwrap().data()[0];
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
