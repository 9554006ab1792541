use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

use super::{Mode, Tensor};

/// Per-element multipliers applied in the forward pass: 0 for dropped
/// elements and `1/(1 − rate)` for survivors. `None` means identity.
pub type DropoutMask<T> = Option<Tensor<T>>;

/// Inverted dropout.
pub fn dropout<T: Scalar>(x: &Tensor<T>, rate: f64, mode: Mode, rng: &mut Rng) -> Result<(Tensor<T>, DropoutMask<T>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::config(format!("dropout rate must be in [0, 1), got {rate}")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::lit(1.0 / (1.0 - rate));
    let mask_data: Vec<T> = (0..x.len())
        .map(|_| if rng.next_f64() < rate { T::zero() } else { keep })
        .collect();
    let mask = Tensor::from_vec(x.shape(), mask_data)?;
    let out = Tensor::from_vec(
        x.shape(),
        x.data().iter().zip(mask.data()).map(|(&v, &m)| v * m).collect(),
    )?;
    Ok((out, Some(mask)))
}

pub fn dropout_backward<T: Scalar>(mask: &DropoutMask<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    match mask {
        None => Ok(upstream.clone()),
        Some(mask) => {
            mask.check_same_shape(upstream)?;
            Tensor::from_vec(
                upstream.shape(),
                upstream.data().iter().zip(mask.data()).map(|(&g, &m)| g * m).collect(),
            )
        }
    }
}
