use crate::scalar::Scalar;

use super::param::Parameter;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update. The gradient is read, not cleared.
pub fn adam_step<T: Scalar>(param: &mut Parameter<T>, config: &AdamConfig) {
    param.step_count += 1;
    let t = param.step_count as i32;
    let b1 = T::lit(config.beta1);
    let b2 = T::lit(config.beta2);
    let lr = T::lit(config.learning_rate);
    let eps = T::lit(config.eps);
    let correction1 = T::one() - b1.powi(t);
    let correction2 = T::one() - b2.powi(t);

    let grads = param.grad.data();
    let m = param.adam_m.data_mut();
    for (m, &g) in m.iter_mut().zip(grads) {
        *m = b1 * *m + (T::one() - b1) * g;
    }
    let v = param.adam_v.data_mut();
    for (v, &g) in v.iter_mut().zip(grads) {
        *v = b2 * *v + (T::one() - b2) * g * g;
    }
    let m = param.adam_m.data();
    let v = param.adam_v.data();
    for ((w, &m), &v) in param.value.data_mut().iter_mut().zip(m).zip(v) {
        let m_hat = m / correction1;
        let v_hat = v / correction2;
        *w -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}
