//! Central finite-difference verification of analytic gradients.
//!
//! A check target exposes a scalar objective over a flat parameter vector and
//! its analytic gradient. Layer probes build the objective `Σ u ⊙ f(x)` for a
//! fixed random upstream `u`, so the analytic side is exactly the layer's
//! backward pass applied to `u`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pooling::{pool, pool_backward, PoolKind, PoolSpec};
use crate::rng::Rng;

use super::{
    batchnorm_train, batchnorm_train_backward, conv1d, conv1d_backward, dense, dense_backward, softmax_cross_entropy,
    BatchNormCache, Tensor,
};

pub const DEFAULT_EPS: f64 = 1e-6;

pub trait GradCheckTarget {
    fn point(&self) -> Vec<f64>;
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// `|a − n| / max(|a|, |n|, 1e-12)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

pub fn numeric_gradient(f: impl Fn(&[f64]) -> Result<f64>, x: &[f64], eps: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = f(&probe)?;
        probe[i] = orig - eps;
        let minus = f(&probe)?;
        probe[i] = orig;
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

pub fn compare(analytic: &[f64], numeric: &[f64]) -> GradCheckReport {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths differ");
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let err = relative_error(a, n);
        if err > report.max_relative_error || i == 0 {
            report = GradCheckReport {
                max_relative_error: err,
                worst_index: i,
                analytic: a,
                numeric: n,
            };
        }
    }
    report
}

/// Compares the target's analytic gradient against central differences at its
/// own point.
pub fn grad_check(target: &dyn GradCheckTarget, eps: f64) -> Result<GradCheckReport> {
    let x = target.point();
    let analytic = target.gradient(&x)?;
    let numeric = numeric_gradient(|p| target.value(p), &x, eps)?;
    Ok(compare(&analytic, &numeric))
}

fn random_vec(n: usize, lo: f64, hi: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.uniform(lo, hi)).collect()
}

fn split_at_lens<'a>(x: &'a [f64], lens: &[usize]) -> Vec<&'a [f64]> {
    let mut out = Vec::with_capacity(lens.len());
    let mut start = 0;
    for &n in lens {
        out.push(&x[start..start + n]);
        start += n;
    }
    out
}

/// `Σ u ⊙ conv1d(x; W, b)` over input, weights and bias.
pub struct ConvProbe {
    pub input_shape: [usize; 2],
    pub weight_shape: [usize; 3],
    pub stride: usize,
    pub upstream: Tensor<f64>,
    pub point: Vec<f64>,
}

impl ConvProbe {
    pub fn random(rng: &mut Rng) -> Self {
        let kernel = 1 + rng.below(4);
        let len = kernel + rng.below(8);
        let cin = 1 + rng.below(4);
        let cout = 1 + rng.below(4);
        let stride = 1 + rng.below(2);
        let out_len = (len - kernel) / stride + 1;
        let n = len * cin + kernel * cin * cout + cout;
        ConvProbe {
            input_shape: [len, cin],
            weight_shape: [kernel, cin, cout],
            stride,
            upstream: Tensor::from_vec(&[out_len, cout], random_vec(out_len * cout, -1.0, 1.0, rng)).unwrap(),
            point: random_vec(n, -1.0, 1.0, rng),
        }
    }

    fn unpack(&self, x: &[f64]) -> Result<(Tensor<f64>, Tensor<f64>, Tensor<f64>)> {
        let [l, c] = self.input_shape;
        let [k, ci, co] = self.weight_shape;
        let parts = split_at_lens(x, &[l * c, k * ci * co, co]);
        Ok((
            Tensor::from_vec(&[l, c], parts[0].to_vec())?,
            Tensor::from_vec(&[k, ci, co], parts[1].to_vec())?,
            Tensor::from_vec(&[co], parts[2].to_vec())?,
        ))
    }
}

impl GradCheckTarget for ConvProbe {
    fn point(&self) -> Vec<f64> {
        self.point.clone()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let (input, w, b) = self.unpack(x)?;
        conv1d(&input, &w, &b, self.stride)?.dot(&self.upstream)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (input, w, _) = self.unpack(x)?;
        let g = conv1d_backward(&input, &w, &self.upstream, self.stride)?;
        Ok([g.input.data(), g.weights.data(), g.bias.data()].concat())
    }
}

/// `Σ u ⊙ dense(x; W, b)` over a batch of rows.
pub struct DenseProbe {
    pub rows: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub upstream: Tensor<f64>,
    pub point: Vec<f64>,
}

impl DenseProbe {
    pub fn random(rng: &mut Rng) -> Self {
        let rows = 1 + rng.below(4);
        let inputs = 1 + rng.below(6);
        let outputs = 1 + rng.below(6);
        DenseProbe {
            rows,
            inputs,
            outputs,
            upstream: Tensor::from_vec(&[rows, outputs], random_vec(rows * outputs, -1.0, 1.0, rng)).unwrap(),
            point: random_vec(rows * inputs + inputs * outputs + outputs, -1.0, 1.0, rng),
        }
    }

    fn unpack(&self, x: &[f64]) -> Result<(Tensor<f64>, Tensor<f64>, Tensor<f64>)> {
        let (r, n, m) = (self.rows, self.inputs, self.outputs);
        let parts = split_at_lens(x, &[r * n, n * m, m]);
        Ok((
            Tensor::from_vec(&[r, n], parts[0].to_vec())?,
            Tensor::from_vec(&[n, m], parts[1].to_vec())?,
            Tensor::from_vec(&[m], parts[2].to_vec())?,
        ))
    }
}

impl GradCheckTarget for DenseProbe {
    fn point(&self) -> Vec<f64> {
        self.point.clone()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let (input, w, b) = self.unpack(x)?;
        dense(&input, &w, &b)?.dot(&self.upstream)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (input, w, _) = self.unpack(x)?;
        let g = dense_backward(&input, &w, &self.upstream)?;
        Ok([g.input.data(), g.weights.data(), g.bias.data()].concat())
    }
}

/// `Σ u ⊙ batchnorm_train(x; γ, β)` over batch, gamma and beta.
pub struct BatchNormProbe {
    pub rows: usize,
    pub features: usize,
    pub eps: f64,
    pub upstream: Tensor<f64>,
    pub point: Vec<f64>,
}

impl BatchNormProbe {
    pub fn random(rng: &mut Rng) -> Self {
        let rows = 2 + rng.below(6);
        let features = 1 + rng.below(5);
        let mut point = random_vec(rows * features, -2.0, 2.0, rng);
        point.extend(random_vec(features, 0.5, 1.5, rng));
        point.extend(random_vec(features, -0.5, 0.5, rng));
        BatchNormProbe {
            rows,
            features,
            eps: 1e-5,
            upstream: Tensor::from_vec(&[rows, features], random_vec(rows * features, -1.0, 1.0, rng)).unwrap(),
            point,
        }
    }

    fn unpack(&self, x: &[f64]) -> Result<(Tensor<f64>, Tensor<f64>, Tensor<f64>)> {
        let (b, f) = (self.rows, self.features);
        let parts = split_at_lens(x, &[b * f, f, f]);
        Ok((
            Tensor::from_vec(&[b, f], parts[0].to_vec())?,
            Tensor::from_vec(&[f], parts[1].to_vec())?,
            Tensor::from_vec(&[f], parts[2].to_vec())?,
        ))
    }
}

impl GradCheckTarget for BatchNormProbe {
    fn point(&self) -> Vec<f64> {
        self.point.clone()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let (batch, gamma, beta) = self.unpack(x)?;
        batchnorm_train(&batch, &gamma, &beta, self.eps)?.0.dot(&self.upstream)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (batch, gamma, beta) = self.unpack(x)?;
        let (_, cache) = batchnorm_train(&batch, &gamma, &beta, self.eps)?;
        let BatchNormCache::Train { x_hat, inv_std, .. } = cache else {
            unreachable!("train forward returns a train cache")
        };
        let (dx, dg, db) = batchnorm_train_backward(&x_hat, &inv_std, &gamma, &self.upstream)?;
        Ok([dx.data(), dg.data(), db.data()].concat())
    }
}

/// Mean softmax cross-entropy as a function of the logits.
pub struct SoftmaxCrossEntropyProbe {
    pub rows: usize,
    pub classes: usize,
    pub labels: Vec<usize>,
    pub point: Vec<f64>,
}

impl SoftmaxCrossEntropyProbe {
    pub fn random(rng: &mut Rng) -> Self {
        let rows = 1 + rng.below(5);
        let classes = 2 + rng.below(4);
        SoftmaxCrossEntropyProbe {
            rows,
            classes,
            labels: (0..rows).map(|_| rng.below(classes)).collect(),
            point: random_vec(rows * classes, -3.0, 3.0, rng),
        }
    }
}

impl GradCheckTarget for SoftmaxCrossEntropyProbe {
    fn point(&self) -> Vec<f64> {
        self.point.clone()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let logits = Tensor::from_vec(&[self.rows, self.classes], x.to_vec())?;
        Ok(softmax_cross_entropy(&logits, &self.labels)?.0)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let logits = Tensor::from_vec(&[self.rows, self.classes], x.to_vec())?;
        Ok(softmax_cross_entropy(&logits, &self.labels)?.1.into_data())
    }
}

/// `Σ u ⊙ pool(x)` at a tie-free point: every value in the input is distinct
/// and separated from the others by at least 0.01.
pub struct PoolProbe {
    pub spec: PoolSpec,
    pub shape: [usize; 2],
    pub upstream: Tensor<f64>,
    pub point: Vec<f64>,
}

impl PoolProbe {
    pub fn random(kind: PoolKind, rng: &mut Rng) -> Self {
        let size = 2 + rng.below(3);
        let stride = 1 + rng.below(size);
        let len = size + rng.below(10);
        let channels = 1 + rng.below(4);
        let spec = PoolSpec::with_stride(kind, size, stride).expect("valid pool spec");
        let out_len = spec.output_len(len).expect("len >= size");
        let n = len * channels;
        let point = rng
            .permutation(n)
            .into_iter()
            .map(|rank| (rank as f64 - n as f64 / 2.0) * 0.1 + rng.uniform(-0.04, 0.04))
            .collect();
        PoolProbe {
            spec,
            shape: [len, channels],
            upstream: Tensor::from_vec(&[out_len, channels], random_vec(out_len * channels, -1.0, 1.0, rng)).unwrap(),
            point,
        }
    }
}

impl GradCheckTarget for PoolProbe {
    fn point(&self) -> Vec<f64> {
        self.point.clone()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let input = Tensor::from_vec(&self.shape, x.to_vec())?;
        pool(&input, &self.spec)?.dot(&self.upstream)
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let input = Tensor::from_vec(&self.shape, x.to_vec())?;
        Ok(pool_backward(&input, &self.spec, &self.upstream)?.into_data())
    }
}

/// Worst relative error of one layer family over `points` random probes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCheck {
    pub layer: String,
    pub points: usize,
    pub max_relative_error: f64,
}

/// Smallest non-zero analytic gradient entry a suite point may have. Below
/// this the central difference is dominated by rounding (absolute error
/// ~1e-10), so relative error stops measuring the gradient. Exact zeros, such
/// as unselected max-pool inputs, are reproduced exactly and are kept.
pub const MIN_GRADIENT: f64 = 1e-3;

const MAX_DRAWS: usize = 10_000;

fn draw_conditioned(
    make: &dyn Fn(&mut Rng) -> Box<dyn GradCheckTarget>,
    rng: &mut Rng,
    layer: &str,
) -> Result<Box<dyn GradCheckTarget>> {
    for _ in 0..MAX_DRAWS {
        let target = make(rng);
        let grad = target.gradient(&target.point())?;
        if grad.iter().all(|&g| g == 0.0 || g.abs() >= MIN_GRADIENT) {
            return Ok(target);
        }
    }
    Err(Error::data(format!("{layer}: no well-conditioned point in {MAX_DRAWS} draws")))
}

/// Runs every layer probe family at `points` random points each. Points with
/// a near-zero analytic gradient entry are redrawn.
pub fn layer_suite(seed: u64, points: usize, eps: f64) -> Result<Vec<LayerCheck>> {
    type Factory = Box<dyn Fn(&mut Rng) -> Box<dyn GradCheckTarget>>;
    let mut families: Vec<(String, Factory)> = vec![
        ("conv1d".into(), Box::new(|r| Box::new(ConvProbe::random(r)))),
        ("dense".into(), Box::new(|r| Box::new(DenseProbe::random(r)))),
        ("batchnorm".into(), Box::new(|r| Box::new(BatchNormProbe::random(r)))),
        (
            "softmax_cross_entropy".into(),
            Box::new(|r| Box::new(SoftmaxCrossEntropyProbe::random(r))),
        ),
    ];
    for kind in PoolKind::ALL {
        families.push((format!("pool_{kind}"), Box::new(move |r| Box::new(PoolProbe::random(kind, r)))));
    }
    let mut out = Vec::new();
    for (i, (layer, make)) in families.into_iter().enumerate() {
        let mut rng = Rng::derive(seed, i as u64);
        let mut worst: f64 = 0.0;
        for _ in 0..points {
            let target = draw_conditioned(&make, &mut rng, &layer)?;
            worst = worst.max(grad_check(target.as_ref(), eps)?.max_relative_error);
        }
        out.push(LayerCheck {
            layer,
            points,
            max_relative_error: worst,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense probe whose analytic gradient is scaled by a constant.
    struct Corrupted(DenseProbe, f64);

    impl GradCheckTarget for Corrupted {
        fn point(&self) -> Vec<f64> {
            self.0.point()
        }
        fn value(&self, x: &[f64]) -> Result<f64> {
            self.0.value(x)
        }
        fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(self.0.gradient(x)?.into_iter().map(|g| g * self.1).collect())
        }
    }

    #[test]
    fn relative_error_formula() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(1.01, 1.0) - 0.01 / 1.01).abs() < 1e-15);
        assert_eq!(relative_error(0.0, 0.0), 0.0);
    }

    #[test]
    fn suite_points_are_conditioned() {
        let mut rng = Rng::new(3);
        let make = |r: &mut Rng| -> Box<dyn GradCheckTarget> { Box::new(PoolProbe::random(PoolKind::Avg, r)) };
        for _ in 0..20 {
            let t = draw_conditioned(&make, &mut rng, "pool_avg").unwrap();
            assert!(t.gradient(&t.point()).unwrap().iter().all(|&g| g == 0.0 || g.abs() >= MIN_GRADIENT));
        }
    }

    #[test]
    fn suite_passes_on_several_seeds() {
        for seed in 0..3 {
            for check in layer_suite(seed, 20, DEFAULT_EPS).unwrap() {
                assert!(check.max_relative_error < 1e-5, "{check:?}");
            }
        }
    }

    #[test]
    fn dense_passes() {
        let mut rng = Rng::new(17);
        let probe = DenseProbe::random(&mut rng);
        assert!(grad_check(&probe, DEFAULT_EPS).unwrap().max_relative_error < 1e-6);
    }

    #[test]
    fn corrupted_gradient_detected() {
        let mut rng = Rng::new(17);
        let probe = Corrupted(DenseProbe::random(&mut rng), 1.01);
        assert!(grad_check(&probe, DEFAULT_EPS).unwrap().max_relative_error > 1e-3);
    }

    #[test]
    fn conv_passes() {
        let mut rng = Rng::new(5);
        for _ in 0..10 {
            let probe = ConvProbe::random(&mut rng);
            assert!(grad_check(&probe, DEFAULT_EPS).unwrap().max_relative_error < 1e-5);
        }
    }

    #[test]
    fn softmax_ce_relative_1e6() {
        let mut rng = Rng::new(8);
        for _ in 0..10 {
            let probe = SoftmaxCrossEntropyProbe::random(&mut rng);
            let report = grad_check(&probe, DEFAULT_EPS).unwrap();
            assert!(report.max_relative_error < 1e-6, "{report:?}");
        }
    }

    #[test]
    fn mma_pool_on_one_region_matches_hand_algebra() {
        let probe = PoolProbe {
            spec: PoolSpec::new(PoolKind::Mma, 2).unwrap(),
            shape: [2, 1],
            upstream: Tensor::from_f64(&[1, 1], &[1.0]).unwrap(),
            point: vec![1.0, 3.0],
        };
        let numeric = numeric_gradient(|p| probe.value(p), &probe.point, DEFAULT_EPS).unwrap();
        assert!((numeric[0] - 0.25).abs() < 1e-9 && (numeric[1] - 0.75).abs() < 1e-9, "{numeric:?}");
        assert_eq!(probe.gradient(&probe.point).unwrap(), vec![0.25, 0.75]);
    }
}
