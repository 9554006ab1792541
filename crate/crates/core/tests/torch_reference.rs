//! Layer composition checked against values frozen from PyTorch (float64
//! autograd); `reference/torch_reference.py` regenerates them. Inputs are
//! closed-form, so only outputs are stored.

use scm_core::nn::{
    adam_step, batchnorm_train, batchnorm_train_backward, conv1d, conv1d_backward, dense, dense_backward, relu,
    relu_backward, softmax_cross_entropy, AdamConfig, BatchNormCache, Parameter,
};
use scm_core::pooling::{pool, pool_backward, PoolKind, PoolSpec};
use scm_core::Tensor64;

const LOSS: f64 = 1.0711911193651507;
const LOGITS: &[f64] = &[-0.5699581419400976, -1.0929404789384047, -1.6024544838860604, 0.5178585965684909, 0.3720560338685104, -0.051967492567122936, 0.08477964599858667, 0.8839623045610503, 1.3030004942453062];
const D_CONV_W: &[f64] = &[1.354123465882326, -1.3810958115560177, 0.3141270988161944, 0.0, 1.7745887510433862, -1.3546133555064521, -0.6658888371636191, 0.0, 1.9548717737228936, -1.1447903365676113, -1.5557798428590903, 0.0, 1.870572072547061, -0.7800253160285862, -2.235103345316751, 0.0, 1.533099216602266, -0.30968752822926726, -2.611916095329585, 0.0, 0.9881285737838992, 0.20256501370601088, -2.6352182548918615, 0.0, 0.3094193640245799, 0.6874013313116178, -2.3018559860222125, 0.0, -0.41116830510361835, 1.0792011034696212, -1.656948307939038, 0.0, -1.0761062730137527, 1.324936069034249, -0.7877804494722116, 0.0];
const D_CONV_B: &[f64] = &[-0.3874135847318705, 8.881784197001252e-16, -1.5283895526261921, 0.0];
const D_DENSE_W: &[f64] = &[0.0037060600101140873, -0.06516354769082688, 0.03563001007570632, -0.10157286163470536, 0.056822216421119176, -0.14553679838549782, 0.0, 0.0];
const D_GAMMA: &[f64] = &[-0.04261690731287598, 0.0239223997247834, 0.007270389149615614, 0.03602302700563837];
const D_BETA: &[f64] = &[-0.004142721212488258, 0.011043879180198467, 0.0089800879963104, -0.007110480536446605];
const D_HEAD_W: &[f64] = &[0.3075516998911816, -0.29986237801120685, -0.007689321879974648, -0.19257577940782555, 0.4538251408264889, -0.2612493614186634, -0.17089011748469296, 0.5287124909251746, -0.3578223734404816, -0.16182264505913063, 0.004492438602005145, 0.15733020645712548];
const D_X0: &[f64] = &[-0.05491084726084572, 0.014390258073999185, 0.032927851503359674, 1.3936840815804923, -2.446257019014987, 2.3432925170457164, -1.7338586776756375, -0.035380250086614294, 1.7879066234145802, -4.550727469850926, 4.072026268671374, -1.6698236646915257, 0.0039827895681947, 1.460429792729161, -2.234979744075851, 1.3479678846112821, -0.18124686694896014, -1.0710896600021214, 0.0, 0.0, 0.0];
const ADAM_W: &[f64] = &[0.19754102853922828, 0.8883025228231765, 0.9063887516298734, 0.23775901260334975, -0.6088704107753112];

fn wave(n: usize, a: f64, b: f64, scale: f64) -> Vec<f64> {
    (0..n).map(|i| scale * (a * i as f64 + b).sin()).collect()
}

fn t(shape: &[usize], data: Vec<f64>) -> Tensor64 {
    Tensor64::from_vec(shape, data).unwrap()
}

fn assert_close(name: &str, got: &[f64], want: &[f64]) {
    assert_eq!(got.len(), want.len(), "{name} length");
    for (i, (g, w)) in got.iter().zip(want).enumerate() {
        assert!((g - w).abs() <= 1e-10 * w.abs().max(1.0), "{name}[{i}]: {g} vs {w}");
    }
}

const B: usize = 3;
const LEN: usize = 7;
const CIN: usize = 3;
const K: usize = 3;
const COUT: usize = 4;
const DENSE: usize = 2;
const CLASSES: usize = 3;

#[test]
fn forward_and_backward_match_torch() {
    let xs: Vec<Tensor64> = (0..B).map(|e| t(&[LEN, CIN], wave(LEN * CIN, 0.37, 0.1 + e as f64, 1.0))).collect();
    let conv_w = t(&[K, CIN, COUT], wave(K * CIN * COUT, 0.61, 0.3, 0.5));
    let conv_b = t(&[COUT], wave(COUT, 1.3, 0.2, 0.1));
    let dense_w = t(&[COUT, DENSE], wave(COUT * DENSE, 0.83, 0.5, 0.7));
    let dense_b = t(&[DENSE], wave(DENSE, 0.9, 1.1, 0.1));
    let gamma = t(&[2 * DENSE], wave(2 * DENSE, 0.5, 0.0, 0.3).into_iter().map(|v| 1.0 + v).collect());
    let beta = t(&[2 * DENSE], wave(2 * DENSE, 0.7, 0.4, 0.2));
    let head_w = t(&[2 * DENSE, CLASSES], wave(2 * DENSE * CLASSES, 0.45, 0.8, 0.6));
    let head_b = t(&[CLASSES], wave(CLASSES, 1.7, 0.0, 0.1));
    let labels = [0, 2, 1];
    let spec = PoolSpec::new(PoolKind::Mma, 2).unwrap();

    struct Trace {
        conv: Tensor64,
        act: Tensor64,
        pooled: Tensor64,
        pre: Tensor64,
    }
    let mut traces = Vec::new();
    let mut flat = Vec::new();
    for x in &xs {
        let conv = conv1d(x, &conv_w, &conv_b, 1).unwrap();
        let act = relu(&conv);
        let pooled = pool(&act, &spec).unwrap();
        let pre = dense(&pooled, &dense_w, &dense_b).unwrap();
        flat.extend_from_slice(relu(&pre).data());
        traces.push(Trace { conv, act, pooled, pre });
    }
    let flat = t(&[B, 2 * DENSE], flat);
    let (normed, cache) = batchnorm_train(&flat, &gamma, &beta, 1e-5).unwrap();
    let logits = dense(&normed, &head_w, &head_b).unwrap();
    let (loss, d_logits) = softmax_cross_entropy(&logits, &labels).unwrap();
    assert!((loss - LOSS).abs() < 1e-12, "{loss} vs {LOSS}");
    assert_close("logits", logits.data(), LOGITS);

    let head = dense_backward(&normed, &head_w, &d_logits).unwrap();
    assert_close("d_head_w", head.weights.data(), D_HEAD_W);
    let BatchNormCache::Train { x_hat, inv_std, .. } = cache else { unreachable!() };
    let (d_flat, d_gamma, d_beta) = batchnorm_train_backward(&x_hat, &inv_std, &gamma, &head.input).unwrap();
    assert_close("d_gamma", d_gamma.data(), D_GAMMA);
    assert_close("d_beta", d_beta.data(), D_BETA);

    let mut d_conv_w = vec![0.0; K * CIN * COUT];
    let mut d_conv_b = vec![0.0; COUT];
    let mut d_dense_w = vec![0.0; COUT * DENSE];
    for (e, tr) in traces.iter().enumerate() {
        let up = t(&[2, DENSE], d_flat.row(e).to_vec());
        let up = relu_backward(&tr.pre, &up).unwrap();
        let dg = dense_backward(&tr.pooled, &dense_w, &up).unwrap();
        d_dense_w.iter_mut().zip(dg.weights.data()).for_each(|(a, b)| *a += b);
        let up = pool_backward(&tr.act, &spec, &dg.input).unwrap();
        let up = relu_backward(&tr.conv, &up).unwrap();
        let cg = conv1d_backward(&xs[e], &conv_w, &up, 1).unwrap();
        d_conv_w.iter_mut().zip(cg.weights.data()).for_each(|(a, b)| *a += b);
        d_conv_b.iter_mut().zip(cg.bias.data()).for_each(|(a, b)| *a += b);
        if e == 0 {
            assert_close("d_x0", cg.input.data(), D_X0);
        }
    }
    assert_close("d_dense_w", &d_dense_w, D_DENSE_W);
    assert_close("d_conv_w", &d_conv_w, D_CONV_W);
    assert_close("d_conv_b", &d_conv_b, D_CONV_B);
}

#[test]
fn adam_matches_torch() {
    let mut w = Parameter::new(t(&[5], wave(5, 0.9, 0.2, 1.0)));
    let config = AdamConfig::default();
    for step in 0..3 {
        let target = 0.25 * step as f64;
        let grad: Vec<f64> = w.value.data().iter().map(|v| 2.0 * (v - target)).collect();
        w.grad = t(&[5], grad);
        adam_step(&mut w, &config);
    }
    assert_close("adam", w.value.data(), ADAM_W);
}
