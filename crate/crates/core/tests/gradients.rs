//! Analytic backward passes against central finite differences in f64.

use leafcnn::Tensor;
use leafcnn::gradcheck::{check_model, numeric_gradient, relative_error};
use leafcnn::layers::{
    Dropout, Layer, LayerSpec, Mode, conv2d_backward, conv2d_forward, dense_backward, dense_forward,
    maxpool2d_backward, maxpool2d_forward, relu, relu_backward, softmax, softmax_backward,
};
use leafcnn::loss::{LossKind, loss_from_logits};
use leafcnn::model::{Model, ModelConfig};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-3;
const TOL: f64 = 1e-4;

fn rand_t(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// `sum(r * y)`: a random linear read-out, so `r` is the upstream gradient.
fn project(y: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
}

fn cases() -> ProptestConfig {
    ProptestConfig { cases: 64, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cases())]

    #[test]
    fn conv2d(n in 1usize..3, h in 1usize..6, w in 1usize..6, cin in 1usize..4, cout in 1usize..4, k in 1usize..4, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_t(&[n, h, w, cin], &mut rng);
        let wt = rand_t(&[k, k, cin, cout], &mut rng);
        let b = rand_t(&[cout], &mut rng);
        let r = rand_t(&[n, h, w, cout], &mut rng);
        let (dx, dw, db) = conv2d_backward(&x, &wt, &r).unwrap();

        let nx = numeric_gradient(&x, EPS, |xp| project(&conv2d_forward(xp, &wt, &b).unwrap(), &r));
        let nw = numeric_gradient(&wt, EPS, |wp| project(&conv2d_forward(&x, wp, &b).unwrap(), &r));
        let nb = numeric_gradient(&b, EPS, |bp| project(&conv2d_forward(&x, &wt, bp).unwrap(), &r));
        prop_assert!(relative_error(dx.data(), nx.data()) < TOL);
        prop_assert!(relative_error(dw.data(), nw.data()) < TOL);
        prop_assert!(relative_error(db.data(), nb.data()) < TOL);
    }

    #[test]
    fn dense(n in 1usize..5, d in 1usize..12, u in 1usize..8, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_t(&[n, d], &mut rng);
        let wt = rand_t(&[d, u], &mut rng);
        let b = rand_t(&[u], &mut rng);
        let r = rand_t(&[n, u], &mut rng);
        let (dx, dw, db) = dense_backward(&x, &wt, &r).unwrap();

        let nx = numeric_gradient(&x, EPS, |xp| project(&dense_forward(xp, &wt, &b).unwrap(), &r));
        let nw = numeric_gradient(&wt, EPS, |wp| project(&dense_forward(&x, wp, &b).unwrap(), &r));
        let nb = numeric_gradient(&b, EPS, |bp| project(&dense_forward(&x, &wt, bp).unwrap(), &r));
        prop_assert!(relative_error(dx.data(), nx.data()) < TOL);
        prop_assert!(relative_error(dw.data(), nw.data()) < TOL);
        prop_assert!(relative_error(db.data(), nb.data()) < TOL);
    }

    #[test]
    fn relu_layer(n in 1usize..4, d in 1usize..20, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // keep every input at least 10 eps from the kink
        let x = Tensor::from_fn([n, d], |_| {
            let v: f64 = rng.random_range(0.01..1.0);
            if rng.random() { v } else { -v }
        });
        let r = rand_t(&[n, d], &mut rng);
        let dx = relu_backward(&x, &r).unwrap();
        let nx = numeric_gradient(&x, EPS, |xp| project(&relu(xp), &r));
        prop_assert!(relative_error(dx.data(), nx.data()) < TOL);
    }

    #[test]
    fn maxpool(n in 1usize..3, oh in 1usize..4, ow in 1usize..4, extra_h in 0usize..2, extra_w in 0usize..2, c in 1usize..4, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = [n, 2 * oh + extra_h, 2 * ow + extra_w, c];
        let len: usize = shape.iter().product();
        // distinct values 0.01 apart, so no window has a tie within eps
        let mut ranks: Vec<usize> = (0..len).collect();
        ranks.shuffle(&mut rng);
        let x = Tensor::new(shape, ranks.iter().map(|&v| v as f64 * 0.01 - 0.5).collect()).unwrap();
        let (y, mask) = maxpool2d_forward(&x, 2).unwrap();
        let r = rand_t(y.shape(), &mut rng);
        let dx = maxpool2d_backward(&mask, &r).unwrap();
        let nx = numeric_gradient(&x, EPS, |xp| project(&maxpool2d_forward(xp, 2).unwrap().0, &r));
        prop_assert!(relative_error(dx.data(), nx.data()) < TOL);
    }

    #[test]
    fn dropout_train(n in 1usize..4, d in 1usize..30, rate in 0.0f64..0.9, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_t(&[n, d], &mut rng);
        let r = rand_t(&[n, d], &mut rng);
        let mut layer = Dropout::<f64>::new(rate, seed).unwrap();
        layer.forward(&x, Mode::Train).unwrap();
        let dx = layer.backward(&r).unwrap();
        // a fresh layer replays the first mask
        let nx = numeric_gradient(&x, EPS, |xp| {
            project(&Dropout::new(rate, seed).unwrap().forward(xp, Mode::Train).unwrap(), &r)
        });
        prop_assert!(relative_error(dx.data(), nx.data()) < TOL);
    }

    #[test]
    fn softmax_layer(n in 1usize..4, k in 2usize..6, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_t(&[n, k], &mut rng).map(|v| 3.0 * v);
        let r = rand_t(&[n, k], &mut rng);
        let dx = softmax_backward(&softmax(&x).unwrap(), &r).unwrap();
        let nx = numeric_gradient(&x, EPS, |xp| project(&softmax(xp).unwrap(), &r));
        prop_assert!(relative_error(dx.data(), nx.data()) < TOL);
    }

    #[test]
    fn flatten(n in 1usize..3, h in 1usize..4, w in 1usize..4, c in 1usize..4, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rand_t(&[n, h, w, c], &mut rng);
        let r = rand_t(&[n, h * w * c], &mut rng);
        let mut layer = Layer::<f64>::build(&LayerSpec::Flatten, &[h, w, c], 0).unwrap();
        layer.forward(&x, Mode::Train).unwrap();
        let dx = layer.backward(&r).unwrap();
        prop_assert_eq!(dx.shape(), x.shape());
        let nx = numeric_gradient(&x, EPS, |xp| project(&layer.infer(xp).unwrap(), &r));
        prop_assert!(relative_error(dx.data(), nx.data()) < TOL);
    }

    #[test]
    fn losses_from_logits(n in 1usize..6, seed: u64, binary: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kind = if binary { LossKind::BinaryCrossEntropy } else { LossKind::CategoricalCrossEntropy };
        let logits = rand_t(&[n, 2], &mut rng).map(|v| 2.0 * v);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let (_, grad, _) = loss_from_logits(kind, &logits, &labels).unwrap();
        let num = numeric_gradient(&logits, EPS, |z| loss_from_logits(kind, z, &labels).unwrap().0);
        prop_assert!(relative_error(grad.data(), num.data()) < TOL);
    }
}

/// Whole-network check on a 4x8x8x3 batch. Four 2x2 pools cannot fit 8x8, so
/// this uses the same block structure with three conv blocks. Probes that
/// cross a ReLU or max-pool kink are left out; the rest must agree.
#[test]
fn end_to_end_small_network() {
    let config = ModelConfig::conv_net([8, 8, 3], &[4, 6, 8], 10, 2, 0.2);
    for seed in 0..6 {
        let loss = if seed % 2 == 0 { LossKind::CategoricalCrossEntropy } else { LossKind::BinaryCrossEntropy };
        let model = Model::<f64>::new(config.clone(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_fn([4, 8, 8, 3], |_| rng.random_range(0.0..1.0));
        let report = check_model(&model, &x, &[0, 1, 1, 0], loss, EPS).unwrap();
        assert!(report.worst < 1e-3, "seed {seed} {loss:?}: {report:?}");
        assert!(report.skipped * 5 < report.checked, "seed {seed}: too many kinks {report:?}");
    }
}
