//! Central-difference gradient checking, used by the test suites.

use crate::error::Result;
use crate::layers::{Layer, Mode, maxpool2d_forward};
use crate::loss::{LossKind, loss_from_logits};
use crate::model::Model;
use crate::tensor::Tensor;

/// `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps` for every coordinate `i`.
pub fn numeric_gradient(x: &Tensor<f64>, eps: f64, mut f: impl FnMut(&Tensor<f64>) -> f64) -> Tensor<f64> {
    let mut probe = x.clone();
    let mut g = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let up = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        g.data_mut()[i] = (up - down) / (2.0 * eps);
    }
    g
}

/// `|a - b| / (|a| + |b|)` with Euclidean norms; 0 when both are zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient lengths differ");
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()) + norm(&mut b.iter().copied());
    if scale == 0.0 { 0.0 } else { diff / scale }
}

/// Loss of `model` on `(x, labels)` in inference mode (dropout off).
pub fn model_loss(model: &Model<f64>, x: &Tensor<f64>, labels: &[usize], loss: LossKind) -> Result<f64> {
    Ok(loss_from_logits(loss, &model.logits(x)?, labels)?.0)
}

/// Analytic gradients w.r.t. the input and every parameter tensor, in
/// [`Model::named_params`] order.
pub fn model_gradients(
    model: &Model<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    loss: LossKind,
) -> Result<(Tensor<f64>, Vec<Tensor<f64>>)> {
    let mut m = model.clone();
    let logits = m.forward(x, Mode::Infer)?;
    let (_, grad, _) = loss_from_logits(loss, &logits, labels)?;
    let dx = m.backward(&grad)?;
    let grads = m.layers().iter().flat_map(|l| l.grads().into_iter().cloned()).collect();
    Ok((dx, grads))
}

/// Which side of every kink the forward pass is on: the sign of each ReLU
/// input and the winning position of each max-pool window.
pub fn kink_pattern(model: &Model<f64>, x: &Tensor<f64>) -> Result<Vec<usize>> {
    let mut pattern = Vec::new();
    let mut h = x.clone();
    for layer in model.layers() {
        match layer {
            Layer::Relu(_) => pattern.extend(h.data().iter().map(|&v| usize::from(v > 0.0))),
            Layer::MaxPool2d(p) => pattern.extend_from_slice(maxpool2d_forward(&h, p.kernel())?.1.winners()),
            _ => {}
        }
        h = layer.infer(&h)?;
    }
    Ok(pattern)
}

/// Outcome of [`check_model`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    /// Worst relative error over the input and each parameter tensor.
    pub worst: f64,
    /// Coordinates compared.
    pub checked: usize,
    /// Coordinates left out because `x +- eps` crossed a ReLU or max-pool kink,
    /// where the central difference does not estimate the derivative.
    pub skipped: usize,
}

/// Central differences for every coordinate of `x`, with a flag marking the
/// coordinates whose probes stayed on the same side of every kink.
fn masked_numeric_gradient(
    x: &Tensor<f64>,
    eps: f64,
    base: &[usize],
    mut f: impl FnMut(&Tensor<f64>) -> Result<(f64, Vec<usize>)>,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let mut probe = x.clone();
    let mut g = vec![0.0; x.len()];
    let mut smooth = vec![true; x.len()];
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let (up, pu) = f(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let (down, pd) = f(&probe)?;
        probe.data_mut()[i] = orig;
        g[i] = (up - down) / (2.0 * eps);
        smooth[i] = pu == base && pd == base;
    }
    Ok((g, smooth))
}

/// Compares analytic and central-difference gradients for the input and each
/// parameter tensor of `model`, skipping coordinates whose probes cross a kink.
pub fn check_model(
    model: &Model<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
    loss: LossKind,
    eps: f64,
) -> Result<GradCheck> {
    let (dx, grads) = model_gradients(model, x, labels, loss)?;
    let base = kink_pattern(model, x)?;
    let mut report = GradCheck { worst: 0.0, checked: 0, skipped: 0 };
    let mut record = |analytic: &[f64], (numeric, smooth): (Vec<f64>, Vec<bool>)| {
        let keep = |v: &[f64]| -> Vec<f64> { v.iter().zip(&smooth).filter(|(_, s)| **s).map(|(v, _)| *v).collect() };
        let kept = smooth.iter().filter(|s| **s).count();
        report.checked += kept;
        report.skipped += smooth.len() - kept;
        report.worst = report.worst.max(relative_error(&keep(analytic), &keep(&numeric)));
    };

    let nx = masked_numeric_gradient(x, eps, &base, |xp| {
        Ok((model_loss(model, xp, labels, loss)?, kink_pattern(model, xp)?))
    })?;
    record(dx.data(), nx);

    for (p, grad) in grads.iter().enumerate() {
        let mut probe = model.clone();
        let start = probe.params_mut()[p].clone();
        let np = masked_numeric_gradient(&start, eps, &base, |w| {
            *probe.params_mut()[p] = w.clone();
            Ok((model_loss(&probe, x, labels, loss)?, kink_pattern(&probe, x)?))
        })?;
        record(grad.data(), np);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_gradient_of_cubic() {
        let x = Tensor::new([3], vec![1.0, -2.0, 0.5]).unwrap();
        let g = numeric_gradient(&x, 1e-4, |t| t.data().iter().map(|v| v * v * v).sum());
        for (gi, xi) in g.data().iter().zip(x.data()) {
            assert!((gi - 3.0 * xi * xi).abs() < 1e-7);
        }
    }

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[1.0], &[1.0]), 0.0);
        assert_eq!(relative_error(&[1.0], &[-1.0]), 1.0);
    }
}
