//! Cross-entropy losses. Losses are reduced to a mean over the batch and
//! accumulated in `f64`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{softmax, softmax_backward};
use crate::tensor::{Real, Tensor};

const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    #[serde(rename = "categorical_ce")]
    CategoricalCrossEntropy,
    #[serde(rename = "binary_ce")]
    BinaryCrossEntropy,
}

pub fn one_hot<T: Real>(labels: &[usize], classes: usize) -> Result<Tensor<T>> {
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Data(format!("label {bad} out of range for {classes} classes")));
    }
    let mut t = Tensor::zeros([labels.len().max(1), classes]);
    for (i, &l) in labels.iter().enumerate() {
        t.set(&[i, l], T::one());
    }
    Ok(t)
}

/// `-(1/N) sum ln p[true]` for probability rows `pred` and one-hot `target`.
///
/// The returned gradient is taken w.r.t. the logits that produced `pred`
/// through a softmax: `(pred - target) / N`.
pub fn categorical_cross_entropy<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    let (n, k) = match (pred.shape(), target.shape()) {
        (&[n, k], t) if t == [n, k] => (n, k),
        (p, t) => {
            return Err(Error::Dimension(format!("prediction {p:?} and target {t:?} disagree")));
        }
    };
    let mut loss = 0.0;
    for i in 0..n {
        let (p, y) = (pred.row(i), target.row(i));
        let ones = y.iter().filter(|&&v| v == T::one()).count();
        let zeros = y.iter().filter(|&&v| v == T::zero()).count();
        if ones != 1 || zeros != k - 1 {
            return Err(Error::Data(format!("target row {i} is not one-hot")));
        }
        let sum: f64 = p.iter().map(|v| v.as_f64()).sum();
        if !sum.is_finite() || (sum - 1.0).abs() > 1e-4 {
            return Err(Error::Numeric(format!("prediction row {i} sums to {sum}, not 1")));
        }
        let truth = y.iter().position(|&v| v == T::one()).expect("one-hot");
        loss -= p[truth].as_f64().max(PROB_FLOOR).ln();
    }
    let scale = T::of(1.0 / n as f64);
    let grad = pred.zip_map(target, |p, y| (p - y) * scale)?;
    Ok((loss / n as f64, grad))
}

/// `-(1/N) sum [y ln p + (1-y) ln(1-p)]` for `pred` of shape `[n, 1]`.
/// The gradient is w.r.t. `pred`.
pub fn binary_cross_entropy<T: Real>(pred: &Tensor<T>, target: &[u8]) -> Result<(f64, Tensor<T>)> {
    let n = match *pred.shape() {
        [n, 1] if n == target.len() => n,
        _ => {
            return Err(Error::Dimension(format!(
                "binary cross-entropy needs [n, 1] predictions for {} targets, got {:?}",
                target.len(),
                pred.shape()
            )));
        }
    };
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (i, (&p, &y)) in pred.data().iter().zip(target).enumerate() {
        if y > 1 {
            return Err(Error::Data(format!("binary target {i} is {y}, expected 0 or 1")));
        }
        let p = p.as_f64();
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Numeric(format!("prediction {i} = {p} is not a probability")));
        }
        let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        let y = f64::from(y);
        loss -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        grad.push(T::of(-(y / p - (1.0 - y) / (1.0 - p)) / n as f64));
    }
    Ok((loss / n as f64, Tensor::new([n, 1], grad)?))
}

/// Loss, logit gradient and probabilities for a batch of logits.
///
/// With [`LossKind::BinaryCrossEntropy`] the model must have two outputs; the
/// probability of class 1 is scored and its gradient is pulled back through the
/// softmax.
pub fn loss_from_logits<T: Real>(
    kind: LossKind,
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, Tensor<T>, Tensor<T>)> {
    let probs = softmax(logits)?;
    let k = probs.shape()[1];
    match kind {
        LossKind::CategoricalCrossEntropy => {
            let (loss, grad) = categorical_cross_entropy(&probs, &one_hot(labels, k)?)?;
            Ok((loss, grad, probs))
        }
        LossKind::BinaryCrossEntropy => {
            if k != 2 {
                return Err(Error::Parameter(format!("binary cross-entropy needs 2 outputs, model has {k}")));
            }
            let targets: Vec<u8> = labels
                .iter()
                .map(|&l| u8::try_from(l).ok().filter(|&l| l < 2))
                .collect::<Option<_>>()
                .ok_or_else(|| Error::Data("binary labels must be 0 or 1".into()))?;
            let n = labels.len();
            let positive = Tensor::new([n, 1], (0..n).map(|i| probs.get(&[i, 1])).collect())?;
            let (loss, dp) = binary_cross_entropy(&positive, &targets)?;
            let mut dprobs = Tensor::zeros([n, 2]);
            for i in 0..n {
                dprobs.set(&[i, 1], dp.data()[i]);
            }
            let grad = softmax_backward(&probs, &dprobs)?;
            Ok((loss, grad, probs))
        }
    }
}
