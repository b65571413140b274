use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub fn relu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the upstream gradient where the forward input was positive.
pub fn relu_backward<T: Real>(x: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    grad.zip_map(x, |g, v| if v > T::zero() { g } else { T::zero() })
}

/// Row-wise softmax over the last axis of a `[n, k]` tensor.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let k = match *logits.shape() {
        [_, k] if k >= 2 => k,
        _ => {
            return Err(Error::Dimension(format!("softmax expects [n, k >= 2] logits, got {:?}", logits.shape())));
        }
    };
    if !logits.all_finite() {
        return Err(Error::Numeric("softmax received non-finite logits".into()));
    }
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(k) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        row.iter_mut().for_each(|v| *v = *v / sum);
    }
    Ok(out)
}

/// Vector-Jacobian product of softmax given its output `y`:
/// `dz = y * (g - sum(g * y))` row by row.
pub fn softmax_backward<T: Real>(y: &Tensor<T>, grad: &Tensor<T>) -> Result<Tensor<T>> {
    if y.shape() != grad.shape() || y.rank() != 2 {
        return Err(Error::Dimension(format!(
            "softmax backward: output {:?} vs upstream {:?}",
            y.shape(),
            grad.shape()
        )));
    }
    let k = y.shape()[1];
    let mut dz = grad.clone();
    for (drow, yrow) in dz.data_mut().chunks_mut(k).zip(y.data().chunks(k)) {
        let dot: T = drow.iter().zip(yrow).map(|(&g, &p)| g * p).sum();
        drow.iter_mut().zip(yrow).for_each(|(g, &p)| *g = p * (*g - dot));
    }
    Ok(dz)
}
