use crate::error::{Error, Result};
use crate::tensor::{Real, Shape4, Tensor};

/// For every pooled output element, the flat input index of the window maximum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolMask {
    input_shape: Vec<usize>,
    winners: Vec<usize>,
}

impl PoolMask {
    pub fn winners(&self) -> &[usize] {
        &self.winners
    }
}

/// Max pooling over disjoint `k x k` windows (stride `k`); trailing rows and
/// columns that do not fill a window are dropped.
#[derive(Clone, Debug)]
pub struct MaxPool2d {
    kernel: usize,
    pub(super) cache: Option<PoolMask>,
}

impl MaxPool2d {
    pub fn new(kernel: usize) -> Self {
        Self { kernel, cache: None }
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn forward<T: Real>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, mask) = maxpool2d_forward(x, self.kernel)?;
        self.cache = Some(mask);
        Ok(y)
    }

    pub fn backward<T: Real>(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let mask = self
            .cache
            .take()
            .ok_or_else(|| Error::State("maxpool2d backward called without a cached forward pass".into()))?;
        maxpool2d_backward(&mask, grad)
    }
}

pub fn maxpool2d_forward<T: Real>(x: &Tensor<T>, kernel: usize) -> Result<(Tensor<T>, PoolMask)> {
    let s = Shape4::of(x)?;
    if kernel == 0 || s.h < kernel || s.w < kernel {
        return Err(Error::Dimension(format!(
            "maxpool2d with a {kernel}x{kernel} window needs h, w >= {kernel}, got {:?}",
            x.shape()
        )));
    }
    let (oh, ow) = (s.h / kernel, s.w / kernel);
    let mut out = Vec::with_capacity(s.n * oh * ow * s.c);
    let mut winners = Vec::with_capacity(out.capacity());
    let data = x.data();
    for n in 0..s.n {
        for i in 0..oh {
            for j in 0..ow {
                for c in 0..s.c {
                    let mut best = usize::MAX;
                    for di in 0..kernel {
                        for dj in 0..kernel {
                            let idx = ((n * s.h + i * kernel + di) * s.w + j * kernel + dj) * s.c + c;
                            // first maximum in scan order wins ties
                            if best == usize::MAX || data[idx] > data[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(data[best]);
                    winners.push(best);
                }
            }
        }
    }
    Ok((Tensor::new([s.n, oh, ow, s.c], out)?, PoolMask { input_shape: x.shape().to_vec(), winners }))
}

/// Routes each upstream gradient element to its window's winning input position.
pub fn maxpool2d_backward<T: Real>(mask: &PoolMask, grad: &Tensor<T>) -> Result<Tensor<T>> {
    if grad.len() != mask.winners.len() {
        return Err(Error::Dimension(format!(
            "maxpool2d backward: upstream {:?} does not match {} pooled outputs",
            grad.shape(),
            mask.winners.len()
        )));
    }
    let mut dx = Tensor::zeros(mask.input_shape.clone());
    let d = dx.data_mut();
    for (&w, &g) in mask.winners.iter().zip(grad.data()) {
        d[w] = d[w] + g;
    }
    Ok(dx)
}
