use super::init::{InitBound, glorot_uniform};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::tensor::{MatRef, Real, Tensor, gemm_into, gemm_reduce_into};

/// Fully connected layer `x * w + b`.
#[derive(Clone, Debug)]
pub struct Dense<T: Real = f32> {
    /// `[d, units]`
    pub weight: Tensor<T>,
    /// `[units]`
    pub bias: Tensor<T>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
    pub(super) cache: Option<Tensor<T>>,
}

impl<T: Real> Dense<T> {
    pub fn new(inputs: usize, units: usize, seed: u64) -> Result<Self> {
        let bound = InitBound::new(inputs, units)?;
        Self::from_params(glorot_uniform([inputs, units], bound, seed), Tensor::zeros([units]))
    }

    pub fn from_params(weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        check_params(&weight, &bias)?;
        Ok(Self {
            grad_weight: Tensor::zeros(weight.shape()),
            grad_bias: Tensor::zeros(bias.shape()),
            weight,
            bias,
            cache: None,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn units(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = dense_forward(x, &self.weight, &self.bias)?;
        self.cache = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .cache
            .take()
            .ok_or_else(|| Error::State("dense backward called without a cached forward pass".into()))?;
        let (dx, dw, db) = dense_backward(&x, &self.weight, grad)?;
        self.grad_weight = dw;
        self.grad_bias = db;
        Ok(dx)
    }

    pub(super) fn cast<U: Real>(&self) -> Dense<U> {
        Dense::from_params(self.weight.cast(), self.bias.cast()).expect("shapes already validated")
    }
}

fn check_params<T: Real>(w: &Tensor<T>, b: &Tensor<T>) -> Result<(usize, usize)> {
    match *w.shape() {
        [d, u] if b.shape() == [u] => Ok((d, u)),
        _ => Err(Error::Dimension(format!("dense weight {:?} / bias {:?} must be [d, u] / [u]", w.shape(), b.shape()))),
    }
}

pub fn dense_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (d, u) = check_params(w, b)?;
    let n = match *x.shape() {
        [n, xd] if xd == d => n,
        _ => {
            return Err(Error::Dimension(format!("dense input {:?} does not match weight {:?}", x.shape(), w.shape())));
        }
    };
    let mut out = vec![T::zero(); n * u];
    for row in out.chunks_mut(u) {
        row.copy_from_slice(b.data());
    }
    gemm_into(
        MatRef::row_major(x.data(), n, d),
        MatRef::row_major(w.data(), d, u),
        &mut out,
        true,
        Execution::default(),
    );
    Tensor::new([n, u], out)
}

/// Returns `(dx, dw, db)`.
pub fn dense_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, d, u) = match (x.shape(), w.shape(), grad.shape()) {
        (&[n, d], &[d2, u], &[n2, u2]) if d == d2 && n == n2 && u == u2 => (n, d, u),
        _ => {
            return Err(Error::Dimension(format!(
                "dense backward: input {:?}, weight {:?}, upstream {:?} disagree",
                x.shape(),
                w.shape(),
                grad.shape()
            )));
        }
    };
    let g = MatRef::row_major(grad.data(), n, u);
    let mut dx = vec![T::zero(); n * d];
    gemm_into(g, MatRef::row_major(w.data(), d, u).t(), &mut dx, false, Execution::default());
    let mut dw = vec![T::zero(); d * u];
    gemm_reduce_into(MatRef::row_major(x.data(), n, d).t(), g, &mut dw, false, Execution::default());
    let mut db = vec![T::zero(); u];
    for row in grad.data().chunks(u) {
        db.iter_mut().zip(row).for_each(|(a, &b)| *a = *a + b);
    }
    Ok((Tensor::new([n, d], dx)?, Tensor::new([d, u], dw)?, Tensor::new([u], db)?))
}
