use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Mode, check_rate};
use crate::error::{Error, Result};
use crate::exec::mix_seed;
use crate::tensor::{Real, Tensor};

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` at train time so
/// inference is the identity.
#[derive(Clone, Debug)]
pub struct Dropout<T: Real = f32> {
    rate: f64,
    seed: u64,
    /// Number of training-mode forward passes so far; each draws a fresh mask.
    batches: u64,
    pub(super) mask: Option<Vec<T>>,
}

impl<T: Real> Dropout<T> {
    pub fn new(rate: f64, seed: u64) -> Result<Self> {
        check_rate(rate)?;
        Ok(Self { rate, seed, batches: 0, mask: None })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match mode {
            Mode::Infer => {
                self.mask = None;
                Ok(x.clone())
            }
            Mode::Train => {
                let mask = keep_mask(x.len(), self.rate, mix_seed(self.seed, &[self.batches]));
                self.batches += 1;
                let y = apply(x, &mask);
                self.mask = Some(mask);
                Ok(y)
            }
        }
    }

    /// Multiplies by the last training mask; after an inference pass the gradient passes through.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        match self.mask.take() {
            Some(mask) if mask.len() == grad.len() => Ok(apply(grad, &mask)),
            Some(_) => Err(Error::Dimension(format!(
                "dropout backward: upstream {:?} does not match the cached mask",
                grad.shape()
            ))),
            None => Ok(grad.clone()),
        }
    }

    pub(super) fn cast<U: Real>(&self) -> Dropout<U> {
        Dropout { rate: self.rate, seed: self.seed, batches: self.batches, mask: None }
    }
}

fn keep_mask<T: Real>(len: usize, rate: f64, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = T::of(1.0 / (1.0 - rate));
    (0..len).map(|_| if rng.random::<f64>() < rate { T::zero() } else { scale }).collect()
}

fn apply<T: Real>(x: &Tensor<T>, mask: &[T]) -> Tensor<T> {
    let mut y = x.clone();
    y.data_mut().iter_mut().zip(mask).for_each(|(v, &m)| *v = *v * m);
    y
}

/// Stateless dropout; the mask is a pure function of `seed`.
pub fn dropout<T: Real>(x: &Tensor<T>, rate: f64, mode: Mode, seed: u64) -> Result<Tensor<T>> {
    check_rate(rate)?;
    match mode {
        Mode::Infer => Ok(x.clone()),
        Mode::Train if rate == 0.0 => Ok(x.clone()),
        Mode::Train => Ok(apply(x, &keep_mask(x.len(), rate, seed))),
    }
}
