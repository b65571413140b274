use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::LayerSpec;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Glorot-uniform bound `r = sqrt(6 / (fan_in + fan_out))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitBound {
    pub fan_in: usize,
    pub fan_out: usize,
    pub r: f64,
}

impl InitBound {
    pub fn new(fan_in: usize, fan_out: usize) -> Result<Self> {
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::Parameter(format!(
                "glorot fans must be positive, got fan_in={fan_in} fan_out={fan_out}"
            )));
        }
        let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Ok(Self { fan_in, fan_out, r })
    }

    /// Fans for a layer spec given the per-sample input shape. Convolutions
    /// count `k * k * channels` on each side.
    pub fn for_spec(spec: &LayerSpec, input: &[usize]) -> Result<Self> {
        match (*spec, input) {
            (LayerSpec::Conv2d { filters, kernel }, &[_, _, c]) => {
                Self::new(kernel * kernel * c, kernel * kernel * filters)
            }
            (LayerSpec::Dense { units }, &[d]) => Self::new(d, units),
            _ => Err(Error::Parameter(format!("{} with input {input:?} has no weights to initialize", spec.name()))),
        }
    }
}

/// Tensor of `shape` drawn from `U[-r, r]`.
pub fn glorot_uniform<T: Real>(shape: impl Into<Vec<usize>>, bound: InitBound, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = bound.r;
    // rounding to T is monotone, so samples stay within the rounded bound
    Tensor::from_fn(shape, |_| T::of(rng.random_range(-r..=r)))
}

/// Weight tensor for a conv (`[k, k, c_in, filters]`) or dense (`[d, units]`) spec.
pub fn glorot_init<T: Real>(spec: &LayerSpec, input: &[usize], seed: u64) -> Result<Tensor<T>> {
    let bound = InitBound::for_spec(spec, input)?;
    let shape = match *spec {
        LayerSpec::Conv2d { filters, kernel } => vec![kernel, kernel, input[2], filters],
        LayerSpec::Dense { units } => vec![input[0], units],
        _ => unreachable!("for_spec rejects parameterless layers"),
    };
    Ok(glorot_uniform(shape, bound, seed))
}
