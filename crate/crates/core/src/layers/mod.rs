//! Layers with forward and backward passes.
//!
//! Every layer works on a batch whose leading axis is the sample index. Image
//! layers expect `[n, h, w, c]`; dense layers expect `[n, d]`. Shapes in
//! [`LayerSpec::output_shape`] are per sample, without the batch axis.

mod activation;
mod conv;
mod dense;
mod dropout;
mod init;
mod pool;

use serde::{Deserialize, Serialize};

pub use activation::{relu, relu_backward, softmax, softmax_backward};
pub use conv::{Conv2d, conv2d_backward, conv2d_forward, conv2d_forward_with};
pub use dense::{Dense, dense_backward, dense_forward};
pub use dropout::{Dropout, dropout};
pub use init::{InitBound, glorot_init, glorot_uniform};
pub use pool::{MaxPool2d, PoolMask, maxpool2d_backward, maxpool2d_forward};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const DEFAULT_DROPOUT_RATE: f64 = 0.2;
pub const KERNEL: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Declarative description of one layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        #[serde(default = "default_kernel")]
        kernel: usize,
    },
    #[serde(rename = "maxpool2d")]
    MaxPool2d {
        #[serde(default = "default_kernel")]
        kernel: usize,
    },
    Dropout {
        #[serde(default = "default_rate")]
        rate: f64,
    },
    Flatten,
    Dense {
        units: usize,
    },
    Relu,
    Softmax,
}

fn default_kernel() -> usize {
    KERNEL
}

fn default_rate() -> f64 {
    DEFAULT_DROPOUT_RATE
}

impl LayerSpec {
    pub fn conv(filters: usize) -> Self {
        LayerSpec::Conv2d { filters, kernel: KERNEL }
    }

    pub fn pool() -> Self {
        LayerSpec::MaxPool2d { kernel: KERNEL }
    }

    pub fn dropout() -> Self {
        LayerSpec::Dropout { rate: DEFAULT_DROPOUT_RATE }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::Softmax => "softmax",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv2d { .. } | LayerSpec::Dense { .. })
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let image = |what: &str| match *input {
            [h, w, c] => Ok((h, w, c)),
            _ => Err(Error::Dimension(format!("{what} expects [h, w, c] input, got {input:?}"))),
        };
        match *self {
            LayerSpec::Conv2d { filters, kernel } => {
                if kernel != KERNEL {
                    return Err(Error::Parameter(format!("conv kernel must be {KERNEL}x{KERNEL}, got {kernel}")));
                }
                if filters == 0 {
                    return Err(Error::Parameter("conv needs at least one filter".into()));
                }
                let (h, w, _) = image("conv2d")?;
                Ok(vec![h, w, filters])
            }
            LayerSpec::MaxPool2d { kernel } => {
                if kernel != KERNEL {
                    return Err(Error::Parameter(format!("pool kernel must be {KERNEL}x{KERNEL}, got {kernel}")));
                }
                let (h, w, c) = image("maxpool2d")?;
                if h < kernel || w < kernel {
                    return Err(Error::Dimension(format!("maxpool2d needs h, w >= {kernel}, got {h}x{w}")));
                }
                Ok(vec![h / kernel, w / kernel, c])
            }
            LayerSpec::Dropout { rate } => {
                check_rate(rate)?;
                Ok(input.to_vec())
            }
            LayerSpec::Relu => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { units } => match *input {
                [_] if units > 0 => Ok(vec![units]),
                [_] => Err(Error::Parameter("dense needs at least one unit".into())),
                _ => Err(Error::Dimension(format!("dense expects flat input, got {input:?}"))),
            },
            LayerSpec::Softmax => match *input {
                [k] if k >= 2 => Ok(vec![k]),
                _ => Err(Error::Dimension(format!("softmax expects [k >= 2] input, got {input:?}"))),
            },
        }
    }
}

pub(crate) fn check_rate(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Parameter(format!("dropout rate {rate} outside [0, 1)")))
    }
}

/// Parameterless reshape from `[n, ...]` to `[n, d]`.
#[derive(Clone, Debug, Default)]
pub struct Flatten {
    input_shape: Option<Vec<usize>>,
}

/// Elementwise `max(0, x)`; caches its input.
#[derive(Clone, Debug, Default)]
pub struct Relu<T: Real = f32> {
    cache: Option<Tensor<T>>,
}

/// Row-wise softmax; caches its output.
#[derive(Clone, Debug, Default)]
pub struct Softmax<T: Real = f32> {
    cache: Option<Tensor<T>>,
}

fn missing_cache(layer: &str) -> Error {
    Error::State(format!("{layer} backward called without a cached forward pass"))
}

/// A layer instance: spec plus parameters, gradients and forward caches.
#[derive(Clone, Debug)]
pub enum Layer<T: Real = f32> {
    Conv2d(Conv2d<T>),
    MaxPool2d(MaxPool2d),
    Dropout(Dropout<T>),
    Flatten(Flatten),
    Dense(Dense<T>),
    Relu(Relu<T>),
    Softmax(Softmax<T>),
}

impl<T: Real> Layer<T> {
    /// Builds a layer for per-sample `input` shape. Weights are Glorot-uniform
    /// from `seed`; dropout masks derive from `seed` as well.
    pub fn build(spec: &LayerSpec, input: &[usize], seed: u64) -> Result<Self> {
        spec.output_shape(input)?;
        Ok(match *spec {
            LayerSpec::Conv2d { filters, kernel } => Layer::Conv2d(Conv2d::new(kernel, input[2], filters, seed)?),
            LayerSpec::MaxPool2d { kernel } => Layer::MaxPool2d(MaxPool2d::new(kernel)),
            LayerSpec::Dropout { rate } => Layer::Dropout(Dropout::new(rate, seed)?),
            LayerSpec::Flatten => Layer::Flatten(Flatten::default()),
            LayerSpec::Dense { units } => Layer::Dense(Dense::new(input[0], units, seed)?),
            LayerSpec::Relu => Layer::Relu(Relu::default()),
            LayerSpec::Softmax => Layer::Softmax(Softmax::default()),
        })
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d(c) => LayerSpec::Conv2d { filters: c.out_channels(), kernel: c.kernel() },
            Layer::MaxPool2d(p) => LayerSpec::MaxPool2d { kernel: p.kernel() },
            Layer::Dropout(d) => LayerSpec::Dropout { rate: d.rate() },
            Layer::Flatten(_) => LayerSpec::Flatten,
            Layer::Dense(d) => LayerSpec::Dense { units: d.units() },
            Layer::Relu(_) => LayerSpec::Relu,
            Layer::Softmax(_) => LayerSpec::Softmax,
        }
    }

    /// Forward pass that records what backward needs.
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(c) => c.forward(x),
            Layer::MaxPool2d(p) => p.forward(x),
            Layer::Dropout(d) => d.forward(x, mode),
            Layer::Flatten(f) => {
                f.input_shape = Some(x.shape().to_vec());
                flatten(x)
            }
            Layer::Dense(d) => d.forward(x),
            Layer::Relu(r) => {
                r.cache = Some(x.clone());
                Ok(relu(x))
            }
            Layer::Softmax(s) => {
                let y = softmax(x)?;
                s.cache = Some(y.clone());
                Ok(y)
            }
        }
    }

    /// Inference-mode forward pass; leaves the layer untouched.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(c) => conv2d_forward(x, &c.weight, &c.bias),
            Layer::MaxPool2d(p) => Ok(maxpool2d_forward(x, p.kernel())?.0),
            Layer::Dropout(_) => Ok(x.clone()),
            Layer::Flatten(_) => flatten(x),
            Layer::Dense(d) => dense_forward(x, &d.weight, &d.bias),
            Layer::Relu(_) => Ok(relu(x)),
            Layer::Softmax(_) => softmax(x),
        }
    }

    /// Consumes the forward cache; returns the gradient w.r.t. the layer input
    /// and stores parameter gradients on the layer.
    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d(c) => c.backward(grad),
            Layer::MaxPool2d(p) => p.backward(grad),
            Layer::Dropout(d) => d.backward(grad),
            Layer::Flatten(f) => {
                let shape = f.input_shape.take().ok_or_else(|| missing_cache("flatten"))?;
                grad.reshape(shape)
            }
            Layer::Dense(d) => d.backward(grad),
            Layer::Relu(r) => {
                let x = r.cache.take().ok_or_else(|| missing_cache("relu"))?;
                relu_backward(&x, grad)
            }
            Layer::Softmax(s) => {
                let y = s.cache.take().ok_or_else(|| missing_cache("softmax"))?;
                softmax_backward(&y, grad)
            }
        }
    }

    pub fn clear_cache(&mut self) {
        match self {
            Layer::Conv2d(c) => c.cache = None,
            Layer::MaxPool2d(p) => p.cache = None,
            Layer::Dropout(d) => d.mask = None,
            Layer::Flatten(f) => f.input_shape = None,
            Layer::Dense(d) => d.cache = None,
            Layer::Relu(r) => r.cache = None,
            Layer::Softmax(s) => s.cache = None,
        }
    }

    /// Named parameter tensors in a fixed order (weight, then bias).
    pub fn params(&self) -> Vec<(&'static str, &Tensor<T>)> {
        match self {
            Layer::Conv2d(c) => vec![("weight", &c.weight), ("bias", &c.bias)],
            Layer::Dense(d) => vec![("weight", &d.weight), ("bias", &d.bias)],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::Dense(d) => vec![&mut d.weight, &mut d.bias],
            _ => Vec::new(),
        }
    }

    /// `(parameter, gradient)` pairs in [`Layer::params`] order.
    pub fn params_and_grads(&mut self) -> Vec<(&mut Tensor<T>, &Tensor<T>)> {
        match self {
            Layer::Conv2d(c) => vec![(&mut c.weight, &c.grad_weight), (&mut c.bias, &c.grad_bias)],
            Layer::Dense(d) => vec![(&mut d.weight, &d.grad_weight), (&mut d.bias, &d.grad_bias)],
            _ => Vec::new(),
        }
    }

    pub fn grads(&self) -> Vec<&Tensor<T>> {
        match self {
            Layer::Conv2d(c) => vec![&c.grad_weight, &c.grad_bias],
            Layer::Dense(d) => vec![&d.grad_weight, &d.grad_bias],
            _ => Vec::new(),
        }
    }

    /// Same layer with parameters converted to another precision; caches are dropped.
    pub fn cast<U: Real>(&self) -> Layer<U> {
        match self {
            Layer::Conv2d(c) => Layer::Conv2d(c.cast()),
            Layer::MaxPool2d(p) => Layer::MaxPool2d(MaxPool2d::new(p.kernel())),
            Layer::Dropout(d) => Layer::Dropout(d.cast()),
            Layer::Flatten(_) => Layer::Flatten(Flatten::default()),
            Layer::Dense(d) => Layer::Dense(d.cast()),
            Layer::Relu(_) => Layer::Relu(Relu::default()),
            Layer::Softmax(_) => Layer::Softmax(Softmax::default()),
        }
    }
}

fn flatten<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let n = x.shape()[0];
    x.reshape([n, x.len() / n])
}
