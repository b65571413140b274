//! Sequential CNN built from a [`ModelConfig`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::mix_seed;
use crate::layers::{DEFAULT_DROPOUT_RATE, Layer, LayerSpec, Mode, softmax};
use crate::tensor::{Real, Tensor};

pub const INPUT_SIZE: usize = 224;
pub const INPUT_CHANNELS: usize = 3;
pub const DEFAULT_FILTERS: [usize; 4] = [16, 32, 64, 128];
pub const DEFAULT_HIDDEN_UNITS: usize = 128;
pub const NUM_CLASSES: usize = 2;

/// Layer sequence plus the input it expects. The last layer must be a softmax
/// fed by a dense layer with one unit per class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Per-sample input shape `[h, w, c]`.
    pub input: [usize; 3],
    pub classes: usize,
    pub layers: Vec<LayerSpec>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::tomato_leaf()
    }
}

impl ModelConfig {
    /// Four conv/ReLU/pool blocks (16, 32, 64, 128 filters), dropout after the
    /// second and third block and after the 128-unit hidden layer, then a
    /// two-way softmax. 224x224x3 input.
    pub fn tomato_leaf() -> Self {
        Self::conv_net(
            [INPUT_SIZE, INPUT_SIZE, INPUT_CHANNELS],
            &DEFAULT_FILTERS,
            DEFAULT_HIDDEN_UNITS,
            NUM_CLASSES,
            DEFAULT_DROPOUT_RATE,
        )
    }

    /// Same topology as [`ModelConfig::tomato_leaf`] with any number of conv
    /// blocks: dropout follows every block except the first and last, and the
    /// hidden dense layer.
    pub fn conv_net(input: [usize; 3], filters: &[usize], hidden: usize, classes: usize, rate: f64) -> Self {
        let mut layers = Vec::new();
        for (i, &f) in filters.iter().enumerate() {
            layers.extend([LayerSpec::conv(f), LayerSpec::Relu, LayerSpec::pool()]);
            if i > 0 && i + 1 < filters.len() {
                layers.push(LayerSpec::Dropout { rate });
            }
        }
        layers.extend([
            LayerSpec::Flatten,
            LayerSpec::Dense { units: hidden },
            LayerSpec::Relu,
            LayerSpec::Dropout { rate },
            LayerSpec::Dense { units: classes },
            LayerSpec::Softmax,
        ]);
        Self { input, classes, layers }
    }

    /// Per-sample output shape of every layer, in order. Fails if the sequence
    /// does not type-check.
    pub fn shape_trace(&self) -> Result<Vec<Vec<usize>>> {
        if self.classes < 2 {
            return Err(Error::Parameter(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.input.contains(&0) {
            return Err(Error::Parameter(format!("input shape {:?} has a zero extent", self.input)));
        }
        let n = self.layers.len();
        match self.layers.as_slice() {
            [.., LayerSpec::Dense { units }, LayerSpec::Softmax] if *units == self.classes => {}
            _ => {
                return Err(Error::Parameter(format!(
                    "layer sequence must end with dense({}) and softmax",
                    self.classes
                )));
            }
        }
        if self.layers[..n - 1].contains(&LayerSpec::Softmax) {
            return Err(Error::Parameter("softmax is only allowed as the last layer".into()));
        }
        let mut shape = self.input.to_vec();
        let mut trace = Vec::with_capacity(n);
        for (i, spec) in self.layers.iter().enumerate() {
            shape =
                spec.output_shape(&shape).map_err(|e| Error::Parameter(format!("layer {i} ({}): {e}", spec.name())))?;
            trace.push(shape.clone());
        }
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        self.shape_trace().map(|_| ())
    }

    /// Indices of the conv layers.
    pub fn conv_layers(&self) -> Vec<usize> {
        self.layers.iter().enumerate().filter(|(_, l)| matches!(l, LayerSpec::Conv2d { .. })).map(|(i, _)| i).collect()
    }
}

/// Sequential network. The trailing softmax is applied by [`Model::predict_proba`];
/// [`Model::forward`] and [`Model::backward`] work on logits so the loss can fuse
/// the softmax gradient.
#[derive(Clone, Debug)]
pub struct Model<T: Real = f32> {
    config: ModelConfig,
    layers: Vec<Layer<T>>,
}

impl<T: Real> Model<T> {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let trace = config.shape_trace()?;
        let mut input = config.input.to_vec();
        let mut layers = Vec::with_capacity(config.layers.len());
        for (i, spec) in config.layers.iter().enumerate() {
            layers.push(Layer::build(spec, &input, mix_seed(seed, &[i as u64]))?);
            input = trace[i].clone();
        }
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Mutable layer access; parameter shapes must not change.
    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn classes(&self) -> usize {
        self.config.classes
    }

    fn logit_layers(&self) -> usize {
        self.layers.len() - 1
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        match x.shape() {
            [_, h, w, c] if [*h, *w, *c] == self.config.input => Ok(()),
            s => Err(Error::Dimension(format!(
                "model expects [n, {}, {}, {}] input, got {s:?}",
                self.config.input[0], self.config.input[1], self.config.input[2]
            ))),
        }
    }

    /// Logits for a batch, caching activations for [`Model::backward`].
    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        Ok(self.forward_tapped(x, mode, None)?.0)
    }

    /// Like [`Model::forward`], also returning the output of layer `tap`.
    pub fn forward_tapped(
        &mut self,
        x: &Tensor<T>,
        mode: Mode,
        tap: Option<usize>,
    ) -> Result<(Tensor<T>, Option<Tensor<T>>)> {
        self.check_input(x)?;
        let end = self.logit_layers();
        let mut tapped = None;
        let mut h = x.clone();
        for (i, layer) in self.layers[..end].iter_mut().enumerate() {
            h = layer.forward(&h, mode)?;
            if tap == Some(i) {
                tapped = Some(h.clone());
            }
        }
        Ok((h, tapped))
    }

    /// Back-propagates a logit gradient through every layer; returns the input gradient.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<Tensor<T>> {
        self.backward_until(grad_logits, None)
    }

    /// Back-propagates through the layers after `stop` and returns the gradient
    /// w.r.t. the output of layer `stop`. `None` goes all the way to the input.
    pub fn backward_until(&mut self, grad_logits: &Tensor<T>, stop: Option<usize>) -> Result<Tensor<T>> {
        let end = self.logit_layers();
        let first = stop.map_or(0, |s| s + 1);
        if first > end {
            return Err(Error::Parameter(format!("layer {} is past the logits", first - 1)));
        }
        let mut g = grad_logits.clone();
        for layer in self.layers[first..end].iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Inference-mode logits without touching layer state.
    pub fn logits(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let end = self.logit_layers();
        let mut h = x.clone();
        for layer in &self.layers[..end] {
            h = layer.infer(&h)?;
        }
        Ok(h)
    }

    /// Inference-mode class probabilities `[n, classes]`.
    pub fn predict_proba(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        softmax(&self.logits(x)?)
    }

    pub fn clear_caches(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    /// `(parameter, gradient)` pairs in a fixed order.
    pub fn params_and_grads(&mut self) -> Vec<(&mut Tensor<T>, &Tensor<T>)> {
        self.layers.iter_mut().flat_map(Layer::params_and_grads).collect()
    }

    /// Parameters named `<layer index>.<kind>.<weight|bias>`, in the same order.
    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                let kind = l.spec().name();
                l.params().into_iter().map(move |(p, t)| (format!("{i:02}.{kind}.{p}"), t))
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn num_params(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model { config: self.config.clone(), layers: self.layers.iter().map(Layer::cast).collect() }
    }
}

/// Anything that maps an image batch `[n, h, w, c]` to class probabilities.
pub trait Classifier: Sync {
    fn input_shape(&self) -> [usize; 3];
    fn classes(&self) -> usize;
    fn predict_proba(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl Classifier for Model<f32> {
    fn input_shape(&self) -> [usize; 3] {
        self.config.input
    }

    fn classes(&self) -> usize {
        self.config.classes
    }

    fn predict_proba(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        Model::predict_proba(self, batch)
    }
}
