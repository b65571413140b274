//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { alpha: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl OptimizerConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self { alpha, ..Self::default() }
    }

    /// Learning rate zero is allowed (frozen weights); negative rates are not.
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha >= 0.0
            && self.alpha.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok { Ok(()) } else { Err(Error::Parameter(format!("invalid optimizer settings {self:?}"))) }
    }
}

/// First/second moment estimates per parameter tensor plus the step count.
#[derive(Clone, Debug, Default)]
pub struct OptimizerState<T: Real = f32> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new() -> Self {
        Self { m: Vec::new(), v: Vec::new(), t: 0 }
    }
}

/// One Adam update over `(parameter, gradient)` pairs:
///
/// ```text
/// t <- t + 1
/// m <- b1 m + (1 - b1) g
/// v <- b2 v + (1 - b2) g^2
/// theta <- theta - alpha * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
/// ```
///
/// Moment tensors are created on the first call.
pub fn adam_step<T: Real>(
    params: &mut [(&mut Tensor<T>, &Tensor<T>)],
    state: &mut OptimizerState<T>,
    cfg: &OptimizerConfig,
) -> Result<()> {
    cfg.validate()?;
    if state.m.is_empty() && state.t == 0 {
        state.m = params.iter().map(|(p, _)| Tensor::zeros(p.shape())).collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() {
        return Err(Error::Dimension(format!("optimizer tracks {} tensors, got {}", state.m.len(), params.len())));
    }
    for (i, (p, g)) in params.iter().enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::Dimension(format!(
                "parameter {i}: value {:?}, gradient {:?}, moments {:?} disagree",
                p.shape(),
                g.shape(),
                state.m[i].shape()
            )));
        }
    }

    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
    let corr1 = T::of(1.0 - cfg.beta1.powi(t));
    let corr2 = T::of(1.0 - cfg.beta2.powi(t));
    let (alpha, eps) = (T::of(cfg.alpha), T::of(cfg.epsilon));

    for (i, (p, g)) in params.iter_mut().enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((theta, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *m = b1 * *m + one_b1 * g;
            *v = b2 * *v + one_b2 * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            let step = alpha * m_hat / (v_hat.sqrt() + eps);
            // a zero step leaves the bit pattern alone (including -0.0)
            if step != T::zero() {
                *theta = *theta - step;
            }
        }
    }
    Ok(())
}

/// Adam bound to a model's parameter list.
#[derive(Clone, Debug)]
pub struct Adam<T: Real = f32> {
    pub config: OptimizerConfig,
    pub state: OptimizerState<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, state: OptimizerState::new() })
    }

    /// Applies the gradients stored on the model by the last backward pass.
    pub fn step(&mut self, model: &mut Model<T>) -> Result<()> {
        let mut pairs = model.params_and_grads();
        adam_step(&mut pairs, &mut self.state, &self.config)
    }
}
