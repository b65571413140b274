//! Single-image inference shared by the CLI and the service.

use std::fs;
use std::path::Path;

use leafcnn::Tensor;
use leafcnn::checkpoint::{from_bytes, model_id};
use leafcnn::data::{Label, decode_image, resize_bilinear, rgb_to_tensor};
use leafcnn::model::Model;
use leafcnn::train::argmax;
use serde::{Deserialize, Serialize};

use crate::error::AppError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probabilities {
    #[serde(rename = "Healthy")]
    pub healthy: f64,
    #[serde(rename = "Diseased")]
    pub diseased: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionResponse {
    pub label: Label,
    pub probabilities: Probabilities,
    pub model_id: String,
}

/// A loaded checkpoint and its digest.
pub struct Predictor {
    model: Model<f32>,
    model_id: String,
}

impl Predictor {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let bytes = fs::read(path).map_err(|e| AppError::user(format!("cannot read model {}: {e}", path.display())))?;
        let (model, _) = from_bytes(&bytes).map_err(|e| AppError::user(format!("{}: {e}", path.display())))?;
        Self::new(model, model_id(&bytes))
    }

    pub fn new(model: Model<f32>, model_id: String) -> Result<Self, AppError> {
        if model.classes() != Label::ALL.len() {
            return Err(AppError::user(format!("expected a 2-class model, checkpoint has {}", model.classes())));
        }
        Ok(Self { model, model_id })
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Decodes image bytes into the model's `[h, w, 3]` input in `[0, 1]`.
    pub fn prepare(&self, bytes: &[u8], name: &Path) -> Result<Tensor<f32>, AppError> {
        let img = decode_image(bytes, name)?;
        let [h, w, _] = self.model.config().input;
        Ok(resize_bilinear(&rgb_to_tensor(&img, 1.0 / 255.0), h, w)?)
    }

    pub fn predict_tensor(&self, x: &Tensor<f32>) -> Result<PredictionResponse, AppError> {
        let [h, w, c] = self.model.config().input;
        let probs = self.model.predict_proba(&x.reshape([1, h, w, c])?)?;
        let row = probs.row(0);
        let label = Label::from_index(argmax(row)).expect("two-class model");
        Ok(PredictionResponse {
            label,
            probabilities: Probabilities { healthy: f64::from(row[0]), diseased: f64::from(row[1]) },
            model_id: self.model_id.clone(),
        })
    }

    pub fn predict_bytes(&self, bytes: &[u8], name: &Path) -> Result<PredictionResponse, AppError> {
        self.predict_tensor(&self.prepare(bytes, name)?)
    }
}
