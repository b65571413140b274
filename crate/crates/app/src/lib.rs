//! Command-line workflow and prediction service for `leafcnn`.

pub mod cli;
pub mod config;
pub mod error;
pub mod predict;
pub mod service;

pub use config::{AppConfig, Overrides};
pub use error::AppError;
pub use predict::{PredictionResponse, Predictor};
