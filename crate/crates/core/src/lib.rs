//! Convolutional network training and inference for leaf-image classification.
//!
//! The crate covers the whole path from image folders to predictions: a dense
//! tensor type with im2col convolution, layers with hand-written backward
//! passes, Adam training with best-epoch checkpointing, evaluation metrics and
//! Grad-CAM heatmaps.
//!
//! ```no_run
//! use leafcnn::{data, model::{Model, ModelConfig}, optim::OptimizerConfig, train};
//!
//! let train_set = data::synthetic::quadrant_dataset(20, 224, 1);
//! let val_set = data::synthetic::quadrant_dataset(4, 224, 2);
//! let mut model = Model::<f32>::new(ModelConfig::tomato_leaf(), 42)?;
//! let cfg = train::TrainConfig { epochs: 5, ..Default::default() };
//! let out = train::fit(&mut model, &train_set, &val_set, &cfg, &OptimizerConfig::default(), None)?;
//! println!("{}", out.history.to_csv());
//! # Ok::<(), leafcnn::Error>(())
//! ```

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod exec;
pub mod gradcam;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{CheckpointError, Error, Result};
pub use exec::Execution;
pub use tensor::{Real, Shape4, Tensor};
