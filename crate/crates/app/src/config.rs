//! TOML configuration with command-line overrides.
//!
//! Precedence is flags, then the config file, then built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use leafcnn::data::AugmentSpec;
use leafcnn::loss::LossKind;
use leafcnn::model::ModelConfig;
use leafcnn::optim::OptimizerConfig;
use leafcnn::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::AppError;

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub data_root: Option<PathBuf>,
    pub model_path: PathBuf,
    pub port: u16,
    /// Crop training images to the union of their YOLO boxes.
    pub crop_boxes: bool,
    pub train: TrainConfig,
    pub optimizer: OptimizerConfig,
    pub augment: AugmentSpec,
    pub model: ModelConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            data_root: None,
            model_path: PathBuf::from("model.tldc"),
            port: DEFAULT_PORT,
            crop_boxes: false,
            train: TrainConfig::default(),
            optimizer: OptimizerConfig::default(),
            augment: AugmentSpec::default(),
            model: ModelConfig::tomato_leaf(),
        }
    }
}

/// Values given on the command line; `None` leaves the file/default value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub data_root: Option<PathBuf>,
    pub model_path: Option<PathBuf>,
    pub port: Option<u16>,
    pub crop_boxes: Option<bool>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub loss: Option<LossKind>,
    pub learning_rate: Option<f64>,
    pub augment: Option<bool>,
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, AppError> {
        toml::from_str(text).map_err(|e| AppError::user(format!("invalid config: {}", e.message())))
    }

    /// Reads `path`, or returns the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> Result<Self, AppError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| AppError::user(format!("cannot read config {}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| AppError::user(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        if let Some(v) = &o.data_root {
            self.data_root = Some(v.clone());
        }
        if let Some(v) = &o.model_path {
            self.model_path = v.clone();
        }
        self.port = o.port.unwrap_or(self.port);
        self.crop_boxes = o.crop_boxes.unwrap_or(self.crop_boxes);
        self.train.epochs = o.epochs.unwrap_or(self.train.epochs);
        self.train.batch_size = o.batch_size.unwrap_or(self.train.batch_size);
        self.train.seed = o.seed.unwrap_or(self.train.seed);
        self.train.loss = o.loss.unwrap_or(self.train.loss);
        self.train.augment = o.augment.unwrap_or(self.train.augment);
        self.optimizer.alpha = o.learning_rate.unwrap_or(self.optimizer.alpha);
        self
    }

    pub fn validate(&self) -> Result<(), AppError> {
        self.train.validate()?;
        self.optimizer.validate()?;
        self.augment.validate()?;
        self.model.validate()?;
        if self.model.input[0] != self.model.input[1] || self.model.input[2] != 3 {
            return Err(AppError::user(format!("model input {:?} must be square RGB", self.model.input)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_training_table() {
        let c = AppConfig::default();
        assert_eq!(c.train.epochs, 100);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.optimizer.alpha, 0.001);
        assert_eq!(c.train.loss, LossKind::CategoricalCrossEntropy);
        assert_eq!(c.model, ModelConfig::tomato_leaf());
        c.validate().unwrap();
    }

    #[test]
    fn empty_file_is_defaults() {
        assert_eq!(AppConfig::from_toml("").unwrap(), AppConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        for text in ["colour = 1", "[train]\nepoch = 3", "[optimizer]\nlr = 0.1", "[augment]\nblur = 1.0"] {
            assert!(AppConfig::from_toml(text).is_err(), "{text}");
        }
    }

    #[test]
    fn default_roundtrips_through_toml() {
        let text = toml::to_string(&AppConfig::default()).unwrap();
        assert_eq!(AppConfig::from_toml(&text).unwrap(), AppConfig::default());
    }

    /// Every combination of (file sets it, flag sets it) for each overridable field.
    #[test]
    fn precedence_matrix() {
        struct Case {
            file_line: &'static str,
            set_flag: fn(&mut Overrides),
            read: fn(&AppConfig) -> String,
            default: &'static str,
            file: &'static str,
            flag: &'static str,
        }
        let cases = [
            Case {
                file_line: "[train]\nepochs = 7",
                set_flag: |o| o.epochs = Some(3),
                read: |c| c.train.epochs.to_string(),
                default: "100",
                file: "7",
                flag: "3",
            },
            Case {
                file_line: "[train]\nbatch_size = 8",
                set_flag: |o| o.batch_size = Some(4),
                read: |c| c.train.batch_size.to_string(),
                default: "32",
                file: "8",
                flag: "4",
            },
            Case {
                file_line: "[train]\nseed = 5",
                set_flag: |o| o.seed = Some(6),
                read: |c| c.train.seed.to_string(),
                default: "42",
                file: "5",
                flag: "6",
            },
            Case {
                file_line: "[optimizer]\nalpha = 0.01",
                set_flag: |o| o.learning_rate = Some(0.5),
                read: |c| c.optimizer.alpha.to_string(),
                default: "0.001",
                file: "0.01",
                flag: "0.5",
            },
            Case {
                file_line: "port = 9000",
                set_flag: |o| o.port = Some(9100),
                read: |c| c.port.to_string(),
                default: "8080",
                file: "9000",
                flag: "9100",
            },
            Case {
                file_line: "model_path = \"file.tldc\"",
                set_flag: |o| o.model_path = Some("flag.tldc".into()),
                read: |c| c.model_path.display().to_string(),
                default: "model.tldc",
                file: "file.tldc",
                flag: "flag.tldc",
            },
            Case {
                file_line: "[train]\nloss = \"binary_ce\"",
                set_flag: |o| o.loss = Some(LossKind::CategoricalCrossEntropy),
                read: |c| format!("{:?}", c.train.loss),
                default: "CategoricalCrossEntropy",
                file: "BinaryCrossEntropy",
                flag: "CategoricalCrossEntropy",
            },
            Case {
                file_line: "crop_boxes = true",
                set_flag: |o| o.crop_boxes = Some(false),
                read: |c| c.crop_boxes.to_string(),
                default: "false",
                file: "true",
                flag: "false",
            },
        ];
        for case in &cases {
            for in_file in [false, true] {
                for in_flag in [false, true] {
                    let base =
                        if in_file { AppConfig::from_toml(case.file_line).unwrap() } else { AppConfig::default() };
                    let mut o = Overrides::default();
                    if in_flag {
                        (case.set_flag)(&mut o);
                    }
                    let got = (case.read)(&base.apply(&o));
                    let want = match (in_file, in_flag) {
                        (_, true) => case.flag,
                        (true, false) => case.file,
                        (false, false) => case.default,
                    };
                    assert_eq!(got, want, "{} file={in_file} flag={in_flag}", case.file_line);
                }
            }
        }
    }
}
