//! The epoch loop.

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{CheckpointMeta, save_checkpoint};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::exec::{Execution, mix_seed};
use crate::layers::Mode;
use crate::loss::{LossKind, loss_from_logits};
use crate::model::Model;
use crate::optim::{Adam, OptimizerConfig};

pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub seed: u64,
    /// Best-so-far checkpoint, rewritten whenever validation loss improves.
    pub checkpoint_path: Option<PathBuf>,
    /// Apply training augmentation (when the dataset has it configured).
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            loss: LossKind::default(),
            seed: 42,
            checkpoint_path: None,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Parameter(format!(
                "epochs ({}) and batch size ({}) must be at least 1",
                self.epochs, self.batch_size
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainingHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for r in &self.records {
            writeln!(out, "{},{},{},{},{}", r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc)
                .expect("writing to a String");
        }
        out
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.records.iter().fold(None, |best: Option<&EpochRecord>, r| match best {
            Some(b) if b.val_loss <= r.val_loss => Some(b),
            _ => Some(r),
        })
    }
}

pub struct FitOutcome {
    pub history: TrainingHistory,
    /// Epoch (1-based) whose weights were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_model: Model<f32>,
}

/// Mean loss and accuracy of `model` over `data` in inference mode.
pub fn evaluate_loss(model: &Model<f32>, data: &dyn Dataset, loss: LossKind, batch_size: usize) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::Data("cannot evaluate an empty dataset".into()));
    }
    let order: Vec<usize> = (0..data.len()).collect();
    let (mut total, mut correct) = (0.0, 0usize);
    for chunk in order.chunks(batch_size.max(1)) {
        let x = data.batch(chunk, None, Execution::default())?;
        let labels: Vec<usize> = chunk.iter().map(|&i| data.label(i).index()).collect();
        let logits = model.logits(&x)?;
        let (l, _, probs) = loss_from_logits(loss, &logits, &labels)?;
        total += l * chunk.len() as f64;
        correct += count_correct(probs.data(), probs.shape()[1], &labels);
    }
    let n = data.len() as f64;
    Ok((total / n, correct as f64 / n))
}

/// Predictions use the highest index among tied maxima.
pub fn argmax(row: &[f32]) -> usize {
    row.iter().enumerate().fold((0, f32::NEG_INFINITY), |(bi, bv), (i, &v)| if v >= bv { (i, v) } else { (bi, bv) }).0
}

fn count_correct(probs: &[f32], k: usize, labels: &[usize]) -> usize {
    probs.chunks(k).zip(labels).filter(|&(row, &y)| argmax(row) == y).count()
}

/// Trains `model` with Adam, checking validation loss after every epoch.
///
/// The model keeps the final weights; the best epoch's weights are returned
/// in the outcome and written to `cfg.checkpoint_path` if one is set.
/// `on_epoch` sees every record as it is produced.
pub fn fit(
    model: &mut Model<f32>,
    train: &dyn Dataset,
    val: &dyn Dataset,
    cfg: &TrainConfig,
    opt: &OptimizerConfig,
    mut on_epoch: Option<&mut dyn FnMut(&EpochRecord)>,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Data(format!("training needs non-empty splits (train {}, val {})", train.len(), val.len())));
    }
    let mut adam = Adam::new(*opt)?;
    let mut history = TrainingHistory::default();
    let mut best: Option<(usize, f64, Model<f32>)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.epochs {
        let epoch_seed = mix_seed(cfg.seed, &[epoch as u64]);
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        let augment_seed = cfg.augment.then_some(epoch_seed);

        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let x = train.batch(chunk, augment_seed, Execution::default())?;
            let labels: Vec<usize> = chunk.iter().map(|&i| train.label(i).index()).collect();
            let logits = model.forward(&x, Mode::Train)?;
            let diverged = |loss: f64| Error::Divergence { epoch, batch: b + 1, loss };
            if !logits.all_finite() {
                return Err(diverged(f64::NAN));
            }
            let (loss, grad, probs) = loss_from_logits(cfg.loss, &logits, &labels)?;
            if !loss.is_finite() {
                return Err(diverged(loss));
            }
            model.backward(&grad)?;
            adam.step(model)?;
            model.clear_caches();
            loss_sum += loss * chunk.len() as f64;
            correct += count_correct(probs.data(), probs.shape()[1], &labels);
        }

        let (val_loss, val_acc) = evaluate_loss(model, val, cfg.loss, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, batch: 0, loss: val_loss });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            val_loss,
            val_acc,
        };
        history.records.push(record);

        if best.as_ref().is_none_or(|(_, l, _)| val_loss < *l) {
            if let Some(path) = &cfg.checkpoint_path {
                save_checkpoint(model, CheckpointMeta { epoch, val_loss, val_acc }, path)?;
            }
            best = Some((epoch, val_loss, model.clone()));
        }
        if let Some(cb) = on_epoch.as_mut() {
            cb(&record);
        }
    }

    let (best_epoch, best_val_loss, best_model) = best.expect("at least one epoch ran");
    Ok(FitOutcome { history, best_epoch, best_val_loss, best_model })
}
