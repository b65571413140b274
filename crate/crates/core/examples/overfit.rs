//! Trains the default network on generated quadrant-blob images and prints
//! the per-epoch history.
//!
//! cargo run --release --example overfit -- [epochs] [images per class]

use std::time::Instant;

use leafcnn::data::synthetic::quadrant_dataset;
use leafcnn::model::{Model, ModelConfig};
use leafcnn::optim::OptimizerConfig;
use leafcnn::train::{EpochRecord, TrainConfig, fit};

fn main() -> leafcnn::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("numeric argument"));
    let epochs = args.next().unwrap_or(50);
    let per_class = args.next().unwrap_or(20);

    let train = quadrant_dataset(per_class, 224, 1);
    let val = quadrant_dataset(4, 224, 2);
    let mut model = Model::<f32>::new(ModelConfig::tomato_leaf(), 42)?;
    let cfg = TrainConfig { epochs, augment: false, ..TrainConfig::default() };

    let start = Instant::now();
    let mut report = |r: &EpochRecord| {
        println!(
            "epoch {:3}  loss {:.4}  acc {:.3}  val_loss {:.4}  val_acc {:.3}  {:.1}s",
            r.epoch,
            r.train_loss,
            r.train_acc,
            r.val_loss,
            r.val_acc,
            start.elapsed().as_secs_f64()
        );
    };
    let out = fit(&mut model, &train, &val, &cfg, &OptimizerConfig::default(), Some(&mut report))?;
    println!("best epoch {} (val loss {:.4})", out.best_epoch, out.best_val_loss);
    Ok(())
}
