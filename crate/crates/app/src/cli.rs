use std::fs;
use std::io::Write as _;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use leafcnn::checkpoint::load_checkpoint;
use leafcnn::data::{DatasetManifest, ImageFolderDataset, Split, SplitRatios, scan_dataset, split_dataset};
use leafcnn::gradcam::{grad_cam, write_overlay};
use leafcnn::loss::LossKind;
use leafcnn::metrics::evaluate_model;
use leafcnn::model::Model;
use leafcnn::train::{EpochRecord, fit};

use crate::config::{AppConfig, Overrides};
use crate::error::AppError;
use crate::predict::Predictor;
use crate::service;

#[derive(Debug, Parser)]
#[command(name = "leafcnn", version, about = "Train, evaluate and serve a leaf-disease CNN")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan a Healthy/Diseased image folder and write a stratified split manifest.
    Split(SplitArgs),
    /// Train a model on the train split, keeping the best validation checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on one split of a manifest.
    Eval(EvalArgs),
    /// Classify one image.
    Predict(PredictArgs),
    /// Serve POST /predict over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint path (defaults to the config's model_path).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// History CSV (defaults to the checkpoint path with a .history.csv extension).
    #[arg(long)]
    pub history: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, value_enum)]
    pub loss: Option<LossArg>,
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long)]
    pub crop_boxes: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LossArg {
    CategoricalCe,
    BinaryCe,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::CategoricalCe => LossKind::CategoricalCrossEntropy,
            LossArg::BinaryCe => LossKind::BinaryCrossEntropy,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
    #[arg(long)]
    pub crop_boxes: bool,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Write a Grad-CAM overlay (binary PPM) for the predicted class.
    #[arg(long)]
    pub gradcam: Option<PathBuf>,
    /// Print the same JSON document the service returns.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Split(a) => split(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Predict(a) => predict(a),
        Command::Serve(a) => serve(a),
    }
}

fn split(a: SplitArgs) -> Result<(), AppError> {
    let cfg = AppConfig::load(a.config.as_deref())?.apply(&Overrides {
        data_root: a.data,
        seed: a.seed,
        ..Overrides::default()
    });
    let root = cfg.data_root.ok_or_else(|| AppError::user("no dataset directory given (--data)"))?;
    let manifest = split_dataset(scan_dataset(&root)?, SplitRatios::default(), cfg.train.seed)?;
    manifest.write(&a.out)?;
    println!("{}", manifest.counts());
    println!("wrote {}", a.out.display());
    Ok(())
}

fn folder(
    manifest: &DatasetManifest,
    split: Split,
    cfg: &AppConfig,
    augment: bool,
) -> Result<ImageFolderDataset, AppError> {
    Ok(ImageFolderDataset::from_manifest(manifest, split, None)
        .with_spec(cfg.augment, augment)?
        .with_crop_boxes(cfg.crop_boxes)
        .with_size(cfg.model.input[0]))
}

fn train(a: TrainArgs) -> Result<(), AppError> {
    let overrides = Overrides {
        model_path: a.out,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        learning_rate: a.lr,
        loss: a.loss.map(Into::into),
        augment: a.no_augment.then_some(false),
        crop_boxes: a.crop_boxes.then_some(true),
        ..Overrides::default()
    };
    let mut cfg = AppConfig::load(a.config.as_deref())?.apply(&overrides);
    cfg.train.checkpoint_path = Some(cfg.model_path.clone());
    cfg.validate()?;

    let manifest = DatasetManifest::read(&a.manifest)?;
    let train_set = folder(&manifest, Split::Train, &cfg, true)?;
    let val_set = folder(&manifest, Split::Val, &cfg, false)?;
    let mut model = Model::<f32>::new(cfg.model.clone(), cfg.train.seed)?;
    println!(
        "training on {} images, validating on {} ({} epochs, batch {})",
        train_set.samples().len(),
        val_set.samples().len(),
        cfg.train.epochs,
        cfg.train.batch_size
    );

    let epochs = cfg.train.epochs;
    let mut progress = |r: &EpochRecord| {
        println!(
            "epoch {}/{epochs}  loss {:.4}  acc {:.4}  val_loss {:.4}  val_acc {:.4}",
            r.epoch, r.train_loss, r.train_acc, r.val_loss, r.val_acc
        );
        let _ = std::io::stdout().flush();
    };
    let outcome = fit(&mut model, &train_set, &val_set, &cfg.train, &cfg.optimizer, Some(&mut progress))?;

    let history_path = a.history.unwrap_or_else(|| cfg.model_path.with_extension("history.csv"));
    fs::write(&history_path, outcome.history.to_csv())
        .map_err(|e| AppError::internal(format!("cannot write {}: {e}", history_path.display())))?;
    println!(
        "best epoch {} (val loss {:.4}); checkpoint {}; history {}",
        outcome.best_epoch,
        outcome.best_val_loss,
        cfg.model_path.display(),
        history_path.display()
    );
    let (report, _) = evaluate_model(&outcome.best_model, &val_set, cfg.train.batch_size)?;
    println!("validation metrics\n{report}");
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), AppError> {
    let split: Split = a.split.parse()?;
    let (model, _) = load_checkpoint(&a.model)?;
    let manifest = DatasetManifest::read(&a.manifest)?;
    let data = ImageFolderDataset::from_manifest(&manifest, split, None)
        .with_crop_boxes(a.crop_boxes)
        .with_size(model.config().input[0]);
    if data.samples().is_empty() {
        return Err(AppError::user(format!("the {split} split of {} is empty", a.manifest.display())));
    }
    let (report, _) = evaluate_model(&model, &data, a.batch_size)?;
    match a.format {
        Format::Text => print!("{report}"),
        Format::Csv => print!("{}", report.to_csv()),
    }
    Ok(())
}

fn predict(a: PredictArgs) -> Result<(), AppError> {
    let predictor = Predictor::load(&a.model)?;
    let bytes =
        fs::read(&a.image).map_err(|e| AppError::user(format!("cannot read image {}: {e}", a.image.display())))?;
    let x = predictor.prepare(&bytes, &a.image)?;
    let resp = predictor.predict_tensor(&x)?;
    if a.json {
        println!("{}", serde_json::to_string(&resp).map_err(|e| AppError::internal(e.to_string()))?);
    } else {
        println!("label: {}", resp.label);
        println!("Healthy: {:.6}", resp.probabilities.healthy);
        println!("Diseased: {:.6}", resp.probabilities.diseased);
        println!("model_id: {}", resp.model_id);
    }
    if let Some(out) = a.gradcam {
        let map = grad_cam(predictor.model(), &x, resp.label.index(), None)?;
        write_overlay(&out, &x, &map)?;
        if !a.json {
            println!("gradcam: {}", out.display());
        }
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<(), AppError> {
    let cfg = AppConfig::load(a.config.as_deref())?.apply(&Overrides {
        model_path: a.model,
        port: a.port,
        ..Overrides::default()
    });
    // load before binding so a bad checkpoint never opens the port
    let predictor = Predictor::load(&cfg.model_path)?;
    let addr = SocketAddr::new(a.host, cfg.port);
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| AppError::internal(format!("cannot start runtime: {e}")))?;
    runtime.block_on(service::serve(predictor, addr, |bound| {
        println!("listening on {bound} (model {})", cfg.model_path.display());
        let _ = std::io::stdout().flush();
    }))
}
