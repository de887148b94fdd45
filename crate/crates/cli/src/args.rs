//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use mmhdc::{EncoderKind, LossKind, OptimizerKind, SimilarityKind};

use crate::config::{DatasetKind, Method, Overrides};
use crate::error::CliResult;
use crate::eval::Split;

#[derive(Debug, Parser)]
#[command(name = "mmhdc", version, about = "Maximum-margin HDC: train, evaluate and sweep")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Seeded training runs with per-epoch metrics and saved models.
    Train(TrainArgs),
    /// Accuracy and confusion matrix of a saved model.
    Eval(EvalArgs),
    /// Training repeated over several hypervector sizes at the sweep rate.
    SweepDim(SweepArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML file with any of the settings below (kebab-case keys); flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub flags: ExperimentFlags,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated hypervector sizes, e.g. 500,1000,2500.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub dims: Vec<usize>,
    #[command(flatten)]
    pub flags: ExperimentFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub dataset: DatasetKind,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: Split,
    /// Seed the blobs dataset was generated from.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluate only the first N samples of the split.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Also write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct ExperimentFlags {
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long, value_parser = parse_encoder)]
    pub encoder: Option<EncoderKind>,
    /// RFF kernel width.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Regularization constant C; `inf` drops the regularizer (mm-hdc only).
    #[arg(long)]
    pub reg_c: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_parser = parse_similarity)]
    pub sim: Option<SimilarityKind>,
    #[arg(long, value_parser = parse_loss)]
    pub loss: Option<LossKind>,
    #[arg(long, value_parser = parse_optimizer)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub runs: Option<usize>,
    /// Base seed; run i uses seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep only the first N training samples.
    #[arg(long)]
    pub train_limit: Option<usize>,
    /// Keep only the first N test samples.
    #[arg(long)]
    pub test_limit: Option<usize>,
    /// Do not renormalize baseline prototypes after each batch.
    #[arg(long)]
    pub no_renorm: bool,
    /// Train one-vs-one pairs one after another.
    #[arg(long)]
    pub sequential: bool,
    /// Fit a bias term in the reference SVM.
    #[arg(long)]
    pub svm_bias: bool,
}

impl ExperimentFlags {
    pub fn into_overrides(self) -> Overrides {
        Overrides {
            dataset: self.dataset,
            data_dir: self.data_dir,
            method: self.method,
            encoder: self.encoder,
            sigma: self.sigma,
            dim: self.dim,
            lr: self.lr,
            reg_c: self.reg_c,
            batch: self.batch,
            epochs: self.epochs,
            sim: self.sim,
            loss: self.loss,
            optimizer: self.optimizer,
            runs: self.runs,
            seed: self.seed,
            out: self.out,
            train_limit: self.train_limit,
            test_limit: self.test_limit,
            renormalize: self.no_renorm.then_some(false),
            parallel: self.sequential.then_some(false),
            svm_bias: self.svm_bias.then_some(true),
        }
    }
}

/// Config file (if any) under the flags.
pub fn layered(config: Option<&PathBuf>, flags: ExperimentFlags) -> CliResult<Overrides> {
    let base = match config {
        Some(path) => Overrides::from_toml_file(path)?,
        None => Overrides::default(),
    };
    Ok(base.layered_under(flags.into_overrides()))
}

fn parse_encoder(s: &str) -> Result<EncoderKind, String> {
    match s {
        "onlinehd" => Ok(EncoderKind::OnlineHd),
        "rff" => Ok(EncoderKind::Rff),
        _ => Err(format!("unknown encoder {s:?} (onlinehd, rff)")),
    }
}

fn parse_similarity(s: &str) -> Result<SimilarityKind, String> {
    match s {
        "dot" => Ok(SimilarityKind::Dot),
        "cosine" => Ok(SimilarityKind::Cosine),
        _ => Err(format!("unknown similarity {s:?} (dot, cosine)")),
    }
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    match s {
        "hinge" => Ok(LossKind::Hinge),
        "sq-hinge" | "squared-hinge" => Ok(LossKind::SquaredHinge),
        _ => Err(format!("unknown loss {s:?} (hinge, sq-hinge)")),
    }
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    match s {
        "sgd" => Ok(OptimizerKind::Sgd),
        "adam" => Ok(OptimizerKind::Adam),
        _ => Err(format!("unknown optimizer {s:?} (sgd, adam)")),
    }
}
