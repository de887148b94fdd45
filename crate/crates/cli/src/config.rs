//! Experiment configuration: a TOML file, overridden by flags, over the
//! published defaults.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use mmhdc::baseline::{BaselineConfig, BaselineRule};
use mmhdc::multiclass::TrainerConfig;
use mmhdc::svm::LrSchedule;
use mmhdc::{EncoderKind, LossKind, MarginConfig, OptimizerKind, SimilarityKind, SvmSettings};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_DIM: usize = 5000;
pub const DEFAULT_BATCH: usize = 1000;
pub const DEFAULT_C: f64 = 500.0;
pub const DEFAULT_EPOCHS: usize = 20;
pub const DEFAULT_RUNS: usize = 5;
/// Learning rate used by the dimension sweep.
pub const SWEEP_LR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    MmHdc,
    Perceptron,
    #[serde(rename = "onlinehd")]
    #[value(name = "onlinehd")]
    OnlineHd,
    Svm,
}

impl Method {
    pub fn default_lr(self) -> f64 {
        match self {
            Method::Svm => 1e-4,
            Method::MmHdc | Method::Perceptron | Method::OnlineHd => 1e-5,
        }
    }

    pub fn default_optimizer(self) -> OptimizerKind {
        match self {
            Method::Svm => OptimizerKind::Adam,
            _ => OptimizerKind::Sgd,
        }
    }

    /// Whether multi-class problems are split into one-vs-one pairs.
    pub fn uses_pairs(self) -> bool {
        matches!(self, Method::MmHdc | Method::Svm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Mnist,
    Fashion,
    Har,
    /// Synthetic Gaussian blobs, generated from the base seed. Needs no files.
    Blobs,
}

/// Every setting, all optional. Used both for the config file and for the
/// flags layered over it.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Overrides {
    pub dataset: Option<DatasetKind>,
    pub data_dir: Option<PathBuf>,
    pub method: Option<Method>,
    pub encoder: Option<EncoderKind>,
    pub sigma: Option<f64>,
    pub dim: Option<usize>,
    pub lr: Option<f64>,
    pub reg_c: Option<f64>,
    pub batch: Option<usize>,
    pub epochs: Option<usize>,
    pub sim: Option<SimilarityKind>,
    pub loss: Option<LossKind>,
    pub optimizer: Option<OptimizerKind>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub renormalize: Option<bool>,
    pub parallel: Option<bool>,
    pub svm_bias: Option<bool>,
}

impl Overrides {
    pub fn from_toml_file(path: &Path) -> CliResult<Overrides> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Settings present in `top` win.
    pub fn layered_under(self, top: Overrides) -> Overrides {
        Overrides {
            dataset: top.dataset.or(self.dataset),
            data_dir: top.data_dir.or(self.data_dir),
            method: top.method.or(self.method),
            encoder: top.encoder.or(self.encoder),
            sigma: top.sigma.or(self.sigma),
            dim: top.dim.or(self.dim),
            lr: top.lr.or(self.lr),
            reg_c: top.reg_c.or(self.reg_c),
            batch: top.batch.or(self.batch),
            epochs: top.epochs.or(self.epochs),
            sim: top.sim.or(self.sim),
            loss: top.loss.or(self.loss),
            optimizer: top.optimizer.or(self.optimizer),
            runs: top.runs.or(self.runs),
            seed: top.seed.or(self.seed),
            out: top.out.or(self.out),
            train_limit: top.train_limit.or(self.train_limit),
            test_limit: top.test_limit.or(self.test_limit),
            renormalize: top.renormalize.or(self.renormalize),
            parallel: top.parallel.or(self.parallel),
            svm_bias: top.svm_bias.or(self.svm_bias),
        }
    }
}

/// A fully resolved, validated experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetKind,
    pub data_dir: Option<PathBuf>,
    pub method: Method,
    pub encoder: EncoderKind,
    /// Kernel width of the RFF encoder.
    pub sigma: f64,
    pub dim: usize,
    pub lr: f64,
    pub reg_c: f64,
    pub batch: usize,
    pub epochs: usize,
    pub sim: SimilarityKind,
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub runs: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Baselines only: rescale prototypes to unit norm after each batch.
    pub renormalize: bool,
    /// Train one-vs-one pairs on the rayon pool.
    pub parallel: bool,
    pub svm_bias: bool,
}

impl ExperimentConfig {
    pub fn resolve(o: Overrides) -> CliResult<ExperimentConfig> {
        let dataset = o
            .dataset
            .ok_or_else(|| CliError::Usage("no dataset given (--dataset or `dataset` in the config)".into()))?;
        let method = o.method.unwrap_or(Method::MmHdc);
        let config = ExperimentConfig {
            dataset,
            data_dir: o.data_dir,
            method,
            encoder: o.encoder.unwrap_or(EncoderKind::OnlineHd),
            sigma: o.sigma.unwrap_or(1.0),
            dim: o.dim.unwrap_or(DEFAULT_DIM),
            lr: o.lr.unwrap_or(method.default_lr()),
            reg_c: o.reg_c.unwrap_or(DEFAULT_C),
            batch: o.batch.unwrap_or(DEFAULT_BATCH),
            epochs: o.epochs.unwrap_or(DEFAULT_EPOCHS),
            sim: o.sim.unwrap_or_default(),
            loss: o.loss.unwrap_or_default(),
            optimizer: o.optimizer.unwrap_or(method.default_optimizer()),
            runs: o.runs.unwrap_or(DEFAULT_RUNS),
            seed: o.seed.unwrap_or(0),
            out: o.out.unwrap_or_else(|| PathBuf::from("out")),
            train_limit: o.train_limit,
            test_limit: o.test_limit,
            renormalize: o.renormalize.unwrap_or(true),
            parallel: o.parallel.unwrap_or(true),
            svm_bias: o.svm_bias.unwrap_or(false),
        };
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> CliResult<()> {
        let usage = |msg: String| Err(CliError::Usage(msg));
        if self.dim == 0 {
            return usage("--dim must be at least 1".into());
        }
        if self.batch == 0 {
            return usage("--batch must be at least 1".into());
        }
        if self.runs == 0 {
            return usage("--runs must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return usage(format!("--lr must be positive and finite, got {}", self.lr));
        }
        if !(self.reg_c > 0.0) {
            return usage(format!("--reg-c must be positive, got {}", self.reg_c));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return usage(format!("--sigma must be positive, got {}", self.sigma));
        }
        if self.dataset != DatasetKind::Blobs && self.data_dir.is_none() {
            return usage(format!("dataset {:?} needs --data-dir", self.dataset));
        }
        if self.train_limit == Some(0) || self.test_limit == Some(0) {
            return usage("sample limits must be at least 1".into());
        }
        let checked = match self.trainer() {
            TrainerConfig::Margin(c) => c.validate(),
            TrainerConfig::Baseline(c) => c.validate(),
            TrainerConfig::Svm(_) if self.reg_c.is_infinite() => Err(mmhdc::Error::InvalidParameter(
                "the reference SVM needs a finite C".into(),
            )),
            TrainerConfig::Svm(_) => Ok(()),
        };
        checked.map_err(|e| CliError::Usage(e.to_string()))
    }

    /// Trainer settings for this method. The seed is the base seed; each run
    /// replaces it with its own.
    pub fn trainer(&self) -> TrainerConfig {
        self.trainer_with_seed(self.seed)
    }

    pub fn trainer_with_seed(&self, seed: u64) -> TrainerConfig {
        match self.method {
            Method::MmHdc => TrainerConfig::Margin(MarginConfig {
                c: self.reg_c,
                alpha: self.lr,
                batch_size: self.batch,
                epochs: self.epochs,
                loss: self.loss,
                similarity: self.sim,
                optimizer: self.optimizer,
                seed,
            }),
            Method::Svm => TrainerConfig::Svm(SvmSettings {
                c: self.reg_c,
                alpha: self.lr,
                batch_size: self.batch,
                epochs: self.epochs,
                optimizer: self.optimizer,
                fit_bias: self.svm_bias,
                schedule: LrSchedule::Constant,
                seed,
            }),
            Method::Perceptron | Method::OnlineHd => {
                let rule = if self.method == Method::Perceptron {
                    BaselineRule::Perceptron
                } else {
                    BaselineRule::OnlineHd
                };
                TrainerConfig::Baseline(BaselineConfig {
                    alpha: self.lr,
                    batch_size: self.batch,
                    epochs: self.epochs,
                    similarity: self.sim,
                    renormalize: self.renormalize,
                    seed,
                    ..BaselineConfig::new(rule)
                })
            }
        }
    }
}
