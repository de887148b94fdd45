//! Seeded multi-run training and the files it writes.
//!
//! An output directory holds `metrics.jsonl` (one object per run and epoch),
//! `summary.json` (final accuracies with mean and 5th/95th percentiles, plus
//! per-epoch aggregates), `timing.jsonl` (wall times, kept apart so the other
//! two files are byte-identical across repeated runs) and one
//! `model-run<i>.mmhd` per run.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use mmhdc::baseline::NativeTrainer;
use mmhdc::data::{self, RawDataset};
use mmhdc::model_io::{Classifier, SavedModel};
use mmhdc::multiclass::{OvoTrainer, TrainerConfig};
use mmhdc::{Encoder, FeatureMap, HyperVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetKind, ExperimentConfig, SWEEP_LR};
use crate::error::{CliError, CliResult};
use crate::stats::Spread;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMING_FILE: &str = "timing.jsonl";

/// Shape of the synthetic `blobs` dataset: classes, train and test sizes,
/// input dimension and centre spread.
pub const BLOBS: (usize, usize, usize, usize, f64) = (4, 600, 200, 16, 0.6);

/// Loads, truncates and ℓ2-normalizes a dataset. A missing directory is a
/// usage error; unreadable or malformed files are runtime errors.
pub fn load_dataset(
    kind: DatasetKind,
    dir: Option<&Path>,
    seed: u64,
    train_limit: Option<usize>,
    test_limit: Option<usize>,
) -> CliResult<RawDataset> {
    let dir = match (kind, dir) {
        (DatasetKind::Blobs, _) => None,
        (_, None) => return Err(CliError::Usage(format!("dataset {kind:?} needs --data-dir"))),
        (_, Some(d)) if !d.is_dir() => {
            return Err(CliError::Usage(format!(
                "data directory {} does not exist",
                d.display()
            )))
        }
        (_, Some(d)) => Some(d),
    };
    let mut raw = match (kind, dir) {
        (DatasetKind::Mnist, Some(d)) => data::load_mnist_dir(d, "mnist")?,
        (DatasetKind::Fashion, Some(d)) => data::load_mnist_dir(d, "fashion")?,
        (DatasetKind::Har, Some(d)) => data::load_har(d)?,
        _ => {
            let (k, n_train, n_test, d, spread) = BLOBS;
            data::make_blobs(k, n_train, n_test, d, spread, seed)?
        }
    };
    raw.truncate(train_limit, test_limit);
    raw.validate()?;
    Ok(data::preprocess(raw))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub run: usize,
    pub seed: u64,
    pub epoch: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Summed training objective; `None` for the baselines, which have none.
    pub objective: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    pub final_test_acc: f64,
    pub wall_time_s: f64,
    pub model: SavedModel,
}

impl RunRecord {
    /// Best per-epoch test accuracy, or the final one without epochs.
    pub fn peak_test_acc(&self) -> f64 {
        self.epochs
            .iter()
            .map(|e| e.test_acc)
            .fold(self.final_test_acc, f64::max)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochSpread {
    pub epoch: usize,
    pub train_acc: Spread,
    pub test_acc: Spread,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub num_classes: usize,
    pub input_dim: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub final_test_acc: Vec<f64>,
    #[serde(rename = "final")]
    pub final_spread: Spread,
    pub per_epoch: Vec<EpochSpread>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub runs: Vec<RunRecord>,
    pub summary: Summary,
}

pub fn accuracy(classifier: &Classifier, points: &[HyperVector], labels: &[usize]) -> CliResult<f64> {
    let hits = points
        .par_iter()
        .zip(labels)
        .map(|(h, &y)| classifier.predict_encoded(h).map(|p| usize::from(p == y)))
        .collect::<mmhdc::Result<Vec<usize>>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / labels.len().max(1) as f64)
}

/// One seeded run: fresh encoder, fresh trainer, test evaluation every epoch.
pub fn run_once(config: &ExperimentConfig, data: &RawDataset, run: usize) -> CliResult<RunRecord> {
    let start = Instant::now();
    let seed = config.seed + run as u64;
    let encoder = Encoder::new(config.encoder, data.d, config.dim, config.sigma, seed)?;
    let train_h = encoder.encode_batch(&data.train_x)?;
    let test_h = encoder.encode_batch(&data.test_x)?;
    let trainer = config.trainer_with_seed(seed);

    let mut epochs = Vec::with_capacity(config.epochs);
    let mut record = |epoch: usize, classifier: &Classifier, objective: Option<f64>| -> CliResult<()> {
        epochs.push(EpochMetrics {
            run,
            seed,
            epoch,
            train_acc: accuracy(classifier, &train_h, &data.train_y)?,
            test_acc: accuracy(classifier, &test_h, &data.test_y)?,
            objective,
        });
        Ok(())
    };

    let classifier = match &trainer {
        TrainerConfig::Baseline(bc) => {
            let mut t = NativeTrainer::new(&train_h, &data.train_y, data.k, bc.clone())?;
            let native = |t: &NativeTrainer| Classifier::Native {
                prototypes: t.prototypes().clone(),
                similarity: bc.similarity,
            };
            for epoch in 1..=config.epochs {
                t.run_epoch(&train_h, &data.train_y)?;
                record(epoch, &native(&t), None)?;
            }
            native(&t)
        }
        _ => {
            let mut t = OvoTrainer::new(&train_h, &data.train_y, data.k, &trainer, config.parallel)?;
            for epoch in 1..=config.epochs {
                t.run_epoch()?;
                record(epoch, &Classifier::OvO(t.ensemble()), t.objective()?)?;
            }
            Classifier::OvO(t.ensemble())
        }
    };

    let final_test_acc = match epochs.last() {
        Some(e) => e.test_acc,
        None => accuracy(&classifier, &test_h, &data.test_y)?,
    };
    Ok(RunRecord {
        run,
        seed,
        epochs,
        final_test_acc,
        wall_time_s: start.elapsed().as_secs_f64(),
        model: SavedModel::new(encoder, classifier)?,
    })
}

pub fn summarize(config: &ExperimentConfig, data: &RawDataset, runs: &[RunRecord]) -> Summary {
    let final_test_acc: Vec<f64> = runs.iter().map(|r| r.final_test_acc).collect();
    let per_epoch = (0..config.epochs)
        .map(|i| {
            let train: Vec<f64> = runs.iter().map(|r| r.epochs[i].train_acc).collect();
            let test: Vec<f64> = runs.iter().map(|r| r.epochs[i].test_acc).collect();
            EpochSpread {
                epoch: i + 1,
                train_acc: Spread::of(&train).expect("at least one run"),
                test_acc: Spread::of(&test).expect("at least one run"),
            }
        })
        .collect();
    Summary {
        config: config.clone(),
        num_classes: data.k,
        input_dim: data.d,
        train_size: data.train_y.len(),
        test_size: data.test_y.len(),
        final_spread: Spread::of(&final_test_acc).expect("at least one run"),
        final_test_acc,
        per_epoch,
    }
}

struct Outputs {
    dir: PathBuf,
    metrics: BufWriter<File>,
    timing: BufWriter<File>,
}

impl Outputs {
    fn create(dir: &Path) -> CliResult<Outputs> {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        let open = |name: &str| -> CliResult<BufWriter<File>> {
            let path = dir.join(name);
            Ok(BufWriter::new(File::create(&path).map_err(CliError::io(path))?))
        };
        Ok(Outputs {
            dir: dir.to_path_buf(),
            metrics: open(METRICS_FILE)?,
            timing: open(TIMING_FILE)?,
        })
    }

    fn write_run(&mut self, r: &RunRecord) -> CliResult<()> {
        for e in &r.epochs {
            serde_json::to_writer(&mut self.metrics, e)?;
            self.metrics
                .write_all(b"\n")
                .map_err(CliError::io(self.dir.join(METRICS_FILE)))?;
        }
        let timing = serde_json::json!({ "run": r.run, "seed": r.seed, "wall_time_s": r.wall_time_s });
        writeln!(self.timing, "{timing}").map_err(CliError::io(self.dir.join(TIMING_FILE)))?;
        let model = self.dir.join(format!("model-run{}.mmhd", r.run));
        r.model.save(&model)?;
        Ok(())
    }

    fn finish(mut self, summary: &Summary) -> CliResult<()> {
        self.metrics
            .flush()
            .map_err(CliError::io(self.dir.join(METRICS_FILE)))?;
        self.timing.flush().map_err(CliError::io(self.dir.join(TIMING_FILE)))?;
        let path = self.dir.join(SUMMARY_FILE);
        let mut text = serde_json::to_string_pretty(summary)?;
        text.push('\n');
        fs::write(&path, text).map_err(CliError::io(path))
    }
}

/// `config.runs` seeded runs (seed = base + run index), written under
/// `config.out`. The dataset is loaded before anything is written.
pub fn train(config: &ExperimentConfig, mut on_run: impl FnMut(&RunRecord)) -> CliResult<TrainOutcome> {
    let data = load_dataset(
        config.dataset,
        config.data_dir.as_deref(),
        config.seed,
        config.train_limit,
        config.test_limit,
    )?;
    train_on(config, &data, &mut on_run)
}

fn train_on(
    config: &ExperimentConfig,
    data: &RawDataset,
    on_run: &mut dyn FnMut(&RunRecord),
) -> CliResult<TrainOutcome> {
    let mut out = Outputs::create(&config.out)?;
    let mut runs = Vec::with_capacity(config.runs);
    for run in 0..config.runs {
        let record = run_once(config, data, run)?;
        out.write_run(&record)?;
        on_run(&record);
        runs.push(record);
    }
    let summary = summarize(config, data, &runs);
    out.finish(&summary)?;
    Ok(TrainOutcome { runs, summary })
}

/// Re-runs `train` for every dimension with the sweep learning rate, each
/// into `out/dim-<D>`.
pub fn sweep_dim(
    config: &ExperimentConfig,
    dims: &[usize],
    mut on_run: impl FnMut(usize, &RunRecord),
) -> CliResult<Vec<(usize, TrainOutcome)>> {
    if dims.is_empty() {
        return Err(CliError::Usage("--dims needs at least one dimension".into()));
    }
    if let Some(&d) = dims.iter().find(|&&d| d == 0) {
        return Err(CliError::Usage(format!("dimension {d} in --dims must be at least 1")));
    }
    let data = load_dataset(
        config.dataset,
        config.data_dir.as_deref(),
        config.seed,
        config.train_limit,
        config.test_limit,
    )?;
    dims.iter()
        .map(|&dim| {
            let sub = ExperimentConfig {
                dim,
                lr: SWEEP_LR,
                out: config.out.join(format!("dim-{dim}")),
                ..config.clone()
            };
            train_on(&sub, &data, &mut |r| on_run(dim, r)).map(|o| (dim, o))
        })
        .collect()
}
