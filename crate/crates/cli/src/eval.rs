//! Accuracy and confusion counts of a saved model on a dataset split.

use std::path::Path;

use clap::ValueEnum;
use mmhdc::model_io::SavedModel;
use mmhdc::FeatureMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::DatasetKind;
use crate::error::{CliError, CliResult};
use crate::experiment::load_dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[default]
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub samples: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl EvalReport {
    pub fn from_predictions(k: usize, truth: &[usize], predicted: &[usize]) -> EvalReport {
        let mut confusion = vec![vec![0; k]; k];
        for (&t, &p) in truth.iter().zip(predicted) {
            confusion[t][p] += 1;
        }
        let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
        EvalReport {
            samples: truth.len(),
            accuracy: correct as f64 / truth.len().max(1) as f64,
            confusion,
        }
    }
}

pub fn evaluate(model: &SavedModel, x: &[Vec<f64>], y: &[usize]) -> CliResult<EvalReport> {
    let k = model.classifier.num_classes();
    if let Some(&bad) = y.iter().find(|&&c| c >= k) {
        return Err(mmhdc::Error::InvalidParameter(format!("label {bad} outside the model's {k} classes")).into());
    }
    let predicted = x
        .par_iter()
        .map(|p| model.predict(p))
        .collect::<mmhdc::Result<Vec<usize>>>()?;
    Ok(EvalReport::from_predictions(k, y, &predicted))
}

/// Loads the model and the split, then evaluates. `seed` only matters for
/// the synthetic blobs, which are regenerated from it.
pub fn eval_command(
    model_path: &Path,
    dataset: DatasetKind,
    data_dir: Option<&Path>,
    split: Split,
    seed: u64,
    limit: Option<usize>,
) -> CliResult<EvalReport> {
    if !model_path.is_file() {
        return Err(CliError::Usage(format!(
            "model file {} does not exist",
            model_path.display()
        )));
    }
    let data = load_dataset(dataset, data_dir, seed, None, None)?;
    let model = SavedModel::load(model_path)?;
    if data.d != model.encoder.input_dim() {
        return Err(mmhdc::Error::DimensionMismatch {
            expected: model.encoder.input_dim(),
            actual: data.d,
        }
        .into());
    }
    let (x, y) = match split {
        Split::Train => (&data.train_x, &data.train_y),
        Split::Test => (&data.test_x, &data.test_y),
    };
    let n = limit.unwrap_or(y.len()).min(y.len());
    evaluate(&model, &x[..n], &y[..n])
}
