//! One-vs-one reduction of K-class problems to K(K-1)/2 binary models.
//!
//! Pair `(a, b)` with `a < b` is trained on the points of classes `a` (as
//! `+1`) and `b` (as `-1`). At prediction time every pair votes for its
//! winner. The class with most votes wins; ties go to the larger summed
//! functional margin over the tied classes, then to the smaller class id.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{BaselineConfig, BaselineTrainer};
use crate::encoding::{FeatureMap, HyperVector};
use crate::error::{check_len, Error, Result};
use crate::hdc::{self, Batch, Label, PrototypePair, SimilarityKind};
use crate::margin::{self, MarginConfig, MarginTrainer};
use crate::svm::{self, LinearModel, SvmSettings, SvmTrainer};

/// A trained binary classifier for one class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BinaryModel {
    Prototypes(PrototypePair),
    Linear(LinearModel),
}

impl BinaryModel {
    pub fn dim(&self) -> usize {
        match self {
            BinaryModel::Prototypes(p) => p.dim(),
            BinaryModel::Linear(m) => m.w.len(),
        }
    }

    /// Signed score; positive favours the `+1` class. For prototypes this is
    /// `sim(h, p+) - sim(h, p-)`, which is the functional margin under dot
    /// similarity.
    pub fn score(&self, h: &[f64], kind: SimilarityKind) -> f64 {
        match self {
            BinaryModel::Prototypes(p) => match kind {
                SimilarityKind::Dot => hdc::margin_unchecked(p, h),
                SimilarityKind::Cosine => {
                    hdc::similarity_unchecked(h, p.plus(), kind) - hdc::similarity_unchecked(h, p.minus(), kind)
                }
            },
            BinaryModel::Linear(m) => m.decision(h),
        }
    }

    pub fn predict(&self, h: &[f64], kind: SimilarityKind) -> Label {
        match self {
            BinaryModel::Prototypes(p) => hdc::predict_binary(p, h, kind).expect("dimension checked by the ensemble"),
            BinaryModel::Linear(m) => m.predict(h),
        }
    }
}

/// Binary training recipe used for every pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrainerConfig {
    Margin(MarginConfig),
    Baseline(BaselineConfig),
    Svm(SvmSettings),
}

impl TrainerConfig {
    pub fn epochs(&self) -> usize {
        match self {
            TrainerConfig::Margin(c) => c.epochs,
            TrainerConfig::Baseline(c) => c.epochs,
            TrainerConfig::Svm(c) => c.epochs,
        }
    }

    pub fn similarity(&self) -> SimilarityKind {
        match self {
            TrainerConfig::Margin(c) => c.similarity,
            TrainerConfig::Baseline(c) => c.similarity,
            TrainerConfig::Svm(_) => SimilarityKind::Dot,
        }
    }
}

#[derive(Debug, Clone)]
enum PairTrainer {
    Margin(MarginTrainer),
    Baseline(BaselineTrainer),
    Svm(SvmTrainer),
}

impl PairTrainer {
    fn new(config: &TrainerConfig, data: &Batch) -> Result<Self> {
        let n = data.len();
        Ok(match config {
            TrainerConfig::Margin(c) => {
                PairTrainer::Margin(MarginTrainer::new(hdc::init_prototypes(data)?, c.clone(), n)?)
            }
            TrainerConfig::Baseline(c) => {
                PairTrainer::Baseline(BaselineTrainer::new(hdc::init_prototypes(data)?, c.clone(), n)?)
            }
            TrainerConfig::Svm(c) => PairTrainer::Svm(SvmTrainer::new(data.dim(), n, c.clone())?),
        })
    }

    fn run_epoch(&mut self, data: &Batch) -> Result<()> {
        match self {
            PairTrainer::Margin(t) => t.run_epoch(data),
            PairTrainer::Baseline(t) => t.run_epoch(data),
            PairTrainer::Svm(t) => {
                t.run_epoch(data)?;
                // keeps the schedule state in step with the epoch count
                t.record(data).map(|_| ())
            }
        }
    }

    fn model(&self) -> BinaryModel {
        match self {
            PairTrainer::Margin(t) => BinaryModel::Prototypes(t.prototypes().clone()),
            PairTrainer::Baseline(t) => BinaryModel::Prototypes(t.prototypes().clone()),
            PairTrainer::Svm(t) => BinaryModel::Linear(t.clone().into_model()),
        }
    }

    /// Training objective on the pair's data, where one is defined.
    fn objective(&self, data: &Batch) -> Result<Option<f64>> {
        Ok(match self {
            PairTrainer::Margin(t) => {
                let c = t.config();
                Some(margin::objective(t.prototypes(), data, c.c, c.loss)?.objective)
            }
            PairTrainer::Baseline(_) => None,
            PairTrainer::Svm(t) => Some(svm::svm_primal_loss(t.model(), data, t.settings().c)?),
        })
    }
}

struct PairState {
    classes: (usize, usize),
    /// Full-length label table; only entries in `index` are meaningful.
    labels: Vec<Label>,
    index: Vec<usize>,
    trainer: PairTrainer,
}

/// Lock-step trainer for all pairs, so the ensemble can be evaluated after
/// every epoch.
pub struct OvoTrainer<'a> {
    k: usize,
    points: &'a [HyperVector],
    similarity: SimilarityKind,
    pairs: Vec<PairState>,
    parallel: bool,
}

/// Sorted class pairs `(a, b)`, `a < b`.
pub fn class_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|a| (a + 1..k).map(move |b| (a, b))).collect()
}

impl<'a> OvoTrainer<'a> {
    pub fn new(
        points: &'a [HyperVector],
        labels: &[usize],
        k: usize,
        config: &TrainerConfig,
        parallel: bool,
    ) -> Result<Self> {
        check_len(points.len(), labels.len())?;
        if k < 2 {
            return Err(Error::InvalidParameter(format!("need at least two classes, got {k}")));
        }
        let mut counts = vec![0usize; k];
        for &y in labels {
            if y >= k {
                return Err(Error::InvalidParameter(format!("label {y} outside 0..{k}")));
            }
            counts[y] += 1;
        }
        if let Some(c) = counts.iter().position(|&n| n == 0) {
            return Err(Error::EmptyClass(c.to_string()));
        }

        let build = |(a, b): (usize, usize)| -> Result<PairState> {
            let index: Vec<usize> = (0..labels.len())
                .filter(|&i| labels[i] == a || labels[i] == b)
                .collect();
            let pair_labels: Vec<Label> = labels
                .iter()
                .map(|&y| if y == a { Label::Pos } else { Label::Neg })
                .collect();
            let trainer = {
                let all = Batch::new(points, &pair_labels)?;
                let data = all.select(&index);
                PairTrainer::new(config, &data)?
            };
            Ok(PairState {
                classes: (a, b),
                labels: pair_labels,
                index,
                trainer,
            })
        };
        let pairs = if parallel {
            class_pairs(k).into_par_iter().map(build).collect::<Result<Vec<_>>>()?
        } else {
            class_pairs(k).into_iter().map(build).collect::<Result<Vec<_>>>()?
        };
        Ok(OvoTrainer {
            k,
            points,
            similarity: config.similarity(),
            pairs,
            parallel,
        })
    }

    /// Training points of pair `(a, b)`, as indices into the shared set.
    pub fn pair_indices(&self, pair: usize) -> &[usize] {
        &self.pairs[pair].index
    }

    pub fn run_epoch(&mut self) -> Result<()> {
        let points = self.points;
        let step = |p: &mut PairState| -> Result<()> {
            let all = Batch::new(points, &p.labels)?;
            let data = all.select(&p.index);
            p.trainer.run_epoch(&data)
        };
        if self.parallel {
            self.pairs.par_iter_mut().map(step).collect::<Result<()>>()
        } else {
            self.pairs.iter_mut().try_for_each(step)
        }
    }

    /// Sum of the pairs' training objectives, if the method has one.
    pub fn objective(&self) -> Result<Option<f64>> {
        let mut total = 0.0;
        for p in &self.pairs {
            let all = Batch::new(self.points, &p.labels)?;
            match p.trainer.objective(&all.select(&p.index))? {
                Some(v) => total += v,
                None => return Ok(None),
            }
        }
        Ok(Some(total))
    }

    pub fn ensemble(&self) -> OvOEnsemble {
        OvOEnsemble {
            k: self.k,
            similarity: self.similarity,
            pairs: self.pairs.iter().map(|p| p.classes).collect(),
            models: self.pairs.iter().map(|p| p.trainer.model()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvOEnsemble {
    k: usize,
    similarity: SimilarityKind,
    pairs: Vec<(usize, usize)>,
    models: Vec<BinaryModel>,
}

/// Vote tally for a single prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Votes {
    pub counts: Vec<usize>,
    pub margins: Vec<f64>,
}

impl OvOEnsemble {
    /// Assembles an ensemble from pair models in [`class_pairs`] order.
    pub fn new(k: usize, similarity: SimilarityKind, models: Vec<BinaryModel>) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!("need at least two classes, got {k}")));
        }
        let pairs = class_pairs(k);
        check_len(pairs.len(), models.len())?;
        let dim = models[0].dim();
        for m in &models {
            check_len(dim, m.dim())?;
        }
        Ok(OvOEnsemble {
            k,
            similarity,
            pairs,
            models,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn similarity(&self) -> SimilarityKind {
        self.similarity
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn models(&self) -> &[BinaryModel] {
        &self.models
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn votes(&self, h: &[f64]) -> Result<Votes> {
        check_len(self.dim(), h.len())?;
        let mut counts = vec![0usize; self.k];
        let mut margins = vec![0.0; self.k];
        for (&(a, b), model) in self.pairs.iter().zip(&self.models) {
            let s = model.score(h, self.similarity);
            match model.predict(h, self.similarity) {
                Label::Pos => counts[a] += 1,
                Label::Neg => counts[b] += 1,
            }
            margins[a] += s;
            margins[b] -= s;
        }
        Ok(Votes { counts, margins })
    }

    /// Predicts the class of an already encoded point.
    pub fn predict_encoded(&self, h: &[f64]) -> Result<usize> {
        let v = self.votes(h)?;
        let top = *v.counts.iter().max().unwrap();
        let mut best = usize::MAX;
        for c in 0..self.k {
            if v.counts[c] != top {
                continue;
            }
            if best == usize::MAX || v.margins[c] > v.margins[best] {
                best = c;
            }
        }
        Ok(best)
    }
}

/// Trains every pair for `config.epochs()` epochs.
pub fn ovo_fit(
    points: &[HyperVector],
    labels: &[usize],
    k: usize,
    config: &TrainerConfig,
    parallel: bool,
) -> Result<OvOEnsemble> {
    let mut trainer = OvoTrainer::new(points, labels, k, config, parallel)?;
    for _ in 0..config.epochs() {
        trainer.run_epoch()?;
    }
    Ok(trainer.ensemble())
}

/// Encodes `x` once and lets the pairs vote.
pub fn ovo_predict<F: FeatureMap + ?Sized>(ensemble: &OvOEnsemble, encoder: &F, x: &[f64]) -> Result<usize> {
    let h = encoder.encode(x)?;
    ensemble.predict_encoded(&h)
}
