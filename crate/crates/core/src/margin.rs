//! Maximum-margin HDC training.
//!
//! The prototypes are fitted by (sub)gradient descent on
//!
//! ```text
//! F(p+, p-) = 1/(2C) |p+ - p-|^2 + sum_i loss(1 - y_i <h_i, p+ - p->)
//! ```
//!
//! with `loss` the hinge `[z]_+` or the squared hinge `[z]_+^2`. `C = inf`
//! is represented by `1/C = 0`, in which case the hinge update reduces to
//! the perceptron rule applied to every margin violator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hdc::{self, Batch, Label, PrototypePair, SimilarityKind};
use crate::linalg;
use crate::optim::{OptimizerKind, Stepper};
use crate::schedule::Shuffler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    Hinge,
    #[serde(alias = "sq-hinge")]
    SquaredHinge,
}

impl LossKind {
    /// Loss of a single slack `z = [1 - margin]_+`.
    #[inline]
    pub fn of_slack(self, z: f64) -> f64 {
        match self {
            LossKind::Hinge => z,
            LossKind::SquaredHinge => z * z,
        }
    }

    /// Derivative of the loss with respect to the slack, for `z > 0`.
    #[inline]
    fn weight(self, z: f64) -> f64 {
        match self {
            LossKind::Hinge => 1.0,
            LossKind::SquaredHinge => 2.0 * z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginConfig {
    /// Regularization constant; `f64::INFINITY` drops the regularizer.
    pub c: f64,
    pub alpha: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossKind,
    pub similarity: SimilarityKind,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        MarginConfig {
            c: 500.0,
            alpha: 1e-5,
            batch_size: 1000,
            epochs: 20,
            loss: LossKind::Hinge,
            similarity: SimilarityKind::Dot,
            optimizer: OptimizerKind::Sgd,
            seed: 0,
        }
    }
}

impl MarginConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) {
            return Err(Error::InvalidParameter(format!("C must be positive, got {}", self.c)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.alpha
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn inv_c(&self) -> f64 {
        inv_c(self.c)
    }
}

/// `1/C`, exactly zero for `C = inf`.
#[inline]
pub fn inv_c(c: f64) -> f64 {
    if c.is_infinite() {
        0.0
    } else {
        1.0 / c
    }
}

/// `1/(2C) |w|^2`, shared with the reference SVM so both objectives agree
/// bit for bit.
#[inline]
pub(crate) fn regularizer(inv_c: f64, w_norm_sq: f64) -> f64 {
    0.5 * inv_c * w_norm_sq
}

/// Indices of margin violators (`1 - y <h, w> > 0`), split by label.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ViolationSets {
    pub plus: Vec<usize>,
    pub minus: Vec<usize>,
}

impl ViolationSets {
    pub fn len(&self) -> usize {
        self.plus.len() + self.minus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, i: usize) -> bool {
        self.plus.contains(&i) || self.minus.contains(&i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub objective: f64,
    pub regularizer: f64,
    pub hinge_sum: f64,
    /// Slacks `[1 - y_i <h_i, w>]_+` in batch order.
    pub per_point_hinge: Vec<f64>,
}

pub fn violation_sets(proto: &PrototypePair, batch: &Batch) -> Result<ViolationSets> {
    check_dim(proto, batch)?;
    let w = proto.hyperplane();
    let mut sets = ViolationSets::default();
    for (i, h, y) in batch.iter() {
        if 1.0 - y.sign() * linalg::dot(h, &w) > 0.0 {
            match y {
                Label::Pos => sets.plus.push(i),
                Label::Neg => sets.minus.push(i),
            }
        }
    }
    Ok(sets)
}

pub fn objective(proto: &PrototypePair, batch: &Batch, c: f64, loss: LossKind) -> Result<LossReport> {
    check_dim(proto, batch)?;
    let w = proto.hyperplane();
    let reg = regularizer(inv_c(c), linalg::norm_sq(&w));
    let mut per_point_hinge = Vec::with_capacity(batch.len());
    let mut hinge_sum = 0.0;
    for (_, h, y) in batch.iter() {
        let z = (1.0 - y.sign() * linalg::dot(h, &w)).max(0.0);
        hinge_sum += loss.of_slack(z);
        per_point_hinge.push(z);
    }
    Ok(LossReport {
        objective: reg + hinge_sum,
        regularizer: reg,
        hinge_sum,
        per_point_hinge,
    })
}

/// Gradients of the objective with respect to `p+` and `p-`. The second is
/// the exact negation of the first, since the objective depends on the
/// prototypes only through their difference.
pub fn gradients(proto: &PrototypePair, batch: &Batch, c: f64, loss: LossKind) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim(proto, batch)?;
    let g_plus = plus_gradient(proto, batch, inv_c(c), loss);
    let g_minus = g_plus.iter().map(|g| -g).collect();
    Ok((g_plus, g_minus))
}

/// `(1/C) w - sum_{violators} y_i Delta_i h_i`, accumulated in batch order.
fn plus_gradient(proto: &PrototypePair, batch: &Batch, inv_c: f64, loss: LossKind) -> Vec<f64> {
    // w is formed once so each point costs one dot product and one axpy
    let w = proto.hyperplane();
    let mut pull = vec![0.0; proto.dim()];
    for (_, h, y) in batch.iter() {
        let z = 1.0 - y.sign() * linalg::dot(h, &w);
        if z > 0.0 {
            linalg::axpy(y.sign() * loss.weight(z), h, &mut pull);
        }
    }
    w.iter().zip(&pull).map(|(wk, s)| inv_c * wk - s).collect()
}

/// One plain gradient step `p <- p - alpha g` on `batch`, followed by the
/// norm-equalizing projection in cosine mode.
pub fn train_step(proto: &mut PrototypePair, batch: &Batch, config: &MarginConfig) -> Result<()> {
    let mut plus = Stepper::Sgd;
    let mut minus = Stepper::Sgd;
    step_with(proto, batch, config, &mut plus, &mut minus)
}

fn step_with(
    proto: &mut PrototypePair,
    batch: &Batch,
    config: &MarginConfig,
    plus: &mut Stepper,
    minus: &mut Stepper,
) -> Result<()> {
    check_dim(proto, batch)?;
    let g_plus = plus_gradient(proto, batch, config.inv_c(), config.loss);
    let g_minus: Vec<f64> = g_plus.iter().map(|g| -g).collect();
    let mut next = proto.clone();
    plus.step(&mut next.plus, &g_plus, config.alpha);
    minus.step(&mut next.minus, &g_minus, config.alpha);
    if config.similarity == SimilarityKind::Cosine {
        hdc::renormalize(&mut next);
    }
    if !next.is_finite() {
        return Err(Error::NonFinite {
            context: format!(
                "margin step (alpha = {}, |g+| = {:e})",
                config.alpha,
                linalg::norm(&g_plus)
            ),
        });
    }
    *proto = next;
    Ok(())
}

/// Per-epoch training trace entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub objective: f64,
    pub regularizer: f64,
    pub hinge_sum: f64,
    pub train_accuracy: f64,
}

/// Stateful trainer: one call to [`MarginTrainer::run_epoch`] is one pass
/// over the data in seeded random batches.
#[derive(Debug, Clone)]
pub struct MarginTrainer {
    proto: PrototypePair,
    config: MarginConfig,
    plus: Stepper,
    minus: Stepper,
    shuffler: Shuffler,
    epochs_run: usize,
}

impl MarginTrainer {
    pub fn new(init: PrototypePair, config: MarginConfig, n: usize) -> Result<Self> {
        config.validate()?;
        let dim = init.dim();
        let mut proto = init;
        if config.similarity == SimilarityKind::Cosine {
            hdc::renormalize(&mut proto);
        }
        Ok(MarginTrainer {
            plus: Stepper::new(config.optimizer, dim),
            minus: Stepper::new(config.optimizer, dim),
            shuffler: Shuffler::new(n, config.batch_size, config.seed),
            proto,
            config,
            epochs_run: 0,
        })
    }

    pub fn prototypes(&self) -> &PrototypePair {
        &self.proto
    }

    pub fn into_prototypes(self) -> PrototypePair {
        self.proto
    }

    pub fn config(&self) -> &MarginConfig {
        &self.config
    }

    pub fn run_epoch(&mut self, data: &Batch) -> Result<()> {
        for idx in self.shuffler.next_epoch() {
            let batch = data.select(idx);
            step_with(&mut self.proto, &batch, &self.config, &mut self.plus, &mut self.minus)?;
        }
        self.epochs_run += 1;
        Ok(())
    }

    /// Objective and training accuracy on `data` at the current prototypes.
    pub fn record(&self, data: &Batch) -> Result<EpochRecord> {
        let report = objective(&self.proto, data, self.config.c, self.config.loss)?;
        Ok(EpochRecord {
            epoch: self.epochs_run,
            objective: report.objective,
            regularizer: report.regularizer,
            hinge_sum: report.hinge_sum,
            train_accuracy: accuracy(&self.proto, data, self.config.similarity)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub prototypes: PrototypePair,
    pub trace: Vec<EpochRecord>,
}

/// Runs `config.epochs` epochs from `init`, recording the objective and
/// training accuracy after each.
pub fn fit(data: &Batch, config: &MarginConfig, init: PrototypePair) -> Result<FitResult> {
    let mut trainer = MarginTrainer::new(init, config.clone(), data.len())?;
    let mut trace = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        trainer.run_epoch(data)?;
        trace.push(trainer.record(data)?);
    }
    Ok(FitResult {
        prototypes: trainer.into_prototypes(),
        trace,
    })
}

pub fn accuracy(proto: &PrototypePair, data: &Batch, kind: SimilarityKind) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for (_, h, y) in data.iter() {
        if hdc::predict_binary(proto, h, kind)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

fn check_dim(proto: &PrototypePair, batch: &Batch) -> Result<()> {
    if batch.is_empty() {
        return Ok(());
    }
    crate::error::check_len(proto.dim(), batch.dim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::HyperVector;

    fn hv(v: &[f64]) -> HyperVector {
        HyperVector::new(v.to_vec())
    }

    #[test]
    fn violation_set_boundaries() {
        // w = [1, 0]
        let p = PrototypePair::new(vec![1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let pts = vec![hv(&[0.5, 0.0]), hv(&[1.5, 0.0]), hv(&[-1.0, 0.0]), hv(&[0.5, 0.0])];
        let labels = vec![Label::Pos, Label::Pos, Label::Neg, Label::Neg];
        let s = violation_sets(&p, &Batch::new(&pts, &labels).unwrap()).unwrap();
        // margin 0.5 -> in; 1.5 -> out; y=-1 at <h,w>=-1 -> exactly on the margin, out
        assert_eq!(s.plus, vec![0]);
        assert_eq!(s.minus, vec![3]);
    }

    #[test]
    fn equal_prototypes_cost_n() {
        let p = PrototypePair::new(vec![0.2, 0.1], vec![0.2, 0.1]).unwrap();
        let pts = vec![hv(&[1.0, 2.0]), hv(&[3.0, -1.0]), hv(&[0.0, 0.5])];
        let labels = vec![Label::Pos, Label::Neg, Label::Pos];
        let r = objective(&p, &Batch::new(&pts, &labels).unwrap(), 1.0, LossKind::Hinge).unwrap();
        assert_eq!(r.objective, 3.0);
        assert_eq!(r.per_point_hinge, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn satisfied_margins_leave_only_regularizer() {
        let p = PrototypePair::new(vec![2.0, 0.0], vec![0.0, 0.0]).unwrap();
        let pts = vec![hv(&[1.0, 0.0]), hv(&[-3.0, 1.0])];
        let labels = vec![Label::Pos, Label::Neg];
        for loss in [LossKind::Hinge, LossKind::SquaredHinge] {
            let r = objective(&p, &Batch::new(&pts, &labels).unwrap(), 4.0, loss).unwrap();
            assert_eq!(r.hinge_sum, 0.0);
            assert_eq!(r.objective, 4.0 / 8.0);
        }
    }

    #[test]
    fn empty_violations_at_infinite_c_give_zero_gradient() {
        let p = PrototypePair::new(vec![2.0, 0.0], vec![0.0, 0.0]).unwrap();
        let pts = vec![hv(&[1.0, 0.0])];
        let labels = vec![Label::Pos];
        let (gp, gm) = gradients(&p, &Batch::new(&pts, &labels).unwrap(), f64::INFINITY, LossKind::Hinge).unwrap();
        assert!(gp.iter().chain(&gm).all(|g| *g == 0.0));
    }

    #[test]
    fn single_violator_literal_gradient() {
        let h = [0.7, -1.1, 0.2];
        let p = PrototypePair::zeros(3);
        let pts = vec![hv(&h)];
        let labels = vec![Label::Pos];
        let (gp, gm) = gradients(&p, &Batch::new(&pts, &labels).unwrap(), f64::INFINITY, LossKind::Hinge).unwrap();
        for k in 0..3 {
            assert_eq!(gp[k], -h[k]);
            assert_eq!(gm[k], h[k]);
        }
    }

    #[test]
    fn zero_gradient_step_is_identity() {
        let p0 = PrototypePair::new(vec![3.0, 0.0], vec![1.0, 0.0]).unwrap();
        let mut p = p0.clone();
        let pts = vec![hv(&[1.0, 0.0])];
        let labels = vec![Label::Pos];
        let cfg = MarginConfig {
            c: f64::INFINITY,
            alpha: 0.1,
            ..MarginConfig::default()
        };
        train_step(&mut p, &Batch::new(&pts, &labels).unwrap(), &cfg).unwrap();
        assert_eq!(p, p0);
    }

    #[test]
    fn diverging_step_reports_non_finite() {
        let mut p = PrototypePair::zeros(1);
        let pts = vec![hv(&[f64::MAX])];
        let labels = vec![Label::Pos];
        let cfg = MarginConfig {
            alpha: 10.0,
            ..MarginConfig::default()
        };
        let err = train_step(&mut p, &Batch::new(&pts, &labels).unwrap(), &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        assert_eq!(p, PrototypePair::zeros(1));
    }

    #[test]
    fn zero_epochs_returns_init() {
        let pts = vec![hv(&[1.0, 0.0]), hv(&[0.0, 1.0])];
        let labels = vec![Label::Pos, Label::Neg];
        let init = PrototypePair::new(vec![0.3, 0.4], vec![-0.1, 2.0]).unwrap();
        let cfg = MarginConfig {
            epochs: 0,
            ..MarginConfig::default()
        };
        let out = fit(&Batch::new(&pts, &labels).unwrap(), &cfg, init.clone()).unwrap();
        assert_eq!(out.prototypes, init);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn config_validation() {
        let bad = [
            MarginConfig {
                c: 0.0,
                ..MarginConfig::default()
            },
            MarginConfig {
                c: -1.0,
                ..MarginConfig::default()
            },
            MarginConfig {
                alpha: 0.0,
                ..MarginConfig::default()
            },
            MarginConfig {
                batch_size: 0,
                ..MarginConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
        assert!(MarginConfig {
            c: f64::INFINITY,
            ..MarginConfig::default()
        }
        .validate()
        .is_ok());
    }
}
