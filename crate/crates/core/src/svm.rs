//! Reference linear soft-margin SVM.
//!
//! The primal trainer minimizes `1/(2C) |w|^2 + sum_i [1 - y_i (<x_i, w> - b)]_+`
//! by batched subgradient steps (plain or Adam). The dual solver is a
//! verification oracle for small instances: cyclic coordinate ascent on
//!
//! ```text
//! max  sum_i l_i - 1/2 sum_ij l_i l_j y_i y_j <x_i, x_j>    s.t. 0 <= l_i <= C
//! ```
//!
//! for the zero-bias problem, returning a certificate with the reconstructed
//! `w = sum_i l_i y_i x_i`, both objectives and KKT residuals.
//!
//! All objectives are reported on the `1/(2C)` scale, i.e. the usual
//! `1/2 |w|^2 + C sum zeta` primal and its dual divided by `C`.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::hdc::{Batch, Label, PrototypePair};
use crate::linalg;
use crate::margin::{inv_c, regularizer};
use crate::optim::{OptimizerKind, Stepper};
use crate::schedule::Shuffler;

/// Largest instance the dual oracle accepts.
pub const DUAL_MAX_POINTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub bias: f64,
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        LinearModel {
            w: vec![0.0; dim],
            bias: 0.0,
        }
    }

    /// `<x, w> - b`
    pub fn decision(&self, x: &[f64]) -> f64 {
        linalg::dot(x, &self.w) - self.bias
    }

    /// Sign of the decision value; zero maps to `+1`.
    pub fn predict(&self, x: &[f64]) -> Label {
        if self.decision(x) >= 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }
}

pub fn svm_primal_loss(model: &LinearModel, data: &Batch, c: f64) -> Result<f64> {
    if !data.is_empty() {
        check_len(model.w.len(), data.dim())?;
    }
    let reg = regularizer(inv_c(c), linalg::norm_sq(&model.w));
    let mut hinge_sum = 0.0;
    for (_, x, y) in data.iter() {
        hinge_sum += (1.0 - y.sign() * (linalg::dot(x, &model.w) - model.bias)).max(0.0);
    }
    Ok(reg + hinge_sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    /// Multiply the rate by `factor` and return to the best iterate whenever
    /// the full objective has not improved for `patience` epochs.
    Plateau {
        factor: f64,
        patience: usize,
    },
    /// Step `t` (counted over batches, from 1) uses
    /// `alpha * C / (t + offset)`, i.e. `alpha / (mu (t + offset))` for the
    /// strong-convexity modulus `mu = 1/C` of the full-batch objective. The
    /// trainer reports the `t`-weighted average of the iterates, which
    /// converges at rate `O(1/t)` on full batches despite the hinge kinks.
    InverseTime {
        offset: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmSettings {
    pub c: f64,
    pub alpha: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub fit_bias: bool,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for SvmSettings {
    fn default() -> Self {
        SvmSettings {
            c: 500.0,
            alpha: 1e-4,
            batch_size: 1000,
            epochs: 20,
            optimizer: OptimizerKind::Adam,
            fit_bias: false,
            schedule: LrSchedule::Constant,
            seed: 0,
        }
    }
}

impl SvmSettings {
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
        if let LrSchedule::Plateau { factor, patience } = self.schedule {
            if !(factor > 0.0 && factor < 1.0) || patience == 0 {
                return Err(Error::InvalidParameter(
                    "plateau schedule needs 0 < factor < 1 and patience >= 1".into(),
                ));
            }
        }
        if let LrSchedule::InverseTime { offset } = self.schedule {
            if !self.c.is_finite() || !(offset >= 0.0) {
                return Err(Error::InvalidParameter(
                    "inverse-time schedule needs a finite C and offset >= 0".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmEpoch {
    pub epoch: usize,
    pub objective: f64,
    pub train_accuracy: f64,
    pub alpha: f64,
}

/// Stateful primal trainer, one epoch per [`SvmTrainer::run_epoch`].
#[derive(Debug, Clone)]
pub struct SvmTrainer {
    model: LinearModel,
    settings: SvmSettings,
    w_step: Stepper,
    b_step: Stepper,
    shuffler: Shuffler,
    alpha: f64,
    best: Option<(f64, LinearModel)>,
    since_best: usize,
    epochs_run: usize,
    steps: u64,
    /// Weighted iterate average and its weight total (inverse-time only).
    average: Option<(LinearModel, f64)>,
}

impl SvmTrainer {
    pub fn new(dim: usize, n: usize, settings: SvmSettings) -> Result<Self> {
        settings.validate()?;
        Ok(SvmTrainer {
            model: LinearModel::zeros(dim),
            w_step: Stepper::new(settings.optimizer, dim),
            b_step: Stepper::new(settings.optimizer, 1),
            shuffler: Shuffler::new(n, settings.batch_size, settings.seed),
            alpha: settings.alpha,
            settings,
            best: None,
            since_best: 0,
            epochs_run: 0,
            steps: 0,
            average: None,
        })
    }

    /// The current model; under the inverse-time schedule this is the
    /// iterate average.
    pub fn model(&self) -> &LinearModel {
        match &self.average {
            Some((avg, _)) => avg,
            None => &self.model,
        }
    }

    pub fn settings(&self) -> &SvmSettings {
        &self.settings
    }

    /// Final model: the best iterate under the plateau schedule, otherwise
    /// the last one.
    pub fn into_model(self) -> LinearModel {
        match (self.settings.schedule, self.best, self.average) {
            (LrSchedule::Plateau { .. }, Some((_, best)), _) => best,
            (LrSchedule::InverseTime { .. }, _, Some((avg, _))) => avg,
            _ => self.model,
        }
    }

    fn step_size(&self) -> f64 {
        step_size(&self.settings, self.alpha, self.steps)
    }

    pub fn run_epoch(&mut self, data: &Batch) -> Result<()> {
        let inv_c = inv_c(self.settings.c);
        for idx in self.shuffler.next_epoch() {
            let mut grad_w: Vec<f64> = self.model.w.iter().map(|w| inv_c * w).collect();
            let mut grad_b = 0.0;
            for (_, x, y) in data.select(idx).iter() {
                if 1.0 - y.sign() * self.model.decision(x) > 0.0 {
                    linalg::axpy(-y.sign(), x, &mut grad_w);
                    grad_b += y.sign();
                }
            }
            self.steps += 1;
            let lr = step_size(&self.settings, self.alpha, self.steps);
            self.w_step.step(&mut self.model.w, &grad_w, lr);
            if self.settings.fit_bias {
                let mut b = [self.model.bias];
                self.b_step.step(&mut b, &[grad_b], lr);
                self.model.bias = b[0];
            }
            if matches!(self.settings.schedule, LrSchedule::InverseTime { .. }) {
                update_average(&mut self.average, &self.model, self.steps);
            }
            if !linalg::all_finite(&self.model.w) || !self.model.bias.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("svm primal step (alpha = {})", self.alpha),
                });
            }
        }
        self.epochs_run += 1;
        Ok(())
    }

    /// Records the epoch and applies the learning-rate schedule.
    pub fn record(&mut self, data: &Batch) -> Result<SvmEpoch> {
        let objective = svm_primal_loss(self.model(), data, self.settings.c)?;
        let record = SvmEpoch {
            epoch: self.epochs_run,
            objective,
            train_accuracy: svm_accuracy(self.model(), data),
            alpha: self.step_size(),
        };
        if let LrSchedule::Plateau { factor, patience } = self.settings.schedule {
            match &self.best {
                Some((best, _)) if objective >= *best => {
                    self.since_best += 1;
                    if self.since_best >= patience {
                        self.alpha *= factor;
                        self.model = self.best.as_ref().unwrap().1.clone();
                        self.since_best = 0;
                    }
                }
                _ => {
                    self.best = Some((objective, self.model.clone()));
                    self.since_best = 0;
                }
            }
        }
        Ok(record)
    }
}

fn step_size(settings: &SvmSettings, alpha: f64, steps: u64) -> f64 {
    match settings.schedule {
        LrSchedule::InverseTime { offset } => alpha * settings.c / (steps as f64 + offset),
        _ => alpha,
    }
}

/// Folds iterate `t = steps` into the `t`-weighted running average.
fn update_average(average: &mut Option<(LinearModel, f64)>, model: &LinearModel, steps: u64) {
    let t = steps as f64;
    let (avg, total) = average.get_or_insert_with(|| (LinearModel::zeros(model.w.len()), 0.0));
    *total += t;
    let r = t / *total;
    for (a, w) in avg.w.iter_mut().zip(&model.w) {
        *a += r * (w - *a);
    }
    avg.bias += r * (model.bias - avg.bias);
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmFit {
    pub model: LinearModel,
    pub trace: Vec<SvmEpoch>,
}

pub fn svm_fit_primal(data: &Batch, settings: &SvmSettings) -> Result<SvmFit> {
    require_both_classes(data)?;
    let mut trainer = SvmTrainer::new(data.dim(), data.len(), settings.clone())?;
    let mut trace = Vec::with_capacity(settings.epochs);
    for _ in 0..settings.epochs {
        trainer.run_epoch(data)?;
        trace.push(trainer.record(data)?);
    }
    Ok(SvmFit {
        model: trainer.into_model(),
        trace,
    })
}

pub fn svm_accuracy(model: &LinearModel, data: &Batch) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let correct = data.iter().filter(|(_, x, y)| model.predict(x) == *y).count();
    correct as f64 / data.len() as f64
}

fn require_both_classes(data: &Batch) -> Result<()> {
    let has = |l: Label| data.iter().any(|(_, _, y)| y == l);
    if !has(Label::Pos) {
        return Err(Error::EmptyClass("+1".into()));
    }
    if !has(Label::Neg) {
        return Err(Error::EmptyClass("-1".into()));
    }
    Ok(())
}

/// Result of the dual solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualCertificate {
    pub lambda: Vec<f64>,
    /// `C - lambda`
    pub eta: Vec<f64>,
    pub w_reconstructed: Vec<f64>,
    pub dual_objective: f64,
    pub primal_objective: f64,
    pub gap: f64,
    pub kkt_max_violation: f64,
    pub converged: bool,
    pub sweeps: usize,
    /// Dual objective after each sweep.
    pub sweep_objectives: Vec<f64>,
}

impl DualCertificate {
    /// One-line JSON record for logs.
    pub fn to_record(&self) -> String {
        serde_json::to_string(self).expect("certificate is always serializable")
    }
}

/// Dual objective on the `1/(2C)` scale.
pub fn dual_objective(lambda: &[f64], w: &[f64], c: f64) -> f64 {
    let sum: f64 = lambda.iter().sum();
    (sum - 0.5 * linalg::norm_sq(w)) / c
}

/// Cyclic coordinate ascent for the zero-bias dual. Each coordinate moves to
/// its unconstrained maximizer clipped to `[0, C]`; a sweep whose largest
/// change is below `tol` ends the solve.
pub fn svm_dual_solve(data: &Batch, c: f64, tol: f64, max_iter: usize) -> Result<DualCertificate> {
    let n = data.len();
    if n == 0 {
        return Err(Error::InvalidParameter("dual solve needs at least one point".into()));
    }
    if n > DUAL_MAX_POINTS {
        return Err(Error::InvalidParameter(format!(
            "dual oracle is limited to {DUAL_MAX_POINTS} points, got {n}"
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "C must be positive and finite, got {c}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }

    let points: Vec<(&[f64], f64)> = data.iter().map(|(_, x, y)| (x.as_slice(), y.sign())).collect();
    let q_diag: Vec<f64> = points.iter().map(|(x, _)| linalg::norm_sq(x)).collect();
    let mut lambda = vec![0.0; n];
    let mut w = vec![0.0; data.dim()];
    let mut sweep_objectives = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < max_iter {
        let mut max_change: f64 = 0.0;
        for i in 0..n {
            if q_diag[i] == 0.0 {
                continue;
            }
            let (x, y) = points[i];
            // gradient of the (minimization) dual in coordinate i
            let g = y * linalg::dot(&w, x) - 1.0;
            let next = (lambda[i] - g / q_diag[i]).clamp(0.0, c);
            let delta = next - lambda[i];
            if delta != 0.0 {
                linalg::axpy(delta * y, x, &mut w);
                lambda[i] = next;
                max_change = max_change.max(delta.abs());
            }
        }
        sweeps += 1;
        sweep_objectives.push(dual_objective(&lambda, &w, c));
        if max_change < tol {
            converged = true;
            break;
        }
    }

    let w_reconstructed = reconstruct_w(&lambda, data);
    let dual = dual_objective(&lambda, &w_reconstructed, c);
    let primal = svm_primal_loss(
        &LinearModel {
            w: w_reconstructed.clone(),
            bias: 0.0,
        },
        data,
        c,
    )?;
    let mut cert = DualCertificate {
        eta: lambda.iter().map(|l| c - l).collect(),
        lambda,
        w_reconstructed,
        dual_objective: dual,
        primal_objective: primal,
        gap: primal - dual,
        kkt_max_violation: 0.0,
        converged,
        sweeps,
        sweep_objectives,
    };
    cert.kkt_max_violation = check_kkt(&cert, data, c, 0.0)?.max_violation;
    Ok(cert)
}

/// `sum_i lambda_i y_i x_i` in index order.
pub fn reconstruct_w(lambda: &[f64], data: &Batch) -> Vec<f64> {
    let mut w = vec![0.0; data.dim()];
    for ((_, x, y), l) in data.iter().zip(lambda) {
        if *l != 0.0 {
            linalg::axpy(l * y.sign(), x, &mut w);
        }
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Largest of all residuals below.
    pub max_violation: f64,
    /// Largest distance of a multiplier outside `[0, C]`.
    pub box_violation: f64,
    /// `max_k |w_k - sum_i lambda_i y_i x_ik|` for the certificate's `w`.
    pub stationarity: f64,
    /// Complementary-slackness residual per point.
    pub per_point: Vec<f64>,
    pub passed: bool,
}

/// Checks box feasibility, stationarity of `w` and complementary slackness:
/// `lambda = 0` needs margin `>= 1`, `0 < lambda < C` needs margin `== 1`
/// and `lambda = C` needs margin `<= 1`. Margins use the multipliers'
/// reconstructed `w`. `passed` compares the maximum residual to `tol`.
pub fn check_kkt(cert: &DualCertificate, data: &Batch, c: f64, tol: f64) -> Result<KktReport> {
    check_len(data.len(), cert.lambda.len())?;
    check_len(data.dim(), cert.w_reconstructed.len())?;
    let w = reconstruct_w(&cert.lambda, data);
    let stationarity = w
        .iter()
        .zip(&cert.w_reconstructed)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut box_violation: f64 = 0.0;
    let mut per_point = Vec::with_capacity(data.len());
    for ((_, x, y), &l) in data.iter().zip(&cert.lambda) {
        box_violation = box_violation.max((-l).max(l - c).max(0.0));
        let m = y.sign() * linalg::dot(x, &w);
        let r = if l <= 0.0 {
            (1.0 - m).max(0.0)
        } else if l >= c {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        per_point.push(r);
    }
    let max_violation = per_point
        .iter()
        .copied()
        .fold(box_violation.max(stationarity), f64::max);
    Ok(KktReport {
        max_violation,
        box_violation,
        stationarity,
        per_point,
        passed: max_violation <= tol,
    })
}

/// Splits the reconstructed hyperplane into class prototypes:
/// `p+ = sum_{C+} lambda_i h_i`, `p- = sum_{C-} lambda_j h_j`.
pub fn prototype_decomposition(cert: &DualCertificate, data: &Batch) -> Result<PrototypePair> {
    check_len(data.len(), cert.lambda.len())?;
    let mut proto = PrototypePair::zeros(data.dim());
    for ((_, h, y), &l) in data.iter().zip(&cert.lambda) {
        let target = match y {
            Label::Pos => &mut proto.plus,
            Label::Neg => &mut proto.minus,
        };
        linalg::axpy(l, h, target);
    }
    Ok(proto)
}
