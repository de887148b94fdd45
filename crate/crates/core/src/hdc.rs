//! Prototype-based HDC classification: class prototypes, similarity, the
//! binary decision rule and the two classic retraining rules (perceptron
//! and the squared-hinge OnlineHD form).

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::encoding::{HyperVector, NORM_EPS};
use crate::error::{check_len, Error, Result};
use crate::linalg;

/// Binary class label, `+1` or `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Pos,
    Neg,
}

impl Label {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Pos => 1.0,
            Label::Neg => -1.0,
        }
    }

    pub fn from_sign(v: i32) -> Result<Self> {
        match v {
            1 => Ok(Label::Pos),
            -1 => Ok(Label::Neg),
            other => Err(Error::InvalidParameter(format!("label must be +1 or -1, got {other}"))),
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityKind {
    #[default]
    Dot,
    Cosine,
}

/// Raw (unencoded) binary training data.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub points: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
}

impl LabeledSet {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<Label>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("labeled set must not be empty".into()));
        }
        check_len(points.len(), labels.len())?;
        let d = points[0].len();
        for p in &points {
            check_len(d, p.len())?;
        }
        Ok(LabeledSet { points, labels })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    /// Index partition by label (`C+`, `C-`).
    pub fn class_indices(&self) -> (Vec<usize>, Vec<usize>) {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (i, l) in self.labels.iter().enumerate() {
            match l {
                Label::Pos => pos.push(i),
                Label::Neg => neg.push(i),
            }
        }
        (pos, neg)
    }
}

/// A view over encoded points and their labels, optionally restricted to an
/// ordered index subset.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    points: &'a [HyperVector],
    labels: &'a [Label],
    index: Option<Cow<'a, [usize]>>,
}

impl<'a> Batch<'a> {
    pub fn new(points: &'a [HyperVector], labels: &'a [Label]) -> Result<Self> {
        check_len(points.len(), labels.len())?;
        if let Some(first) = points.first() {
            for p in points {
                check_len(first.len(), p.len())?;
            }
        }
        Ok(Batch {
            points,
            labels,
            index: None,
        })
    }

    /// The entries at positions `positions` of this batch, in that order.
    /// Positions are bounds-checked on access only.
    pub fn select<'b>(&'b self, positions: &'b [usize]) -> Batch<'b>
    where
        'a: 'b,
    {
        let index = match &self.index {
            None => Cow::Borrowed(positions),
            Some(base) => Cow::Owned(positions.iter().map(|&k| base[k]).collect()),
        };
        Batch {
            points: self.points,
            labels: self.labels,
            index: Some(index),
        }
    }

    pub fn len(&self) -> usize {
        self.index.as_ref().map_or(self.points.len(), |i| i.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Dimension of the stored points (0 if there are none).
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    /// Iterates `(source index, point, label)` in batch order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, &'a HyperVector, Label)> + '_ {
        let n = self.len();
        let points = self.points;
        let labels = self.labels;
        (0..n).map(move |k| {
            let i = self.index.as_ref().map_or(k, |idx| idx[k]);
            (i, &points[i], labels[i])
        })
    }
}

/// The two class prototypes. Their difference `w = p+ - p-` is the
/// separating hyperplane of the equivalent zero-bias linear classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypePair {
    pub(crate) plus: Vec<f64>,
    pub(crate) minus: Vec<f64>,
}

impl PrototypePair {
    pub fn new(plus: Vec<f64>, minus: Vec<f64>) -> Result<Self> {
        check_len(plus.len(), minus.len())?;
        if !linalg::all_finite(&plus) || !linalg::all_finite(&minus) {
            return Err(Error::NonFinite {
                context: "prototype construction".into(),
            });
        }
        Ok(PrototypePair { plus, minus })
    }

    pub fn zeros(dim: usize) -> Self {
        PrototypePair {
            plus: vec![0.0; dim],
            minus: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.plus.len()
    }

    pub fn plus(&self) -> &[f64] {
        &self.plus
    }

    pub fn minus(&self) -> &[f64] {
        &self.minus
    }

    pub fn get(&self, label: Label) -> &[f64] {
        match label {
            Label::Pos => &self.plus,
            Label::Neg => &self.minus,
        }
    }

    fn get_mut(&mut self, label: Label) -> &mut [f64] {
        match label {
            Label::Pos => &mut self.plus,
            Label::Neg => &mut self.minus,
        }
    }

    /// `w = p+ - p-`.
    pub fn hyperplane(&self) -> Vec<f64> {
        linalg::sub(&self.plus, &self.minus)
    }

    pub fn is_finite(&self) -> bool {
        linalg::all_finite(&self.plus) && linalg::all_finite(&self.minus)
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        check_len(self.dim(), dim)
    }
}

/// Class means of the encoded points (`a_j = 1/|C_i|`).
pub fn init_prototypes(batch: &Batch) -> Result<PrototypePair> {
    let dim = batch.dim();
    let mut sums = PrototypePair::zeros(dim);
    let (mut n_pos, mut n_neg) = (0usize, 0usize);
    for (_, h, y) in batch.iter() {
        linalg::axpy(1.0, h, sums.get_mut(y));
        match y {
            Label::Pos => n_pos += 1,
            Label::Neg => n_neg += 1,
        }
    }
    if n_pos == 0 {
        return Err(Error::EmptyClass("+1".into()));
    }
    if n_neg == 0 {
        return Err(Error::EmptyClass("-1".into()));
    }
    sums.plus.iter_mut().for_each(|v| *v /= n_pos as f64);
    sums.minus.iter_mut().for_each(|v| *v /= n_neg as f64);
    Ok(sums)
}

pub fn similarity(a: &[f64], b: &[f64], kind: SimilarityKind) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(similarity_unchecked(a, b, kind))
}

#[inline]
pub(crate) fn similarity_unchecked(a: &[f64], b: &[f64], kind: SimilarityKind) -> f64 {
    let d = linalg::dot(a, b);
    match kind {
        SimilarityKind::Dot => d,
        SimilarityKind::Cosine => {
            let na = linalg::norm(a);
            let nb = linalg::norm(b);
            if na <= NORM_EPS || nb <= NORM_EPS {
                0.0
            } else {
                d / (na * nb)
            }
        }
    }
}

/// Most similar prototype wins; an exact tie goes to `+1`.
pub fn predict_binary(proto: &PrototypePair, h: &[f64], kind: SimilarityKind) -> Result<Label> {
    proto.check_dim(h.len())?;
    Ok(predict_unchecked(proto, h, kind))
}

#[inline]
fn predict_unchecked(proto: &PrototypePair, h: &[f64], kind: SimilarityKind) -> Label {
    let s_pos = similarity_unchecked(h, &proto.plus, kind);
    let s_neg = similarity_unchecked(h, &proto.minus, kind);
    if s_pos >= s_neg {
        Label::Pos
    } else {
        Label::Neg
    }
}

/// `<h, p+ - p->`, the unsigned functional margin.
pub fn margin_score(proto: &PrototypePair, h: &[f64]) -> Result<f64> {
    proto.check_dim(h.len())?;
    Ok(margin_unchecked(proto, h))
}

#[inline]
pub(crate) fn margin_unchecked(proto: &PrototypePair, h: &[f64]) -> f64 {
    h.iter()
        .zip(proto.plus.iter().zip(&proto.minus))
        .map(|(x, (p, m))| x * (p - m))
        .sum()
}

/// One online pass of the perceptron rule: every misclassified point of
/// class `i` predicted as `j` moves `p_i += alpha h`, `p_j -= alpha h`.
/// Returns the number of mistakes.
pub fn perceptron_epoch(proto: &mut PrototypePair, batch: &Batch, alpha: f64, kind: SimilarityKind) -> Result<usize> {
    proto.check_dim(batch.dim())?;
    let mut mistakes = 0;
    for (_, h, y) in batch.iter() {
        let predicted = predict_unchecked(proto, h, kind);
        if predicted != y {
            linalg::axpy(alpha, h, proto.get_mut(y));
            linalg::axpy(-alpha, h, proto.get_mut(predicted));
            mistakes += 1;
        }
    }
    Ok(mistakes)
}

/// Per-point weight of the squared-hinge update,
/// `Delta = 2 [1 - y <h, w>]_+`.
#[inline]
pub fn squared_hinge_weight(margin: f64) -> f64 {
    2.0 * (1.0 - margin).max(0.0)
}

/// One online pass of the squared-hinge rule with the regularizer dropped.
/// Each point with `y <h, w> < 1` moves its own prototype towards `h` and
/// the other away from it, both by `alpha * Delta`. Returns the number of
/// points that triggered an update.
pub fn onlinehd_epoch(proto: &mut PrototypePair, batch: &Batch, alpha: f64) -> Result<usize> {
    proto.check_dim(batch.dim())?;
    let mut updated = 0;
    for (_, h, y) in batch.iter() {
        let m = y.sign() * margin_unchecked(proto, h);
        if 1.0 - m > 0.0 {
            let step = alpha * squared_hinge_weight(m);
            linalg::axpy(step, h, proto.get_mut(y));
            linalg::axpy(-step, h, proto.get_mut(y.opposite()));
            updated += 1;
        }
    }
    Ok(updated)
}

/// `sum_i Delta_i y_i h_i` at the current prototypes: the negative gradient
/// of the squared-hinge sum with respect to `p+` (and the gradient with
/// respect to `p-`).
pub fn squared_hinge_pull(proto: &PrototypePair, batch: &Batch) -> Result<Vec<f64>> {
    proto.check_dim(batch.dim())?;
    let mut acc = vec![0.0; proto.dim()];
    for (_, h, y) in batch.iter() {
        let m = y.sign() * margin_unchecked(proto, h);
        if 1.0 - m > 0.0 {
            linalg::axpy(y.sign() * squared_hinge_weight(m), h, &mut acc);
        }
    }
    Ok(acc)
}

/// Scales a vector to unit norm in place; near-zero vectors are untouched.
pub(crate) fn normalize_in_place(v: &mut [f64]) {
    let n = linalg::norm(v);
    if n > NORM_EPS {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Scales each prototype to unit norm. A zero prototype is left unchanged.
pub fn renormalize(proto: &mut PrototypePair) {
    normalize_in_place(&mut proto.plus);
    normalize_in_place(&mut proto.minus);
}

/// K class prototypes for the native multi-class HDC baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPrototypes {
    pub(crate) prototypes: Vec<Vec<f64>>,
}

impl ClassPrototypes {
    pub fn new(prototypes: Vec<Vec<f64>>) -> Result<Self> {
        if prototypes.len() < 2 {
            return Err(Error::InvalidParameter("need at least two classes".into()));
        }
        let d = prototypes[0].len();
        for p in &prototypes {
            check_len(d, p.len())?;
        }
        Ok(ClassPrototypes { prototypes })
    }

    /// Class means of encoded points with labels in `0..k`.
    pub fn from_means(points: &[HyperVector], labels: &[usize], k: usize) -> Result<Self> {
        check_len(points.len(), labels.len())?;
        let dim = points.first().map_or(0, |p| p.len());
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (h, &c) in points.iter().zip(labels) {
            if c >= k {
                return Err(Error::InvalidParameter(format!("label {c} outside 0..{k}")));
            }
            check_len(dim, h.len())?;
            linalg::axpy(1.0, h, &mut sums[c]);
            counts[c] += 1;
        }
        for (c, (s, n)) in sums.iter_mut().zip(&counts).enumerate() {
            if *n == 0 {
                return Err(Error::EmptyClass(c.to_string()));
            }
            s.iter_mut().for_each(|v| *v /= *n as f64);
        }
        ClassPrototypes::new(sums)
    }

    pub fn num_classes(&self) -> usize {
        self.prototypes.len()
    }

    pub fn dim(&self) -> usize {
        self.prototypes[0].len()
    }

    pub fn prototypes(&self) -> &[Vec<f64>] {
        &self.prototypes
    }

    /// Argmax similarity; ties go to the smallest class id.
    pub fn predict(&self, h: &[f64], kind: SimilarityKind) -> Result<usize> {
        check_len(self.dim(), h.len())?;
        Ok(self.predict_unchecked(h, kind))
    }

    fn predict_unchecked(&self, h: &[f64], kind: SimilarityKind) -> usize {
        let mut best = 0;
        let mut best_sim = f64::NEG_INFINITY;
        for (c, p) in self.prototypes.iter().enumerate() {
            let s = similarity_unchecked(h, p, kind);
            if s > best_sim {
                best = c;
                best_sim = s;
            }
        }
        best
    }

    /// Multi-class perceptron pass over `order`; returns the mistake count.
    pub fn perceptron_epoch(
        &mut self,
        points: &[HyperVector],
        labels: &[usize],
        order: &[usize],
        alpha: f64,
        kind: SimilarityKind,
    ) -> usize {
        let mut mistakes = 0;
        for &i in order {
            let (h, y) = (&points[i], labels[i]);
            let predicted = self.predict_unchecked(h, kind);
            if predicted != y {
                linalg::axpy(alpha, h, &mut self.prototypes[y]);
                linalg::axpy(-alpha, h, &mut self.prototypes[predicted]);
                mistakes += 1;
            }
        }
        mistakes
    }

    /// Squared-hinge pass over `order`: the true class competes with its
    /// strongest rival, so for `K = 2` this is exactly [`onlinehd_epoch`].
    pub fn onlinehd_epoch(&mut self, points: &[HyperVector], labels: &[usize], order: &[usize], alpha: f64) -> usize {
        let mut updated = 0;
        for &i in order {
            let (h, y) = (&points[i], labels[i]);
            let own = linalg::dot(h, &self.prototypes[y]);
            let mut rival = usize::MAX;
            let mut rival_sim = f64::NEG_INFINITY;
            for (c, p) in self.prototypes.iter().enumerate() {
                if c != y {
                    let s = linalg::dot(h, p);
                    if s > rival_sim {
                        rival = c;
                        rival_sim = s;
                    }
                }
            }
            let m = own - rival_sim;
            if 1.0 - m > 0.0 {
                let step = alpha * squared_hinge_weight(m);
                linalg::axpy(step, h, &mut self.prototypes[y]);
                linalg::axpy(-step, h, &mut self.prototypes[rival]);
                updated += 1;
            }
        }
        updated
    }

    pub fn renormalize(&mut self) {
        self.prototypes.iter_mut().for_each(|p| normalize_in_place(p));
    }

    pub fn is_finite(&self) -> bool {
        self.prototypes.iter().all(|p| linalg::all_finite(p))
    }
}
