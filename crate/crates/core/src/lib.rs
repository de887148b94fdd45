//! Hyperdimensional computing (HDC) classifiers trained as maximum-margin
//! linear models, together with the classic perceptron and OnlineHD
//! retraining rules and a reference linear SVM.
//!
//! A typical pipeline encodes raw features with an [`Encoder`], trains a
//! [`PrototypePair`] with [`margin::fit`] (or a K-class ensemble with
//! [`multiclass::ovo_fit`]) and predicts by comparing similarities to the
//! class prototypes.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod data;
pub mod encoding;
pub mod error;
pub mod hdc;
pub mod linalg;
pub mod margin;
pub mod model_io;
pub mod multiclass;
pub mod optim;
pub mod schedule;
pub mod svm;

pub use encoding::{normalize_l2, Encoder, EncoderKind, FeatureMap, HyperVector};
pub use error::{Error, Result};
pub use hdc::{Batch, ClassPrototypes, Label, LabeledSet, PrototypePair, SimilarityKind};
pub use margin::{LossKind, MarginConfig};
pub use multiclass::{ovo_fit, ovo_predict, BinaryModel, OvOEnsemble, TrainerConfig};
pub use optim::OptimizerKind;
pub use svm::{LinearModel, SvmSettings};
