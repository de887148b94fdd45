//! Trainers for the classic HDC retraining rules, in binary (prototype
//! pair) and native multi-class (one prototype per class) form.

use serde::{Deserialize, Serialize};

use crate::encoding::HyperVector;
use crate::error::{Error, Result};
use crate::hdc::{self, Batch, ClassPrototypes, PrototypePair, SimilarityKind};
use crate::schedule::Shuffler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineRule {
    Perceptron,
    OnlineHd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub rule: BaselineRule,
    pub alpha: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub similarity: SimilarityKind,
    /// Scale every prototype to unit norm after each batch.
    pub renormalize: bool,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn new(rule: BaselineRule) -> Self {
        BaselineConfig {
            rule,
            alpha: 1e-5,
            batch_size: 1000,
            epochs: 20,
            similarity: SimilarityKind::Dot,
            renormalize: true,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidParameter(format!(
                "baseline learning rate must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        if self.rule == BaselineRule::OnlineHd && self.similarity != SimilarityKind::Dot {
            return Err(Error::InvalidParameter(
                "the onlinehd rule requires dot similarity".into(),
            ));
        }
        Ok(())
    }
}

/// Binary baseline trainer over a prototype pair.
#[derive(Debug, Clone)]
pub struct BaselineTrainer {
    proto: PrototypePair,
    config: BaselineConfig,
    shuffler: Shuffler,
    last_updates: usize,
}

impl BaselineTrainer {
    pub fn new(init: PrototypePair, config: BaselineConfig, n: usize) -> Result<Self> {
        config.validate()?;
        let mut proto = init;
        if config.renormalize {
            hdc::renormalize(&mut proto);
        }
        Ok(BaselineTrainer {
            shuffler: Shuffler::new(n, config.batch_size, config.seed),
            proto,
            config,
            last_updates: 0,
        })
    }

    pub fn prototypes(&self) -> &PrototypePair {
        &self.proto
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    /// Number of points that triggered an update in the last epoch.
    pub fn last_updates(&self) -> usize {
        self.last_updates
    }

    pub fn run_epoch(&mut self, data: &Batch) -> Result<()> {
        let mut updates = 0;
        for idx in self.shuffler.next_epoch() {
            let batch = data.select(idx);
            updates += match self.config.rule {
                BaselineRule::Perceptron => {
                    hdc::perceptron_epoch(&mut self.proto, &batch, self.config.alpha, self.config.similarity)?
                }
                BaselineRule::OnlineHd => hdc::onlinehd_epoch(&mut self.proto, &batch, self.config.alpha)?,
            };
            if self.config.renormalize {
                hdc::renormalize(&mut self.proto);
            }
        }
        if !self.proto.is_finite() {
            return Err(Error::NonFinite {
                context: "baseline retraining".into(),
            });
        }
        self.last_updates = updates;
        Ok(())
    }
}

/// Native multi-class baseline: K prototypes, argmax similarity.
#[derive(Debug, Clone)]
pub struct NativeTrainer {
    protos: ClassPrototypes,
    config: BaselineConfig,
    shuffler: Shuffler,
    last_updates: usize,
}

impl NativeTrainer {
    /// Starts from the class means of `points`.
    pub fn new(points: &[HyperVector], labels: &[usize], k: usize, config: BaselineConfig) -> Result<Self> {
        config.validate()?;
        let mut protos = ClassPrototypes::from_means(points, labels, k)?;
        if config.renormalize {
            protos.renormalize();
        }
        Ok(NativeTrainer {
            shuffler: Shuffler::new(points.len(), config.batch_size, config.seed),
            protos,
            config,
            last_updates: 0,
        })
    }

    pub fn prototypes(&self) -> &ClassPrototypes {
        &self.protos
    }

    pub fn last_updates(&self) -> usize {
        self.last_updates
    }

    pub fn run_epoch(&mut self, points: &[HyperVector], labels: &[usize]) -> Result<()> {
        let mut updates = 0;
        for idx in self.shuffler.next_epoch() {
            updates += match self.config.rule {
                BaselineRule::Perceptron => {
                    self.protos
                        .perceptron_epoch(points, labels, idx, self.config.alpha, self.config.similarity)
                }
                BaselineRule::OnlineHd => self.protos.onlinehd_epoch(points, labels, idx, self.config.alpha),
            };
            if self.config.renormalize {
                self.protos.renormalize();
            }
        }
        if !self.protos.is_finite() {
            return Err(Error::NonFinite {
                context: "multi-class baseline retraining".into(),
            });
        }
        self.last_updates = updates;
        Ok(())
    }
}
