//! Training objectives and the pretrain, fine-tune, self-train schedule.

mod losses;
mod optim;
mod pseudo;
mod trainer;

use serde::{Deserialize, Serialize};

pub use losses::{
    partition_indicator, partitioned_objective, partitioned_objective_grad, plain_bce, weighted_partition_bce,
    LossKind, Target,
};
pub use optim::Adam;
pub use pseudo::{pseudo_label_sets, self_training_grad, self_training_loss, PseudoLabels};
pub use trainer::{finetune, pretrain, self_train, teacher_probabilities, BatchSchedule, TrainConfig, TrainLog};

use crate::error::{Error, Result};
use crate::model::TypingModel;
use crate::sample::MentionSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of positive labels that came from entity linking or head words.
    pub alpha_strong: f64,
    /// Strength of the pseudo-label term during self-training.
    pub lambda: f64,
    /// Teacher confidence needed for a pseudo label (`P`).
    pub p_threshold: f64,
    /// Lower confidence accepted for types that are also weak labels (`P_w`).
    pub p_weak: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha_strong: 5.0,
            lambda: 0.01,
            p_threshold: 0.9,
            p_weak: 0.7,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_strong > 1.0 && self.alpha_strong.is_finite()) {
            return Err(Error::Config(format!(
                "alpha_strong must exceed 1, got {}",
                self.alpha_strong
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        pseudo::check_thresholds(self.p_threshold, self.p_weak)
    }
}

/// `mean_H J(x) + lambda * mean_A L_ST(x)` with pseudo labels from `teacher`.
pub fn self_training_objective(
    batch_h: &[&MentionSample],
    batch_a: &[&MentionSample],
    model: &TypingModel,
    teacher: &TypingModel,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    if batch_h.is_empty() || batch_a.is_empty() {
        return Err(Error::InvalidInput(
            "self-training objective needs non-empty batches".into(),
        ));
    }
    let vocab = model.vocab();
    let mut human = 0.0;
    for s in batch_h {
        let t = Target::from_sample(s, vocab)?;
        human += partitioned_objective(&t, &model.forward(s)?, vocab, LossKind::Plain)?;
    }
    let mut auto = 0.0;
    for s in batch_a {
        let weak = vocab.indices(s.labels())?.into_iter().collect();
        let pl = pseudo_label_sets(&teacher.forward(s)?, &weak, cfg.p_threshold, cfg.p_weak)?;
        auto += self_training_loss(&model.forward(s)?, &pl)?;
    }
    Ok(human / batch_h.len() as f64 + cfg.lambda * auto / batch_a.len() as f64)
}
