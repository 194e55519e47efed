//! Teacher-thresholded pseudo labels and the loss restricted to them.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::sigmoid;

use super::losses::check_prob;

/// Type indices the teacher is confident about.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PseudoLabels {
    pub positives: BTreeSet<usize>,
    pub negatives: BTreeSet<usize>,
}

impl PseudoLabels {
    pub fn is_empty(&self) -> bool {
        self.positives.is_empty() && self.negatives.is_empty()
    }

    fn check_disjoint(&self) -> Result<()> {
        if let Some(t) = self.positives.intersection(&self.negatives).next() {
            return Err(Error::InvalidInput(format!(
                "type {t} is both a pseudo positive and negative"
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_thresholds(p: f64, p_weak: f64) -> Result<()> {
    if !(p > 0.5 && p <= 1.0) {
        return Err(Error::Config(format!("P must lie in (0.5, 1], got {p}")));
    }
    if !(p_weak > 0.0 && p_weak <= p) {
        return Err(Error::Config(format!("P_w must lie in (0, P], got {p_weak}")));
    }
    Ok(())
}

/// `Y+ = {t : p_t > P} u {t in weak : p_t > P_w}`, `Y- = {t : p_t < 1 - P}`.
pub fn pseudo_label_sets(p_teacher: &[f64], weak: &BTreeSet<usize>, p: f64, p_weak: f64) -> Result<PseudoLabels> {
    check_thresholds(p, p_weak)?;
    let mut out = PseudoLabels::default();
    for (t, &pt) in p_teacher.iter().enumerate() {
        if pt > p || (weak.contains(&t) && pt > p_weak) {
            out.positives.insert(t);
        }
        if pt < 1.0 - p {
            out.negatives.insert(t);
        }
    }
    Ok(out)
}

/// `-sum_{Y+} log p_t - sum_{Y-} log(1 - p_t)`
pub fn self_training_loss(p_student: &[f64], pseudo: &PseudoLabels) -> Result<f64> {
    pseudo.check_disjoint()?;
    let get = |t: usize| {
        p_student
            .get(t)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("pseudo label {t} outside the probability vector")))
            .and_then(|p| check_prob(t, p))
    };
    let mut loss = 0.0;
    for &t in &pseudo.positives {
        loss -= get(t)?.ln();
    }
    for &t in &pseudo.negatives {
        loss -= (1.0 - get(t)?).ln();
    }
    Ok(loss)
}

/// [`self_training_loss`] from logits, with its gradient w.r.t. the logits.
pub fn self_training_grad(logits: &[f64], pseudo: &PseudoLabels) -> Result<(f64, Vec<f64>)> {
    pseudo.check_disjoint()?;
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for (set, y) in [(&pseudo.positives, 1.0), (&pseudo.negatives, 0.0)] {
        for &t in set {
            let z = *logits
                .get(t)
                .ok_or_else(|| Error::InvalidInput(format!("pseudo label {t} outside the logit vector")))?;
            let p = sigmoid(z);
            loss -= if y == 1.0 { p.ln() } else { (1.0 - p).ln() };
            grad[t] = p - y;
        }
    }
    Ok((loss, grad))
}
