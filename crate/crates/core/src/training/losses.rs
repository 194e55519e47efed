//! Partition-gated binary cross entropy objectives and their logit gradients.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::model::{sigmoid, EPS};
use crate::sample::MentionSample;
use crate::vocab::{Partition, TypeVocabulary};

/// Dense per-type view of a sample's labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    positive: Vec<bool>,
    /// Positive labels from entity linking or head words.
    strong: Vec<bool>,
    touches: [bool; 3],
}

impl Target {
    pub fn from_sample(sample: &MentionSample, vocab: &TypeVocabulary) -> Result<Self> {
        let n = vocab.len();
        let (mut positive, mut strong) = (vec![false; n], vec![false; n]);
        let mut touches = [false; 3];
        for (label, source) in sample.label_sources() {
            let i = vocab.index_of(label).ok_or_else(|| Error::UnknownType(label.clone()))?;
            positive[i] = true;
            strong[i] = source.is_strong_weak_label();
            touches[vocab.partition_of(i) as usize] = true;
        }
        Ok(Target {
            positive,
            strong,
            touches,
        })
    }

    /// Builds a target from index lists; `strong` must be a subset of `positive`.
    pub fn from_indices(vocab: &TypeVocabulary, positive: &[usize], strong: &[usize]) -> Self {
        let n = vocab.len();
        let mut t = Target {
            positive: vec![false; n],
            strong: vec![false; n],
            touches: [false; 3],
        };
        for &i in positive {
            t.positive[i] = true;
            t.touches[vocab.partition_of(i) as usize] = true;
        }
        for &i in strong {
            debug_assert!(t.positive[i]);
            t.strong[i] = true;
        }
        t
    }

    pub fn is_positive(&self, t: usize) -> bool {
        self.positive[t]
    }

    pub fn positives(&self) -> Vec<usize> {
        (0..self.positive.len()).filter(|&i| self.positive[i]).collect()
    }

    /// 1 iff some label of the sample falls in `part`.
    pub fn touches(&self, part: Partition) -> bool {
        self.touches[part as usize]
    }

    fn len(&self) -> usize {
        self.positive.len()
    }
}

/// 1 when `labels` and `types` intersect, else 0.
pub fn partition_indicator(labels: &BTreeSet<String>, types: &BTreeSet<&str>) -> u8 {
    u8::from(labels.iter().any(|l| types.contains(l.as_str())))
}

/// Loss applied inside each gated partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// Positive EL/HEAD labels weighted by `alpha_strong`, everything else by 1.
    Weighted {
        alpha_strong: f64,
    },
    Plain,
}

impl LossKind {
    fn alpha(&self, target: &Target, t: usize) -> f64 {
        match *self {
            LossKind::Weighted { alpha_strong } if target.positive[t] && target.strong[t] => alpha_strong,
            _ => 1.0,
        }
    }
}

pub(crate) fn check_prob(t: usize, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::NumericDomain { index: t, value: p });
    }
    Ok(p.clamp(EPS, 1.0 - EPS))
}

fn check_len(target: &Target, n: usize) -> Result<()> {
    if target.len() != n {
        return Err(Error::InvalidInput(format!(
            "probability vector has length {n}, target has {}",
            target.len()
        )));
    }
    Ok(())
}

fn bce(target: &Target, p: &[f64], types: &[usize], kind: LossKind) -> Result<f64> {
    check_len(target, p.len())?;
    let mut loss = 0.0;
    for &t in types {
        let pt = check_prob(t, p[t])?;
        let ll = if target.positive[t] { pt.ln() } else { (1.0 - pt).ln() };
        loss -= kind.alpha(target, t) * ll;
    }
    Ok(loss)
}

/// `-sum_{t in types} alpha(t) [y_t log p_t + (1 - y_t) log(1 - p_t)]`
pub fn weighted_partition_bce(target: &Target, p: &[f64], types: &[usize], alpha_strong: f64) -> Result<f64> {
    bce(target, p, types, LossKind::Weighted { alpha_strong })
}

/// Unweighted binary cross entropy over `types`.
pub fn plain_bce(target: &Target, p: &[f64], types: &[usize]) -> Result<f64> {
    bce(target, p, types, LossKind::Plain)
}

/// Sum of per-partition losses, counting only partitions the sample has a label in.
pub fn partitioned_objective(target: &Target, p: &[f64], vocab: &TypeVocabulary, kind: LossKind) -> Result<f64> {
    let mut total = 0.0;
    for part in Partition::ALL {
        if target.touches(part) {
            total += bce(target, p, vocab.members(part), kind)?;
        }
    }
    Ok(total)
}

/// [`partitioned_objective`] evaluated from logits, with its gradient w.r.t. the logits.
pub fn partitioned_objective_grad(
    target: &Target,
    logits: &[f64],
    vocab: &TypeVocabulary,
    kind: LossKind,
) -> Result<(f64, Vec<f64>)> {
    check_len(target, logits.len())?;
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for part in Partition::ALL {
        if !target.touches(part) {
            continue;
        }
        for &t in vocab.members(part) {
            let p = sigmoid(logits[t]);
            let a = kind.alpha(target, t);
            let y = if target.positive[t] { 1.0 } else { 0.0 };
            loss -= a * if target.positive[t] { p.ln() } else { (1.0 - p).ln() };
            grad[t] = a * (p - y);
        }
    }
    Ok((loss, grad))
}
