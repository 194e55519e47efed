//! Entity-typing metrics: macro/micro precision-recall-F1 and strict accuracy.
//!
//! Macro F1 is the harmonic mean of the macro-averaged precision and recall,
//! not the mean of per-instance F1 scores.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sample::{MentionKind, MentionSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

impl Prf {
    fn new(p: f64, r: f64) -> Self {
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        Prf { p, r, f1 }
    }
}

fn check(golds: &[BTreeSet<String>], preds: &[BTreeSet<String>], allow_empty_pred: bool) -> Result<()> {
    if golds.len() != preds.len() {
        return Err(Error::InvalidInput(format!(
            "{} gold sets but {} predictions",
            golds.len(),
            preds.len()
        )));
    }
    if golds.is_empty() {
        return Err(Error::InvalidInput("metrics over an empty corpus are undefined".into()));
    }
    if let Some(i) = golds.iter().position(BTreeSet::is_empty) {
        return Err(Error::InvalidInput(format!("instance {i} has no gold labels")));
    }
    if !allow_empty_pred {
        if let Some(i) = preds.iter().position(BTreeSet::is_empty) {
            return Err(Error::InvalidInput(format!("instance {i} has an empty prediction")));
        }
    }
    Ok(())
}

fn hits(gold: &BTreeSet<String>, pred: &BTreeSet<String>) -> usize {
    pred.intersection(gold).count()
}

/// Per-instance precision and recall averaged over instances.
pub fn macro_prf(golds: &[BTreeSet<String>], preds: &[BTreeSet<String>]) -> Result<Prf> {
    check(golds, preds, false)?;
    macro_inner(golds, preds)
}

/// Like [`macro_prf`] but tolerates empty predictions: they add zero recall and
/// are excluded from the precision average.
pub fn macro_prf_lenient(golds: &[BTreeSet<String>], preds: &[BTreeSet<String>]) -> Result<Prf> {
    check(golds, preds, true)?;
    macro_inner(golds, preds)
}

fn macro_inner(golds: &[BTreeSet<String>], preds: &[BTreeSet<String>]) -> Result<Prf> {
    let (mut p_sum, mut p_count, mut r_sum) = (0.0, 0usize, 0.0);
    for (g, p) in golds.iter().zip(preds) {
        let h = hits(g, p) as f64;
        if !p.is_empty() {
            p_sum += h / p.len() as f64;
            p_count += 1;
        }
        r_sum += h / g.len() as f64;
    }
    let p = if p_count > 0 { p_sum / p_count as f64 } else { 0.0 };
    Ok(Prf::new(p, r_sum / golds.len() as f64))
}

/// Precision and recall from true/false positives pooled over the corpus.
pub fn micro_prf(golds: &[BTreeSet<String>], preds: &[BTreeSet<String>]) -> Result<Prf> {
    check(golds, preds, false)?;
    let (mut tp, mut n_pred, mut n_gold) = (0usize, 0usize, 0usize);
    for (g, p) in golds.iter().zip(preds) {
        tp += hits(g, p);
        n_pred += p.len();
        n_gold += g.len();
    }
    Ok(Prf::new(tp as f64 / n_pred as f64, tp as f64 / n_gold as f64))
}

/// Fraction of instances predicted exactly.
pub fn strict_accuracy(golds: &[BTreeSet<String>], preds: &[BTreeSet<String>]) -> Result<f64> {
    check(golds, preds, false)?;
    let exact = golds.iter().zip(preds).filter(|(g, p)| g == p).count();
    Ok(exact as f64 / golds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub macro_p: f64,
    pub macro_r: f64,
    pub macro_f1: f64,
    pub micro_p: f64,
    pub micro_r: f64,
    pub micro_f1: f64,
    pub strict_acc: f64,
    /// Macro metrics per mention kind; kinds without samples are omitted.
    pub per_kind: BTreeMap<MentionKind, Prf>,
}

impl EvalReport {
    pub fn compute(golds: &[BTreeSet<String>], preds: &[BTreeSet<String>]) -> Result<Self> {
        let ma = macro_prf(golds, preds)?;
        let mi = micro_prf(golds, preds)?;
        Ok(EvalReport {
            count: golds.len(),
            macro_p: ma.p,
            macro_r: ma.r,
            macro_f1: ma.f1,
            micro_p: mi.p,
            micro_r: mi.r,
            micro_f1: mi.f1,
            strict_acc: strict_accuracy(golds, preds)?,
            per_kind: BTreeMap::new(),
        })
    }

    /// Flat `key=value` lines for scripting.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "count={}", self.count);
        for (k, v) in [
            ("macro_p", self.macro_p),
            ("macro_r", self.macro_r),
            ("macro_f1", self.macro_f1),
            ("micro_p", self.micro_p),
            ("micro_r", self.micro_r),
            ("micro_f1", self.micro_f1),
            ("strict_acc", self.strict_acc),
        ] {
            let _ = writeln!(s, "{k}={v:.6}");
        }
        for (kind, prf) in &self.per_kind {
            let name = kind.as_str().to_lowercase();
            let _ = writeln!(s, "{name}.macro_p={:.6}", prf.p);
            let _ = writeln!(s, "{name}.macro_r={:.6}", prf.r);
            let _ = writeln!(s, "{name}.macro_f1={:.6}", prf.f1);
        }
        s
    }

    /// Human-readable table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "instances: {}", self.count);
        let _ = writeln!(s, "{:<10} {:>8} {:>8} {:>8}", "", "P", "R", "F1");
        let _ = writeln!(
            s,
            "{:<10} {:>8.2} {:>8.2} {:>8.2}",
            "macro",
            100.0 * self.macro_p,
            100.0 * self.macro_r,
            100.0 * self.macro_f1
        );
        let _ = writeln!(
            s,
            "{:<10} {:>8.2} {:>8.2} {:>8.2}",
            "micro",
            100.0 * self.micro_p,
            100.0 * self.micro_r,
            100.0 * self.micro_f1
        );
        for (kind, prf) in &self.per_kind {
            let _ = writeln!(
                s,
                "{:<10} {:>8.2} {:>8.2} {:>8.2}",
                kind.as_str().to_lowercase(),
                100.0 * prf.p,
                100.0 * prf.r,
                100.0 * prf.f1
            );
        }
        let _ = writeln!(s, "strict accuracy: {:.2}", 100.0 * self.strict_acc);
        s
    }
}

/// Overall metrics plus a macro breakdown by mention kind. Gold sets are the
/// samples' labels.
pub fn evaluate_by_kind(samples: &[MentionSample], preds: &[BTreeSet<String>]) -> Result<EvalReport> {
    let golds: Vec<BTreeSet<String>> = samples.iter().map(MentionSample::label_set).collect();
    let mut report = EvalReport::compute(&golds, preds)?;
    for kind in MentionKind::ALL {
        let (g, p): (Vec<_>, Vec<_>) = samples
            .iter()
            .zip(golds.iter().zip(preds))
            .filter(|(s, _)| s.mention_kind == kind)
            .map(|(_, (g, p))| (g.clone(), p.clone()))
            .unzip();
        if !g.is_empty() {
            report.per_kind.insert(kind, macro_prf(&g, &p)?);
        }
    }
    Ok(report)
}
