//! Per-mention pattern selection against a baseline typing model, and greedy
//! construction of the pattern list on a development set.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::eval::macro_prf_lenient;
use crate::mlm::{labels_by_pattern, labels_by_pattern_batch, MlmBackend};
use crate::patterns::HypernymPattern;
use crate::sample::MentionSample;
use crate::vocab::TypeVocabulary;

/// A model whose positive type predictions arbitrate between patterns.
pub trait Baseline: Sync {
    fn predicted_types(&self, sample: &MentionSample) -> Result<BTreeSet<String>>;
}

/// Index of the candidate with the largest intersection with `positives`;
/// ties go to the earliest candidate.
pub fn select_by_overlap(candidates: &[Vec<String>], positives: &BTreeSet<String>) -> usize {
    let mut best = (0, 0);
    for (i, c) in candidates.iter().enumerate() {
        let overlap = c.iter().filter(|t| positives.contains(*t)).count();
        if overlap > best.1 {
            best = (i, overlap);
        }
    }
    best.0
}

/// Labels from whichever pattern in `list` agrees most with the baseline.
/// With a single pattern the baseline is not consulted.
pub fn select_labels_for_mention(
    sample: &MentionSample,
    list: &[HypernymPattern],
    backend: &dyn MlmBackend,
    baseline: &dyn Baseline,
    vocab: &TypeVocabulary,
    k: usize,
    top_n: usize,
) -> Result<Vec<String>> {
    if list.is_empty() {
        return Err(Error::InvalidInput("pattern list is empty".into()));
    }
    let mut candidates = list
        .iter()
        .map(|p| labels_by_pattern(sample, p, backend, vocab, k, top_n))
        .collect::<Result<Vec<_>>>()?;
    if candidates.len() == 1 {
        return Ok(candidates.pop().expect("one candidate"));
    }
    let positives = baseline.predicted_types(sample)?;
    let i = select_by_overlap(&candidates, &positives);
    Ok(candidates.swap_remove(i))
}

/// How often each pattern won during labeling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternUsage {
    pub counts: Vec<(String, usize)>,
}

/// Labels a batch of mentions with a pattern list, batching backend calls per pattern.
pub fn label_with_pattern_list(
    samples: &[MentionSample],
    list: &[HypernymPattern],
    backend: &dyn MlmBackend,
    baseline: Option<&dyn Baseline>,
    vocab: &TypeVocabulary,
    k: usize,
    top_n: usize,
) -> Result<(Vec<Vec<String>>, PatternUsage)> {
    if list.is_empty() {
        return Err(Error::InvalidInput("pattern list is empty".into()));
    }
    let per_pattern = list
        .iter()
        .map(|p| labels_by_pattern_batch(samples, p, backend, vocab, k, top_n))
        .collect::<Result<Vec<_>>>()?;
    let winners: Vec<usize> = if list.len() == 1 {
        vec![0; samples.len()]
    } else {
        let baseline =
            baseline.ok_or_else(|| Error::Config("a baseline model is required for more than one pattern".into()))?;
        samples
            .par_iter()
            .enumerate()
            .map(|(s, sample)| {
                let positives = baseline.predicted_types(sample)?;
                let cands: Vec<Vec<String>> = per_pattern.iter().map(|c| c[s].clone()).collect();
                Ok(select_by_overlap(&cands, &positives))
            })
            .collect::<Result<_>>()?
    };
    let mut counts: Vec<(String, usize)> = list.iter().map(|p| (p.id().to_string(), 0)).collect();
    let labels = winners
        .iter()
        .enumerate()
        .map(|(s, &w)| {
            counts[w].1 += 1;
            per_pattern[w][s].clone()
        })
        .collect();
    Ok((labels, PatternUsage { counts }))
}

/// Macro F1 of generated label lists against gold sets. Mentions that received
/// no labels count against recall but are left out of the precision average.
pub fn score_labelset_f1(generated: &[Vec<String>], gold: &[BTreeSet<String>]) -> Result<f64> {
    if generated.len() != gold.len() {
        return Err(Error::InvalidInput(format!(
            "{} generated label lists for {} gold sets",
            generated.len(),
            gold.len()
        )));
    }
    let preds: Vec<BTreeSet<String>> = generated.iter().map(|g| g.iter().cloned().collect()).collect();
    Ok(macro_prf_lenient(gold, &preds)?.f1)
}

/// An ordered pattern list with the dev F1 after the seed and after each accepted addition.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternList {
    pub patterns: Vec<HypernymPattern>,
    pub delta: f64,
    pub trace: Vec<f64>,
}

/// Greedy forward selection of patterns.
///
/// The seed is the candidate with the best standalone dev F1. Each round scores
/// every remaining candidate appended to the list (labels picked per mention by
/// baseline overlap) and adds the best one if it gains more than `delta`.
#[allow(clippy::too_many_arguments)]
pub fn greedy_build_pattern_list(
    candidates: &[HypernymPattern],
    dev: &[MentionSample],
    backend: &dyn MlmBackend,
    baseline: &dyn Baseline,
    vocab: &TypeVocabulary,
    k: usize,
    top_n: usize,
    delta: f64,
) -> Result<PatternList> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate patterns".into()));
    }
    if dev.is_empty() {
        return Err(Error::InvalidInput("development set is empty".into()));
    }
    if delta.is_nan() || delta <= 0.0 {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    let gold: Vec<BTreeSet<String>> = dev.iter().map(MentionSample::label_set).collect();
    let labels = candidates
        .iter()
        .map(|p| labels_by_pattern_batch(dev, p, backend, vocab, k, top_n))
        .collect::<Result<Vec<_>>>()?;
    let positives: Vec<BTreeSet<String>> = if candidates.len() > 1 {
        dev.par_iter()
            .map(|s| baseline.predicted_types(s))
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let list_f1 = |list: &[usize]| -> Result<f64> {
        let chosen: Vec<Vec<String>> = (0..dev.len())
            .map(|s| {
                let cands: Vec<Vec<String>> = list.iter().map(|&c| labels[c][s].clone()).collect();
                let w = if list.len() == 1 {
                    0
                } else {
                    select_by_overlap(&cands, &positives[s])
                };
                cands[w].clone()
            })
            .collect();
        score_labelset_f1(&chosen, &gold)
    };

    let standalone = (0..candidates.len())
        .into_par_iter()
        .map(|c| list_f1(&[c]))
        .collect::<Result<Vec<_>>>()?;
    let seed = argmax_first(&standalone);
    let mut list = vec![seed];
    let mut trace = vec![standalone[seed]];

    loop {
        let remaining: Vec<usize> = (0..candidates.len()).filter(|c| !list.contains(c)).collect();
        if remaining.is_empty() {
            break;
        }
        let scores = remaining
            .par_iter()
            .map(|&c| {
                let mut trial = list.clone();
                trial.push(c);
                list_f1(&trial)
            })
            .collect::<Result<Vec<_>>>()?;
        let best = argmax_first(&scores);
        let current = *trace.last().expect("seeded");
        if scores[best] - current > delta {
            list.push(remaining[best]);
            trace.push(scores[best]);
        } else {
            break;
        }
    }

    Ok(PatternList {
        patterns: list.iter().map(|&c| candidates[c].clone()).collect(),
        delta,
        trace,
    })
}

fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}
