//! Type labels from masked-language-model predictions on hypernym prompts.

mod backend;
mod inflect;
mod select;

use std::collections::HashSet;

pub use backend::{CachedBackend, HttpBackend, MlmBackend, MockBackend, TableEntry};
pub use inflect::singularize;
pub use select::{
    greedy_build_pattern_list, label_with_pattern_list, score_labelset_f1, select_by_overlap,
    select_labels_for_mention, Baseline, PatternList, PatternUsage,
};

use crate::error::{Error, Result};
use crate::patterns::{build_prompt, HypernymPattern};
use crate::sample::MentionSample;
use crate::vocab::TypeVocabulary;

/// Labels kept per mention.
pub const DEFAULT_K: usize = 10;
/// Raw predictions fetched before vocabulary filtering.
pub const DEFAULT_TOP_N: usize = 50;
/// Minimum F1 gain for adding a pattern to the list.
pub const DEFAULT_DELTA: f64 = 0.007;

/// Ranked `(word, probability)` candidates for one mask position.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedPrediction {
    ranked: Vec<(String, f64)>,
}

impl MaskedPrediction {
    /// Requires probabilities in `[0, 1]`, non-increasing, with unique words.
    pub fn new(ranked: Vec<(String, f64)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (i, (w, p)) in ranked.iter().enumerate() {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::InvalidInput(format!("probability {p} of `{w}` outside [0, 1]")));
            }
            if i > 0 && *p > ranked[i - 1].1 {
                return Err(Error::InvalidInput(format!("predictions not sorted at `{w}`")));
            }
            if !seen.insert(w.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate predicted word `{w}`")));
            }
        }
        Ok(MaskedPrediction { ranked })
    }

    /// Sorts by descending score (stable), keeps the first occurrence of each
    /// word, and clamps scores into `[0, 1]`.
    pub fn from_scores<I: IntoIterator<Item = (String, f64)>>(scores: I) -> Self {
        let mut v: Vec<(String, f64)> = scores
            .into_iter()
            .filter(|(_, p)| !p.is_nan())
            .map(|(w, p)| (w, p.clamp(0.0, 1.0)))
            .collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1));
        let mut seen = HashSet::new();
        v.retain(|(w, _)| seen.insert(w.clone()));
        MaskedPrediction { ranked: v }
    }

    pub fn ranked(&self) -> &[(String, f64)] {
        &self.ranked
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.ranked.iter().map(|(w, _)| w.as_str())
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    pub fn truncated(&self, n: usize) -> Self {
        MaskedPrediction {
            ranked: self.ranked.iter().take(n).cloned().collect(),
        }
    }
}

/// Walks predictions in rank order, singularizing and lowercasing each word,
/// and keeps the first `k` distinct words found in the type vocabulary.
pub fn derive_type_labels(prediction: &MaskedPrediction, vocab: &TypeVocabulary, k: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(k);
    for word in prediction.words() {
        if out.len() == k {
            break;
        }
        let t = singularize(&word.to_lowercase());
        if vocab.contains(&t) && !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

fn check_depth(k: usize, top_n: usize) -> Result<()> {
    if top_n < k {
        return Err(Error::InvalidInput(format!("top_n ({top_n}) must be at least k ({k})")));
    }
    Ok(())
}

/// Labels for one mention under one pattern.
pub fn labels_by_pattern(
    sample: &MentionSample,
    pattern: &HypernymPattern,
    backend: &dyn MlmBackend,
    vocab: &TypeVocabulary,
    k: usize,
    top_n: usize,
) -> Result<Vec<String>> {
    check_depth(k, top_n)?;
    let prompt = build_prompt(sample, pattern);
    let pred = backend.fill_mask(&prompt, top_n)?;
    Ok(derive_type_labels(&pred, vocab, k))
}

/// [`labels_by_pattern`] over many mentions with one batched backend call.
pub fn labels_by_pattern_batch(
    samples: &[MentionSample],
    pattern: &HypernymPattern,
    backend: &dyn MlmBackend,
    vocab: &TypeVocabulary,
    k: usize,
    top_n: usize,
) -> Result<Vec<Vec<String>>> {
    check_depth(k, top_n)?;
    let prompts: Vec<_> = samples.iter().map(|s| build_prompt(s, pattern)).collect();
    let preds = backend.fill_mask_batch(&prompts, top_n)?;
    Ok(preds.iter().map(|p| derive_type_labels(p, vocab, k)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::patterns::builtin_patterns;
    use crate::sample::MentionKind;
    use proptest::prelude::*;

    fn pred(words: &[&str]) -> MaskedPrediction {
        MaskedPrediction::from_scores(
            words
                .iter()
                .enumerate()
                .map(|(i, w)| (w.to_string(), 0.5 / (i as f64 + 1.0))),
        )
    }

    fn vocab(types: &[&str]) -> TypeVocabulary {
        TypeVocabulary::new(types, &[], &[]).unwrap()
    }

    #[test]
    fn prediction_invariants() {
        assert!(MaskedPrediction::new(vec![("a".into(), 0.2), ("b".into(), 0.3)]).is_err());
        assert!(MaskedPrediction::new(vec![("a".into(), 0.3), ("a".into(), 0.2)]).is_err());
        assert!(MaskedPrediction::new(vec![("a".into(), 1.3)]).is_err());
        let p = MaskedPrediction::from_scores(vec![("a".into(), 0.1), ("b".into(), 0.7), ("a".into(), 0.9)]);
        assert_eq!(p.ranked(), &[("a".to_string(), 0.9), ("b".to_string(), 0.7)]);
    }

    #[test]
    fn worked_example_three_labels() {
        let v = vocab(&["person", "actor", "celebrity", "star"]);
        let p = pred(&["people", "actors", "celebrities", "famous", "actor"]);
        assert_eq!(derive_type_labels(&p, &v, 3), vec!["person", "actor", "celebrity"]);
    }

    #[test]
    fn zero_labels() {
        let v = vocab(&["person"]);
        assert!(derive_type_labels(&pred(&["people"]), &v, 0).is_empty());
    }

    #[test]
    fn duplicates_after_singularizing_are_dropped() {
        let v = vocab(&["dog", "canine"]);
        let p = pred(&["dogs", "canine", "dog", "blue"]);
        assert_eq!(derive_type_labels(&p, &v, 5), vec!["dog", "canine"]);
    }

    #[test]
    fn uppercase_predictions_are_looked_up_lowercase() {
        let v = vocab(&["actor"]);
        assert_eq!(derive_type_labels(&pred(&["Actors"]), &v, 2), vec!["actor"]);
    }

    #[test]
    fn by_pattern_with_mock() {
        let s = MentionSample::from_text("", "Tom Hanks", "smiled .", MentionKind::Named).unwrap();
        let v = vocab(&["actor", "person"]);
        let m = MockBackend::new().with_fallback(pred(&["actors"]));
        let got = labels_by_pattern(&s, &builtin_patterns()[2], &m, &v, 10, 50).unwrap();
        assert_eq!(got, vec!["actor"]);
        let m = MockBackend::new().with_fallback(pred(&["blue", "green"]));
        assert!(labels_by_pattern(&s, &builtin_patterns()[2], &m, &v, 10, 50)
            .unwrap()
            .is_empty());
        assert!(labels_by_pattern(&s, &builtin_patterns()[2], &m, &v, 10, 5).is_err());
    }

    #[test]
    fn backend_errors_carry_the_prompt() {
        let s = MentionSample::from_text("", "Tom Hanks", "smiled .", MentionKind::Named).unwrap();
        let err = labels_by_pattern(&s, &builtin_patterns()[2], &MockBackend::new(), &vocab(&["a"]), 1, 1).unwrap_err();
        assert!(err.to_string().contains("[MASK] such as Tom Hanks smiled ."));
    }

    proptest! {
        #[test]
        fn derived_labels_are_clean(
            words in proptest::collection::vec(prop_oneof![
                Just("dogs"), Just("dog"), Just("cats"), Just("Cat"), Just("people"),
                Just("person"), Just("blue"), Just("classes"), Just("class"), Just("mice")
            ], 0..15),
            k in 0usize..6,
        ) {
            let v = vocab(&["dog", "cat", "person", "class", "mouse"]);
            let p = pred(&words);
            let out = derive_type_labels(&p, &v, k);
            prop_assert!(out.len() <= k);
            prop_assert_eq!(out.iter().collect::<HashSet<_>>().len(), out.len());
            prop_assert!(out.iter().all(|t| v.contains(t)));
            // rank order: first occurrence positions are increasing
            let first: Vec<usize> = out.iter().map(|t| {
                p.words().position(|w| singularize(&w.to_lowercase()) == *t).unwrap()
            }).collect();
            prop_assert!(first.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
