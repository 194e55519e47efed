//! Single-path labels for hierarchical fine-grained typing from the top MLM word.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mlm::{singularize, MlmBackend};
use crate::patterns::{build_prompt, HypernymPattern};
use crate::sample::{MentionSample, Provenance};
use crate::vocab::TypeVocabulary;

/// Hierarchical type such as `/person/artist/author`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypePath {
    segments: Vec<String>,
}

impl TypePath {
    pub fn segments(&self) -> &[String] {
        &self.segments
    }

    pub fn depth(&self) -> usize {
        self.segments.len()
    }
}

impl FromStr for TypePath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let rest = s.strip_prefix('/').ok_or_else(|| Error::Parse {
            line: 0,
            message: format!("type path `{s}` must start with `/`"),
        })?;
        let segments: Vec<String> = rest.split('/').map(str::to_string).collect();
        if segments
            .iter()
            .any(|seg| seg.is_empty() || seg.chars().any(char::is_whitespace))
        {
            return Err(Error::Parse {
                line: 0,
                message: format!("malformed type path `{s}`"),
            });
        }
        Ok(TypePath { segments })
    }
}

impl fmt::Display for TypePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for seg in &self.segments {
            write!(f, "/{seg}")?;
        }
        Ok(())
    }
}

/// Every prefix of `path`, including the path itself.
pub fn expand_path(path: &TypePath) -> BTreeSet<TypePath> {
    (1..=path.depth())
        .map(|n| TypePath {
            segments: path.segments[..n].to_vec(),
        })
        .collect()
}

fn normalize(word: &str) -> String {
    singularize(&word.trim().to_lowercase())
}

/// Free-form hypernym words mapped onto dataset type paths. Keys are stored
/// singular and lowercase, so a word and its plural share one entry.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordTypeMapping {
    entries: HashMap<String, TypePath>,
}

impl WordTypeMapping {
    pub fn insert(&mut self, word: &str, path: TypePath) -> Result<()> {
        let key = normalize(word);
        if key.is_empty() {
            return Err(Error::InvalidInput("empty mapping word".into()));
        }
        if self.entries.contains_key(&key) {
            return Err(Error::InvalidInput(format!("duplicate mapping for `{key}`")));
        }
        self.entries.insert(key, path);
        Ok(())
    }

    /// Looks up a predicted word after normalizing it.
    pub fn get(&self, word: &str) -> Option<&TypePath> {
        self.entries.get(&normalize(word))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// All paths reachable through the mapping, prefixes included.
    pub fn type_paths(&self) -> BTreeSet<TypePath> {
        self.entries.values().flat_map(expand_path).collect()
    }
}

/// Reads `word<TAB>/path` lines; blank lines and `#` comments are skipped.
pub fn load_mapping(path: impl AsRef<Path>) -> Result<WordTypeMapping> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut mapping = WordTypeMapping::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end();
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (word, type_path) = line
            .split_once('\t')
            .ok_or_else(|| Error::format(path, line_no, "expected `word<TAB>/type/path`"))?;
        let tp: TypePath = type_path.trim().parse().map_err(|e| match e {
            Error::Parse { message, .. } => Error::format(path, line_no, message),
            other => other,
        })?;
        mapping
            .insert(word, tp)
            .map_err(|e| Error::format(path, line_no, e.to_string()))?;
    }
    Ok(mapping)
}

/// The one pattern used for fine-grained annotation.
pub fn fg_pattern() -> HypernymPattern {
    HypernymPattern::parse("<M> and any other <H>").expect("valid builtin pattern")
}

fn top_word(sample: &MentionSample, backend: &dyn MlmBackend) -> Result<Option<String>> {
    let pred = backend.fill_mask(&build_prompt(sample, &fg_pattern()), 1)?;
    let word = pred.words().next().map(normalize);
    Ok(word)
}

fn lookup(mapping: &WordTypeMapping, word: Option<String>) -> Option<BTreeSet<TypePath>> {
    word.and_then(|w| mapping.get(&w).map(expand_path))
}

/// Expanded type path for the most probable hypernym word, or `None` when the
/// word is not in the mapping.
pub fn annotate_fg(
    sample: &MentionSample,
    backend: &dyn MlmBackend,
    mapping: &WordTypeMapping,
) -> Result<Option<BTreeSet<TypePath>>> {
    Ok(lookup(mapping, top_word(sample, backend)?))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FgStats {
    /// Samples that already had labels and were passed through.
    pub kept: usize,
    pub annotated: usize,
    /// Unlabeled samples whose top word had no mapping; they are dropped.
    pub unmapped: usize,
}

/// Labels every unlabeled sample whose top word maps; labeled samples pass
/// through untouched and unmapped ones are left out.
pub fn annotate_unlabeled(
    samples: &[MentionSample],
    backend: &dyn MlmBackend,
    mapping: &WordTypeMapping,
) -> Result<(Vec<MentionSample>, FgStats)> {
    let pattern = fg_pattern();
    let todo: Vec<usize> = (0..samples.len()).filter(|&i| !samples[i].has_labels()).collect();
    let prompts: Vec<_> = todo.iter().map(|&i| build_prompt(&samples[i], &pattern)).collect();
    let preds = backend.fill_mask_batch(&prompts, 1)?;
    let mut found: HashMap<usize, BTreeSet<TypePath>> = HashMap::new();
    for (&i, p) in todo.iter().zip(&preds) {
        if let Some(paths) = lookup(mapping, p.words().next().map(normalize)) {
            found.insert(i, paths);
        }
    }
    let mut stats = FgStats::default();
    let mut out = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if s.has_labels() {
            stats.kept += 1;
            out.push(s.clone());
        } else if let Some(paths) = found.remove(&i) {
            stats.annotated += 1;
            let mut s = s.clone();
            for p in paths {
                s.add_label(p.to_string(), Provenance::Mlm);
            }
            out.push(s);
        } else {
            stats.unmapped += 1;
        }
    }
    Ok((out, stats))
}

/// Top-1 words over a sample stream, most frequent first (ties alphabetical),
/// truncated to `n` entries.
pub fn mine_mapping_candidates(
    samples: &[MentionSample],
    backend: &dyn MlmBackend,
    n: usize,
) -> Result<Vec<(String, usize)>> {
    if n == 0 {
        return Err(Error::InvalidInput("candidate count must be positive".into()));
    }
    let words: Vec<Option<String>> = samples
        .par_iter()
        .map(|s| top_word(s, backend))
        .collect::<Result<_>>()?;
    let mut counts: HashMap<String, usize> = HashMap::new();
    for w in words.into_iter().flatten() {
        *counts.entry(w).or_default() += 1;
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(n);
    Ok(ranked)
}

/// Flat vocabulary over type paths. With a single tier the partitioned
/// objective reduces to plain cross entropy over all paths.
pub fn flat_vocabulary<'a, I: IntoIterator<Item = &'a TypePath>>(paths: I) -> Result<TypeVocabulary> {
    let mut names: Vec<String> = paths.into_iter().map(ToString::to_string).collect();
    names.sort();
    names.dedup();
    TypeVocabulary::new::<String>(&names, &[], &[])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlm::{MaskedPrediction, MockBackend};
    use crate::sample::MentionKind;
    use std::io::Write;

    fn tp(s: &str) -> TypePath {
        s.parse().unwrap()
    }

    fn mapping() -> WordTypeMapping {
        let mut m = WordTypeMapping::default();
        m.insert("company", tp("/organization/company")).unwrap();
        m.insert("author", tp("/person/artist/author")).unwrap();
        m.insert("writer", tp("/person/artist/author")).unwrap();
        m
    }

    fn top1(word: &str) -> MockBackend {
        MockBackend::new().with_fallback(MaskedPrediction::from_scores(vec![
            (word.to_string(), 0.6),
            ("zzz".into(), 0.1),
        ]))
    }

    fn sample() -> MentionSample {
        MentionSample::from_text("", "Acme Corp", "reported earnings .", MentionKind::Named).unwrap()
    }

    fn names(set: &BTreeSet<TypePath>) -> Vec<String> {
        set.iter().map(ToString::to_string).collect()
    }

    #[test]
    fn path_parsing() {
        assert_eq!(tp("/person/artist").segments(), ["person", "artist"]);
        assert_eq!(tp("/a/b").to_string(), "/a/b");
        for bad in ["person", "/", "/a//b", "/a/", "", "/a b"] {
            assert!(bad.parse::<TypePath>().is_err(), "{bad}");
        }
    }

    #[test]
    fn expansion() {
        assert_eq!(
            names(&expand_path(&tp("/organization/company"))),
            ["/organization", "/organization/company"]
        );
        assert_eq!(names(&expand_path(&tp("/person"))), ["/person"]);
        assert_eq!(expand_path(&tp("/person/artist/author")).len(), 3);
    }

    #[test]
    fn annotation() {
        let m = mapping();
        let got = annotate_fg(&sample(), &top1("companies"), &m).unwrap().unwrap();
        assert_eq!(names(&got), ["/organization", "/organization/company"]);
        assert!(annotate_fg(&sample(), &top1("blue"), &m).unwrap().is_none());
        let got = annotate_fg(&sample(), &top1("author"), &m).unwrap().unwrap();
        assert_eq!(names(&got), ["/person", "/person/artist", "/person/artist/author"]);
        // only the top word counts
        let second = MockBackend::new().with_fallback(MaskedPrediction::from_scores(vec![
            ("blue".into(), 0.6),
            ("company".into(), 0.3),
        ]));
        assert!(annotate_fg(&sample(), &second, &m).unwrap().is_none());
        assert!(annotate_fg(&sample(), &MockBackend::new(), &m).is_err());
    }

    #[test]
    fn prompt_uses_the_single_pattern() {
        let prompt = build_prompt(&sample(), &fg_pattern()).text();
        let b = MockBackend::new().with_entry(&prompt, MaskedPrediction::from_scores(vec![("writers".into(), 0.5)]));
        assert!(prompt.contains("Acme Corp and any other [MASK]"));
        assert_eq!(annotate_fg(&sample(), &b, &mapping()).unwrap().unwrap().len(), 3);
    }

    #[test]
    fn unlabeled_only() {
        let labeled = sample().with_label("/organization", Provenance::Human);
        let other = MentionSample::from_text("", "Blue", "is nice .", MentionKind::Named).unwrap();
        let (out, stats) = annotate_unlabeled(&[labeled.clone(), sample()], &top1("company"), &mapping()).unwrap();
        assert_eq!(out[0], labeled);
        assert_eq!(out[1].label_set().len(), 2);
        assert_eq!(
            stats,
            FgStats {
                kept: 1,
                annotated: 1,
                unmapped: 0
            }
        );
        let (out, stats) = annotate_unlabeled(&[other], &top1("blue"), &mapping()).unwrap();
        assert!(out.is_empty());
        assert_eq!(stats.unmapped, 1);
    }

    #[test]
    fn mapping_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("map.tsv");
        let mut f = fs::File::create(&p).unwrap();
        writeln!(
            f,
            "# starter\ncompany\t/organization/company\nWriters\t/person/artist/author\n"
        )
        .unwrap();
        let m = load_mapping(&p).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.get("companies").unwrap().to_string(), "/organization/company");
        assert!(m.get("writer").is_some());

        fs::write(&p, "company\t/organization/company\ncompanies\t/organization\n").unwrap();
        assert!(load_mapping(&p).unwrap_err().to_string().contains(":2:"));
        fs::write(&p, "company\torganization\n").unwrap();
        assert!(matches!(load_mapping(&p).unwrap_err(), Error::Format { line: 1, .. }));
        fs::write(&p, "company /organization\n").unwrap();
        assert!(load_mapping(&p).is_err());
    }

    #[test]
    fn shipped_starter_mapping_loads() {
        let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/fg_mapping.tsv");
        let m = load_mapping(p).unwrap();
        assert_eq!(m.get("companies").unwrap().to_string(), "/organization/company");
        assert_eq!(m.get("author").unwrap().to_string(), "/person/artist/author");
        assert_eq!(m.get("writer").unwrap().to_string(), "/person/artist/author");
    }

    #[test]
    fn mining_counts() {
        let s: Vec<MentionSample> = (0..4).map(|_| sample()).collect();
        assert_eq!(
            mine_mapping_candidates(&s, &top1("company"), 5).unwrap(),
            vec![("company".to_string(), 4)]
        );
        assert!(mine_mapping_candidates(&[], &top1("company"), 5).unwrap().is_empty());
        assert!(mine_mapping_candidates(&s, &top1("company"), 0).is_err());

        let words = ["cities", "company", "city", "team", "company", "city", "band"];
        let samples: Vec<MentionSample> = (0..words.len())
            .map(|i| MentionSample::from_text("", &format!("M{i}"), "went .", MentionKind::Named).unwrap())
            .collect();
        let mut b = MockBackend::new();
        for (s, w) in samples.iter().zip(words) {
            b = b.with_entry(
                build_prompt(s, &fg_pattern()).text(),
                MaskedPrediction::from_scores(vec![(w.to_string(), 0.5)]),
            );
        }
        let got = mine_mapping_candidates(&samples, &b, 10).unwrap();
        let mut tally: Vec<(String, usize)> = Vec::new();
        for w in words.iter().map(|w| singularize(w)) {
            match tally.iter_mut().find(|(k, _)| *k == w) {
                Some(e) => e.1 += 1,
                None => tally.push((w, 1)),
            }
        }
        for (w, c) in &tally {
            assert!(got.contains(&(w.clone(), *c)));
        }
        assert_eq!(got.len(), tally.len());
        assert_eq!(got[0], ("city".to_string(), 3));
        assert_eq!(mine_mapping_candidates(&samples, &b, 1).unwrap().len(), 1);
    }

    #[test]
    fn flat_vocab_has_one_tier() {
        let m = mapping();
        let v = flat_vocabulary(&m.type_paths()).unwrap();
        assert_eq!(v.len(), 5);
        assert!(v.contains("/person/artist"));
    }
}
