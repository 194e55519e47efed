//! Mention samples, label provenance, and the line-delimited sample format.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MentionKind {
    Named,
    Pronoun,
    Nominal,
}

impl MentionKind {
    pub const ALL: [MentionKind; 3] = [MentionKind::Named, MentionKind::Pronoun, MentionKind::Nominal];

    pub fn as_str(self) -> &'static str {
        match self {
            MentionKind::Named => "NAMED",
            MentionKind::Pronoun => "PRONOUN",
            MentionKind::Nominal => "NOMINAL",
        }
    }
}

/// Where a label came from. Variants are ordered weakest to strongest, so
/// `max` picks the provenance that survives a merge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Provenance {
    Mlm,
    Head,
    El,
    Human,
}

impl Provenance {
    /// Entity-linking and head-word labels get the boosted loss weight.
    pub fn is_strong_weak_label(self) -> bool {
        matches!(self, Provenance::El | Provenance::Head)
    }
}

/// A mention in its sentence together with its provenance-tagged labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MentionSample {
    pub left_context: Vec<String>,
    mention_tokens: Vec<String>,
    pub right_context: Vec<String>,
    pub mention_kind: MentionKind,
    labels: BTreeMap<String, Provenance>,
}

impl MentionSample {
    pub fn new(
        left_context: Vec<String>,
        mention_tokens: Vec<String>,
        right_context: Vec<String>,
        mention_kind: MentionKind,
    ) -> Result<Self> {
        if mention_tokens.is_empty() {
            return Err(Error::InvalidInput("mention_tokens must be non-empty".into()));
        }
        Ok(MentionSample {
            left_context,
            mention_tokens,
            right_context,
            mention_kind,
            labels: BTreeMap::new(),
        })
    }

    /// Convenience constructor from whitespace-separated strings.
    pub fn from_text(left: &str, mention: &str, right: &str, kind: MentionKind) -> Result<Self> {
        let split = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
        Self::new(split(left), split(mention), split(right), kind)
    }

    pub fn with_label(mut self, label: impl Into<String>, source: Provenance) -> Self {
        self.add_label(label, source);
        self
    }

    /// Adds a label; if already present the stronger provenance is kept.
    pub fn add_label(&mut self, label: impl Into<String>, source: Provenance) {
        self.labels
            .entry(label.into())
            .and_modify(|p| *p = (*p).max(source))
            .or_insert(source);
    }

    pub fn clear_labels(&mut self) {
        self.labels.clear();
    }

    pub fn mention_tokens(&self) -> &[String] {
        &self.mention_tokens
    }

    pub fn labels(&self) -> impl Iterator<Item = &String> + '_ {
        self.labels.keys()
    }

    pub fn label_set(&self) -> BTreeSet<String> {
        self.labels.keys().cloned().collect()
    }

    pub fn label_sources(&self) -> &BTreeMap<String, Provenance> {
        &self.labels
    }

    pub fn provenance(&self, label: &str) -> Option<Provenance> {
        self.labels.get(label).copied()
    }

    pub fn has_labels(&self) -> bool {
        !self.labels.is_empty()
    }

    pub fn mention_start(&self) -> usize {
        self.left_context.len()
    }

    pub fn mention_end(&self) -> usize {
        self.left_context.len() + self.mention_tokens.len()
    }

    /// left_context ++ mention_tokens ++ right_context
    pub fn sentence(&self) -> Vec<String> {
        let mut s = Vec::with_capacity(self.mention_end() + self.right_context.len());
        s.extend_from_slice(&self.left_context);
        s.extend_from_slice(&self.mention_tokens);
        s.extend_from_slice(&self.right_context);
        s
    }

    pub fn mention_text(&self) -> String {
        self.mention_tokens.join(" ")
    }
}

/// Adds MLM-derived labels to a sample. Existing labels keep their provenance;
/// pronoun samples carry MLM labels only.
pub fn merge_label_sources<I, S>(sample: &MentionSample, mlm_labels: I) -> MentionSample
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let mut out = sample.clone();
    if out.mention_kind == MentionKind::Pronoun {
        out.labels.retain(|_, p| *p == Provenance::Mlm);
    }
    for t in mlm_labels {
        out.add_label(t, Provenance::Mlm);
    }
    out
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    left_context: Vec<String>,
    mention_tokens: Vec<String>,
    right_context: Vec<String>,
    mention_kind: MentionKind,
    labels: Vec<String>,
    label_sources: BTreeMap<String, Provenance>,
}

impl From<&MentionSample> for SampleRecord {
    fn from(s: &MentionSample) -> Self {
        SampleRecord {
            left_context: s.left_context.clone(),
            mention_tokens: s.mention_tokens.clone(),
            right_context: s.right_context.clone(),
            mention_kind: s.mention_kind,
            labels: s.labels.keys().cloned().collect(),
            label_sources: s.labels.clone(),
        }
    }
}

impl SampleRecord {
    fn into_sample(self) -> std::result::Result<MentionSample, String> {
        if self.mention_tokens.is_empty() {
            return Err("field `mention_tokens` must be non-empty".into());
        }
        let labels: BTreeSet<&String> = self.labels.iter().collect();
        if labels.len() != self.labels.len() {
            return Err("field `labels` contains duplicates".into());
        }
        if let Some(l) = labels.iter().find(|l| !self.label_sources.contains_key(**l)) {
            return Err(format!("label `{l}` has no entry in `label_sources`"));
        }
        if let Some(l) = self.label_sources.keys().find(|l| !labels.contains(l)) {
            return Err(format!("`label_sources` entry `{l}` is not in `labels`"));
        }
        Ok(MentionSample {
            left_context: self.left_context,
            mention_tokens: self.mention_tokens,
            right_context: self.right_context,
            mention_kind: self.mention_kind,
            labels: self.label_sources,
        })
    }
}

/// Parses one record; `line` is used for error reporting only.
pub fn parse_sample(text: &str, line: usize) -> Result<MentionSample> {
    let record: SampleRecord = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        message: e.to_string(),
    })?;
    record.into_sample().map_err(|message| Error::Parse { line, message })
}

pub fn sample_to_line(sample: &MentionSample) -> String {
    serde_json::to_string(&SampleRecord::from(sample)).expect("sample record serializes")
}

/// Iterator over the records of a sample file, in file order. Blank lines are skipped.
pub struct SampleReader<R> {
    lines: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> SampleReader<R> {
    pub fn new(reader: R) -> Self {
        SampleReader {
            lines: reader.lines(),
            line: 0,
        }
    }
}

impl<R: BufRead> Iterator for SampleReader<R> {
    type Item = Result<MentionSample>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let text = match self.lines.next()? {
                Ok(t) => t,
                Err(e) => {
                    return Some(Err(Error::Parse {
                        line: self.line + 1,
                        message: e.to_string(),
                    }))
                }
            };
            self.line += 1;
            if text.trim().is_empty() {
                continue;
            }
            return Some(parse_sample(&text, self.line));
        }
    }
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<SampleReader<BufReader<File>>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(SampleReader::new(BufReader::new(f)))
}

pub fn read_all_samples(path: impl AsRef<Path>) -> Result<Vec<MentionSample>> {
    read_samples(path)?.collect()
}

pub fn write_samples<'a, I>(path: impl AsRef<Path>, samples: I) -> Result<usize>
where
    I: IntoIterator<Item = &'a MentionSample>,
{
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let mut n = 0;
    for s in samples {
        writeln!(w, "{}", sample_to_line(s)).map_err(|e| Error::io(path, e))?;
        n += 1;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}
