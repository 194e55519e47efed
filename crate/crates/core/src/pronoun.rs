//! String-matching extraction of pronoun mentions from raw text.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sample::{MentionKind, MentionSample};

pub const DEFAULT_PRONOUNS: &[&str] = &["he", "she", "it", "they", "him", "her", "them", "i", "we", "you"];

const SENTENCE_END: &[&str] = &[".", "!", "?"];

/// Case-insensitive pronoun lexicon.
#[derive(Debug, Clone)]
pub struct PronounLexicon {
    words: HashSet<String>,
}

impl Default for PronounLexicon {
    fn default() -> Self {
        Self::new(DEFAULT_PRONOUNS.iter().copied()).expect("default lexicon is non-empty")
    }
}

impl PronounLexicon {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let words: HashSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if words.is_empty() {
            return Err(Error::InvalidInput("pronoun lexicon is empty".into()));
        }
        Ok(PronounLexicon { words })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(text.lines())
    }

    pub fn matches(&self, token: &str) -> bool {
        self.words.contains(&token.to_lowercase())
    }
}

/// Whitespace tokenization with leading/trailing punctuation split off.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let start = chars.iter().position(|c| c.is_alphanumeric()).unwrap_or(chars.len());
        let end = chars.iter().rposition(|c| c.is_alphanumeric()).map_or(start, |i| i + 1);
        out.extend(chars[..start].iter().map(|c| c.to_string()));
        if start < end {
            out.push(chars[start..end].iter().collect());
        }
        out.extend(chars[end.max(start)..].iter().map(|c| c.to_string()));
    }
    out
}

/// Splits a token stream at sentence-final punctuation (kept with its sentence).
pub fn split_sentences(tokens: &[String]) -> Vec<&[String]> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, t) in tokens.iter().enumerate() {
        if SENTENCE_END.contains(&t.as_str()) {
            out.push(&tokens[start..=i]);
            start = i + 1;
        }
    }
    if start < tokens.len() {
        out.push(&tokens[start..]);
    }
    out
}

/// One unlabeled pronoun sample per lexicon match, with its sentence as context.
pub fn extract_pronoun_mentions(tokens: &[String], lexicon: &PronounLexicon) -> Vec<MentionSample> {
    let mut out = Vec::new();
    for sentence in split_sentences(tokens) {
        for (i, tok) in sentence.iter().enumerate() {
            if lexicon.matches(tok) {
                let sample = MentionSample::new(
                    sentence[..i].to_vec(),
                    vec![tok.clone()],
                    sentence[i + 1..].to_vec(),
                    MentionKind::Pronoun,
                )
                .expect("single-token mention");
                out.push(sample);
            }
        }
    }
    out
}
