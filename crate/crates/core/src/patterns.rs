//! Hearst-style hypernym patterns and single-mask prompt construction.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sample::{MentionKind, MentionSample};

pub const MASK_TOKEN: &str = "[MASK]";

/// One element of a pattern template.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PatternToken {
    Mention,
    Hypernym,
    Word(String),
}

/// A template with exactly one mention slot and one hypernym slot,
/// e.g. `<M> and any other <H>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HypernymPattern {
    id: String,
    template: Vec<PatternToken>,
    mention_pos: usize,
}

impl HypernymPattern {
    /// Parses a space-separated template. Placeholders may be spelled
    /// `<M>`/`<H>`, `⟨M⟩`/`⟨H⟩`, or bare `M`/`H`.
    pub fn parse(template: &str) -> Result<Self> {
        let tokens: Vec<PatternToken> = template
            .split_whitespace()
            .map(|t| match t {
                "<M>" | "⟨M⟩" | "M" => PatternToken::Mention,
                "<H>" | "⟨H⟩" | "H" => PatternToken::Hypernym,
                w => PatternToken::Word(w.to_string()),
            })
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(template: Vec<PatternToken>) -> Result<Self> {
        let count = |k: &PatternToken| template.iter().filter(|t| *t == k).count();
        let (m, h) = (count(&PatternToken::Mention), count(&PatternToken::Hypernym));
        if m != 1 || h != 1 {
            return Err(Error::InvalidInput(format!(
                "pattern needs exactly one mention and one hypernym slot, found {m} and {h}"
            )));
        }
        let mention_pos = template
            .iter()
            .position(|t| *t == PatternToken::Mention)
            .expect("counted above");
        let id = template
            .iter()
            .map(|t| match t {
                PatternToken::Mention => "M",
                PatternToken::Hypernym => "H",
                PatternToken::Word(w) => w.as_str(),
            })
            .collect::<Vec<_>>()
            .join(" ");
        Ok(HypernymPattern {
            id,
            template,
            mention_pos,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn template(&self) -> &[PatternToken] {
        &self.template
    }

    /// True iff the template begins with the mention slot.
    pub fn mention_leading(&self) -> bool {
        self.mention_pos == 0
    }

    /// Template in the pattern-file syntax.
    pub fn to_template_string(&self) -> String {
        self.template
            .iter()
            .map(|t| match t {
                PatternToken::Mention => "<M>",
                PatternToken::Hypernym => "<H>",
                PatternToken::Word(w) => w.as_str(),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn fragment(&self, slots: &[PatternToken], mask: &str) -> Vec<String> {
        slots
            .iter()
            .map(|t| match t {
                PatternToken::Hypernym => mask.to_string(),
                PatternToken::Word(w) => w.clone(),
                PatternToken::Mention => unreachable!("mention slot excluded from fragments"),
            })
            .collect()
    }
}

impl fmt::Display for HypernymPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// The compiled-in patterns, best first.
pub fn builtin_patterns() -> Vec<HypernymPattern> {
    [
        "<M> and any other <H>",
        "<M> and some other <H>",
        "<H> such as <M>",
        "such <H> as <M>",
        "<H> including <M>",
        "<H> especially <M>",
    ]
    .iter()
    .map(|t| HypernymPattern::parse(t).expect("builtin pattern is valid"))
    .collect()
}

/// Reads one template per line; blank lines and `#` comments are skipped.
pub fn load_patterns(path: impl AsRef<Path>) -> Result<Vec<HypernymPattern>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let p = HypernymPattern::parse(line).map_err(|e| Error::format(path, i + 1, e.to_string()))?;
        out.push(p);
    }
    Ok(out)
}

pub fn write_patterns(path: impl AsRef<Path>, patterns: &[HypernymPattern]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for p in patterns {
        text.push_str(&p.to_template_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Picks the head token of a mention.
pub trait HeadFinder: Send + Sync {
    fn head_index(&self, mention_tokens: &[String]) -> usize;
}

/// Rightmost token before the first post-modifier boundary
/// (preposition, relativizer, or comma); otherwise the last token.
#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicHeadFinder;

const HEAD_BOUNDARIES: &[&str] = &[
    "of", "in", "on", "at", "for", "from", "with", "by", "to", "that", "which", "who", ",",
];

impl HeadFinder for HeuristicHeadFinder {
    fn head_index(&self, mention_tokens: &[String]) -> usize {
        head_word_index(mention_tokens)
    }
}

pub fn head_word_index(mention_tokens: &[String]) -> usize {
    let last = mention_tokens.len().saturating_sub(1);
    match mention_tokens
        .iter()
        .position(|t| HEAD_BOUNDARIES.contains(&t.to_lowercase().as_str()))
    {
        Some(b) if b > 0 => b - 1,
        _ => last,
    }
}

/// A sentence with an inserted pattern fragment and exactly one mask token.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Prompt {
    pub tokens: Vec<String>,
    pub mask_index: usize,
    /// Positions (ascending) of the tokens that were inserted.
    pub inserted: Vec<usize>,
}

impl Prompt {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    /// Removes the inserted fragment, returning the original sentence tokens.
    pub fn strip_inserted(&self) -> Vec<String> {
        let mut ins = self.inserted.iter().peekable();
        let mut out = Vec::with_capacity(self.tokens.len() - self.inserted.len());
        for (i, t) in self.tokens.iter().enumerate() {
            if ins.peek() == Some(&&i) {
                ins.next();
            } else {
                out.push(t.clone());
            }
        }
        out
    }
}

pub fn build_prompt(sample: &MentionSample, pattern: &HypernymPattern) -> Prompt {
    build_prompt_with(sample, pattern, &HeuristicHeadFinder, MASK_TOKEN)
}

/// Template parts before the mention slot go in front of the mention and parts
/// after it go behind the mention. For nominal mentions under a mention-leading
/// pattern, the trailing part goes after the head word instead.
pub fn build_prompt_with(
    sample: &MentionSample,
    pattern: &HypernymPattern,
    heads: &dyn HeadFinder,
    mask: &str,
) -> Prompt {
    let sentence = sample.sentence();
    let (start, end) = (sample.mention_start(), sample.mention_end());
    let prefix = pattern.fragment(&pattern.template[..pattern.mention_pos], mask);
    let suffix = pattern.fragment(&pattern.template[pattern.mention_pos + 1..], mask);
    let suffix_at = if pattern.mention_leading() && sample.mention_kind == MentionKind::Nominal {
        start + heads.head_index(sample.mention_tokens()).min(end - start - 1) + 1
    } else {
        end
    };

    let mut tokens = Vec::with_capacity(sentence.len() + prefix.len() + suffix.len());
    let mut inserted = Vec::with_capacity(prefix.len() + suffix.len());
    tokens.extend_from_slice(&sentence[..start]);
    for t in prefix {
        inserted.push(tokens.len());
        tokens.push(t);
    }
    tokens.extend_from_slice(&sentence[start..suffix_at]);
    for t in suffix {
        inserted.push(tokens.len());
        tokens.push(t);
    }
    tokens.extend_from_slice(&sentence[suffix_at..]);
    let mask_index = inserted
        .iter()
        .copied()
        .find(|&i| tokens[i] == mask)
        .expect("pattern has one hypernym slot");
    Prompt {
        tokens,
        mask_index,
        inserted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn builtins_are_ordered_and_valid() {
        let ps = builtin_patterns();
        assert!(ps.len() >= 6);
        assert_eq!(ps[0].id(), "M and any other H");
        assert_eq!(ps[2].id(), "H such as M");
        assert_eq!(ps[5].id(), "H especially M");
        for p in &ps {
            let m = p.template().iter().filter(|t| **t == PatternToken::Mention).count();
            let h = p.template().iter().filter(|t| **t == PatternToken::Hypernym).count();
            assert_eq!((m, h), (1, 1));
            assert_eq!(p.mention_leading(), p.template()[0] == PatternToken::Mention);
        }
    }

    #[test]
    fn invalid_templates_are_rejected() {
        assert!(HypernymPattern::parse("<H> such as").is_err());
        assert!(HypernymPattern::parse("<M> and <H> or <H>").is_err());
        assert!(HypernymPattern::parse("⟨H⟩ like ⟨M⟩").is_ok());
    }

    #[test]
    fn head_words() {
        assert_eq!(head_word_index(&toks("the factory in Thailand")), 1);
        assert_eq!(head_word_index(&toks("a famous actor")), 2);
        assert_eq!(head_word_index(&toks("He")), 0);
        assert_eq!(head_word_index(&toks("the man , who left")), 1);
        assert_eq!(head_word_index(&toks("of mice")), 1);
    }

    #[test]
    fn such_as_before_named_mention() {
        let s = MentionSample::from_text(
            "In late 2015 ,",
            "Leonardo DiCaprio",
            "starred in The Revenant .",
            MentionKind::Named,
        )
        .unwrap();
        let p = build_prompt(&s, &HypernymPattern::parse("<H> such as <M>").unwrap());
        assert_eq!(
            p.text(),
            "In late 2015 , [MASK] such as Leonardo DiCaprio starred in The Revenant ."
        );
        assert_eq!(p.mask_index, 4);
    }

    #[test]
    fn and_any_other_after_mention() {
        let s = MentionSample::from_text(
            "benefit from some of the disruption faced by",
            "our competitors",
            ".",
            MentionKind::Named,
        )
        .unwrap();
        let p = build_prompt(&s, &builtin_patterns()[0]);
        assert!(p.text().ends_with("faced by our competitors and any other [MASK] ."));
    }

    #[test]
    fn nominal_mention_uses_head_word() {
        let s = MentionSample::from_text("", "the factory in Thailand", "closed .", MentionKind::Nominal).unwrap();
        let p = build_prompt(&s, &builtin_patterns()[1]);
        assert_eq!(p.text(), "the factory and some other [MASK] in Thailand closed .");
        // mask-leading patterns still go in front of the whole mention
        let p = build_prompt(&s, &builtin_patterns()[2]);
        assert_eq!(p.text(), "[MASK] such as the factory in Thailand closed .");
    }

    #[test]
    fn pronoun_inserts_at_right_boundary() {
        let s = MentionSample::from_text("At some clinics ,", "they", "are told", MentionKind::Pronoun).unwrap();
        let p = build_prompt(&s, &builtin_patterns()[1]);
        assert_eq!(p.text(), "At some clinics , they and some other [MASK] are told");
    }

    #[test]
    fn pattern_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.txt");
        fs::write(&path, "# catalog\n<M> or other <H>\n\n<H> like <M>\n").unwrap();
        let ps = load_patterns(&path).unwrap();
        assert_eq!(ps.len(), 2);
        write_patterns(&path, &ps).unwrap();
        assert_eq!(load_patterns(&path).unwrap(), ps);
        fs::write(&path, "<M> or other\n").unwrap();
        assert!(matches!(
            load_patterns(&path).unwrap_err(),
            Error::Format { line: 1, .. }
        ));
    }

    fn arb_case() -> impl Strategy<Value = (MentionSample, HypernymPattern)> {
        let word = "[a-z]{1,5}";
        (
            proptest::collection::vec(word, 0..6),
            proptest::collection::vec(
                prop_oneof![
                    Just("in".to_string()),
                    Just(",".to_string()),
                    word.prop_map(String::from)
                ],
                1..5,
            ),
            proptest::collection::vec(word, 0..6),
            prop_oneof![
                Just(MentionKind::Named),
                Just(MentionKind::Pronoun),
                Just(MentionKind::Nominal)
            ],
            0usize..6,
        )
            .prop_map(|(l, m, r, k, pi)| (MentionSample::new(l, m, r, k).unwrap(), builtin_patterns()[pi].clone()))
    }

    proptest! {
        #[test]
        fn prompt_round_trip((sample, pattern) in arb_case()) {
            let p = build_prompt(&sample, &pattern);
            prop_assert_eq!(p.tokens.iter().filter(|t| *t == MASK_TOKEN).count(), 1);
            prop_assert_eq!(&p.tokens[p.mask_index], MASK_TOKEN);
            prop_assert_eq!(p.strip_inserted(), sample.sentence());
            if pattern.mention_leading() {
                let boundary = if sample.mention_kind == MentionKind::Nominal {
                    sample.mention_start() + head_word_index(sample.mention_tokens()) + 1
                } else {
                    sample.mention_end()
                };
                prop_assert_eq!(p.inserted[0], boundary);
            } else {
                prop_assert_eq!(*p.inserted.last().unwrap() + 1, sample.mention_start() + p.inserted.len());
            }
        }
    }
}
