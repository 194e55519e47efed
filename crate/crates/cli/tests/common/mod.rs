//! Synthetic typing task: 50 types in three tiers, class-conditioned mentions,
//! and a mock masked LM whose fills leak noisy gold types as plurals.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use typelabel_core::mlm::{MaskedPrediction, MockBackend};
use typelabel_core::patterns::{build_prompt, HypernymPattern};
use typelabel_core::sample::write_samples;
use typelabel_core::{MentionKind, MentionSample, Provenance};

pub const GENERAL: usize = 5;
pub const FINE: usize = 15;
pub const ULTRA: usize = 30;
pub const CLASSES: usize = 25;
pub const PATTERN: &str = "<H> such as <M>";

const FILLERS: &[&str] = &[
    "the", "a", "was", "seen", "near", "with", "today", "and", "reported", "by", "in", "last", "year", "said", "that",
];
const JUNK: &[&str] = &[
    "thing",
    "stuff",
    "famous",
    "others",
    "ones",
    "many",
    "example",
    "something",
];

pub fn general_name(i: usize) -> String {
    format!("gen{i}")
}

pub fn fine_name(i: usize) -> String {
    format!("fine{i:02}")
}

pub fn ultra_name(i: usize) -> String {
    format!("ultra{i:02}")
}

/// Gold types of a class: one per upper tier, two ultra-fine.
pub fn class_types(c: usize) -> Vec<String> {
    vec![
        general_name(c % GENERAL),
        fine_name(c % FINE),
        ultra_name(c % ULTRA),
        ultra_name((7 * c + 3) % ULTRA),
    ]
}

pub fn all_types() -> Vec<String> {
    (0..GENERAL)
        .map(general_name)
        .chain((0..FINE).map(fine_name))
        .chain((0..ULTRA).map(ultra_name))
        .collect()
}

fn cue(c: usize, j: usize) -> String {
    format!("cue{c}x{j}")
}

/// One mention of class `c`; `id` makes named mentions unique.
fn mention(rng: &mut ChaCha8Rng, c: usize, id: usize) -> MentionSample {
    let kind = match rng.random_range(0..10) {
        0 => MentionKind::Pronoun,
        1 | 2 => MentionKind::Nominal,
        _ => MentionKind::Named,
    };
    let head = format!("kind{c}");
    let tokens: Vec<String> = match kind {
        MentionKind::Named => vec![format!("Name{id}"), head],
        MentionKind::Nominal => vec!["the".into(), head, "of".into(), "note".into()],
        MentionKind::Pronoun => vec![["he", "it", "they"].choose(rng).expect("non-empty").to_string()],
    };
    let mut ctx: Vec<String> = (0..4)
        .map(|_| FILLERS.choose(rng).expect("non-empty").to_string())
        .collect();
    for _ in 0..3 {
        let cc = if rng.random_bool(0.1) {
            rng.random_range(0..CLASSES)
        } else {
            c
        };
        ctx.push(cue(cc, rng.random_range(0..6)));
    }
    for i in (1..ctx.len()).rev() {
        ctx.swap(i, rng.random_range(0..=i));
    }
    let split = rng.random_range(0..=ctx.len());
    let mut right = ctx.split_off(split);
    right.push(".".into());
    MentionSample::new(ctx, tokens, right, kind).expect("non-empty mention")
}

fn gold(mut s: MentionSample, c: usize) -> MentionSample {
    for t in class_types(c) {
        s.add_label(t, Provenance::Human);
    }
    s
}

/// Ranked fills for one weak mention: each gold type (as a plural) survives with
/// probability 0.85, a wrong type sneaks in with probability 0.3, and
/// out-of-vocabulary words are interleaved.
fn noisy_fill(rng: &mut ChaCha8Rng, c: usize) -> MaskedPrediction {
    let mut words: Vec<String> = class_types(c)
        .into_iter()
        .filter(|_| rng.random_bool(0.85))
        .map(|t| format!("{t}s"))
        .collect();
    if rng.random_bool(0.3) {
        let other = rng.random_range(0..CLASSES);
        words.push(format!("{}s", class_types(other)[rng.random_range(1..4)]));
    }
    for j in JUNK.choose_multiple(rng, 3) {
        words.insert(rng.random_range(0..=words.len()), j.to_string());
    }
    let n = words.len() as f64;
    MaskedPrediction::from_scores(
        words
            .into_iter()
            .enumerate()
            .map(|(i, w)| (w, 0.9 * (n - i as f64) / (n * n))),
    )
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub root: PathBuf,
    pub vocab: PathBuf,
    pub general: PathBuf,
    pub fine: PathBuf,
    pub pattern_file: PathBuf,
    pub mock_table: PathBuf,
    /// Unlabeled mentions, some carrying a head-word label.
    pub weak_input: PathBuf,
    pub human_train: PathBuf,
    pub dev: PathBuf,
}

impl Fixture {
    /// `--set` arguments shared by every stage.
    pub fn base_overrides(&self, out: &Path) -> Vec<String> {
        vec![
            format!("vocab={}", q(&self.vocab)),
            format!("general={}", q(&self.general)),
            format!("fine={}", q(&self.fine)),
            format!("pattern_file={}", q(&self.pattern_file)),
            "backend.kind=mock".into(),
            format!("backend.checkpoint={}", q(&self.mock_table)),
            format!("output_dir={}", q(out)),
        ]
    }
}

/// TOML string literal for a path.
pub fn q(p: &Path) -> String {
    format!("{:?}", p.display().to_string())
}

pub fn write_synthetic_task(root: &Path, seed: u64, n_weak: usize, n_human: usize, n_dev: usize) -> Fixture {
    fs::create_dir_all(root).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let types = all_types();
    let f = Fixture {
        root: root.to_path_buf(),
        vocab: root.join("types.txt"),
        general: root.join("general.txt"),
        fine: root.join("fine.txt"),
        pattern_file: root.join("patterns.txt"),
        mock_table: root.join("mlm_table.jsonl"),
        weak_input: root.join("weak_input.jsonl"),
        human_train: root.join("human_train.jsonl"),
        dev: root.join("dev.jsonl"),
    };
    fs::write(&f.vocab, types.join("\n") + "\n").unwrap();
    fs::write(&f.general, types[..GENERAL].join("\n") + "\n").unwrap();
    fs::write(&f.fine, types[GENERAL..GENERAL + FINE].join("\n") + "\n").unwrap();
    fs::write(&f.pattern_file, format!("{PATTERN}\n")).unwrap();

    let pattern = HypernymPattern::parse(PATTERN).unwrap();
    let mut table = MockBackend::new();
    let mut weak = Vec::with_capacity(n_weak);
    let mut id = 0;
    for i in 0..n_weak {
        let c = i % CLASSES;
        id += 1;
        let mut s = mention(&mut rng, c, id);
        if rng.random_bool(0.3) {
            s.add_label(ultra_name(c % ULTRA), Provenance::Head);
        }
        table.insert(build_prompt(&s, &pattern).text(), noisy_fill(&mut rng, c));
        weak.push(s);
    }
    table.save(&f.mock_table).unwrap();
    write_samples(&f.weak_input, &weak).unwrap();

    let mut labeled = |n: usize, rng: &mut ChaCha8Rng| -> Vec<MentionSample> {
        (0..n)
            .map(|i| {
                let c = i % CLASSES;
                id += 1;
                gold(mention(rng, c, id), c)
            })
            .collect()
    };
    let human = labeled(n_human, &mut rng);
    let dev = labeled(n_dev, &mut rng);
    write_samples(&f.human_train, &human).unwrap();
    write_samples(&f.dev, &dev).unwrap();
    f
}
