use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use typelabel_core::eval::{macro_prf, micro_prf, strict_accuracy};
use typelabel_core::fg::{annotate_unlabeled, expand_path, flat_vocabulary, TypePath, WordTypeMapping};
use typelabel_core::mlm::{label_with_pattern_list, MaskedPrediction, MockBackend};
use typelabel_core::model::{new_model, EncoderSpec, TypingModel};
use typelabel_core::patterns::{build_prompt, builtin_patterns, HypernymPattern};
use typelabel_core::training::{finetune, pretrain, LossConfig, TrainConfig};
use typelabel_core::{merge_label_sources, MentionKind, MentionSample, Provenance, TypeVocabulary};

fn pred(words: &[&str]) -> MaskedPrediction {
    MaskedPrediction::from_scores(
        words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.to_string(), 1.0 / (i as f64 + 2.0))),
    )
}

fn mention(i: usize, class: &str) -> MentionSample {
    MentionSample::from_text(
        &format!("seen with {class}cue"),
        &format!("Name{i}"),
        "today .",
        MentionKind::Named,
    )
    .unwrap()
}

fn train_cfg(steps: u64) -> TrainConfig {
    TrainConfig {
        lr: 0.05,
        batch_size: 8,
        steps,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn weak_labels_train_a_model_that_survives_save_and_load() {
    let vocab = Arc::new(
        TypeVocabulary::new(
            &["person", "place", "actor", "city"],
            &["person", "place"],
            &["actor", "city"],
        )
        .unwrap(),
    );
    let pattern = HypernymPattern::parse("<H> such as <M>").unwrap();
    let mut backend = MockBackend::new();
    let mut weak = Vec::new();
    for i in 0..40 {
        let (class, fill) = if i % 2 == 0 {
            ("act", ["actors", "people", "things"])
        } else {
            ("town", ["cities", "places", "areas"])
        };
        let s = mention(i, class);
        backend.insert(build_prompt(&s, &pattern).text(), pred(&fill));
        weak.push(s);
    }
    let (labels, usage) = label_with_pattern_list(&weak, &[pattern], &backend, None, &vocab, 10, 50).unwrap();
    assert_eq!(usage.counts, [("H such as M".to_string(), 40)]);
    assert_eq!(labels[0], ["actor", "person"]);
    assert_eq!(labels[1], ["city", "place"]);
    let weak: Vec<_> = weak
        .iter()
        .zip(labels)
        .map(|(s, l)| merge_label_sources(s, l))
        .collect();

    let model = new_model(Arc::clone(&vocab), 8, EncoderSpec::Stub { buckets: 128 }, 1).unwrap();
    let (h, log) = pretrain(model, &weak, &LossConfig::default(), &train_cfg(60)).unwrap();
    assert!(log.losses.last().unwrap().1 < log.losses[0].1);
    for s in &weak {
        assert_eq!(h.predict(s).unwrap().type_set(), s.label_set());
    }

    let dir = tempfile::tempdir().unwrap();
    h.save(dir.path()).unwrap();
    let back = TypingModel::load(dir.path(), Arc::clone(&vocab)).unwrap();
    assert_eq!(back.checksum(), h.checksum());
    let other = Arc::new(TypeVocabulary::new(&["person", "place"], &["person"], &[]).unwrap());
    assert!(TypingModel::load(dir.path(), other).is_err());
}

#[test]
fn fg_annotations_train_with_a_flat_path_vocabulary() {
    let mut mapping = WordTypeMapping::default();
    mapping
        .insert("company", "/organization/company".parse().unwrap())
        .unwrap();
    mapping
        .insert("author", "/person/artist/author".parse().unwrap())
        .unwrap();
    let pattern = typelabel_core::fg::fg_pattern();
    let mut backend = MockBackend::new();
    let mut samples = Vec::new();
    for i in 0..30 {
        let (class, top) = match i % 3 {
            0 => ("firm", "companies"),
            1 => ("book", "authors"),
            _ => ("sky", "colors"),
        };
        let s = mention(i, class);
        backend.insert(build_prompt(&s, &pattern).text(), pred(&[top]));
        samples.push(s);
    }
    samples.push(mention(99, "firm").with_label("/organization", Provenance::Human));
    let (labeled, stats) = annotate_unlabeled(&samples, &backend, &mapping).unwrap();
    assert_eq!((stats.kept, stats.annotated, stats.unmapped), (1, 20, 10));

    let paths: BTreeSet<TypePath> = mapping.type_paths().iter().flat_map(expand_path).collect();
    let vocab = Arc::new(flat_vocabulary(&paths).unwrap());
    assert_eq!(vocab.len(), 5);
    let model = new_model(Arc::clone(&vocab), 8, EncoderSpec::Stub { buckets: 128 }, 2).unwrap();
    let (m, _) = finetune(model, &labeled, &train_cfg(80)).unwrap();
    for s in labeled.iter().filter(|s| s.mention_text() != "Name99") {
        assert_eq!(m.predict(s).unwrap().type_set(), s.label_set());
    }
}

fn kind() -> impl Strategy<Value = MentionKind> {
    prop_oneof![
        Just(MentionKind::Named),
        Just(MentionKind::Nominal),
        Just(MentionKind::Pronoun)
    ]
}

fn words(min: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::sample::select(vec!["a", "the", "of", "who", ",", "Paris", "man", "big"]),
        min..6,
    )
    .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn label_sets() -> impl Strategy<Value = Vec<(BTreeSet<String>, BTreeSet<String>)>> {
    let set = prop::collection::btree_set(prop::sample::select(vec!["a", "b", "c", "d", "e"]), 1..4)
        .prop_map(|s| s.into_iter().map(String::from).collect::<BTreeSet<_>>());
    prop::collection::vec((set.clone(), set), 1..12)
}

proptest! {
    #[test]
    fn prompts_restore_the_sentence(
        left in words(0), mention in words(1), right in words(0), kind in kind(), p in 0usize..6,
    ) {
        let s = MentionSample::new(left, mention, right, kind).unwrap();
        let prompt = build_prompt(&s, &builtin_patterns()[p]);
        prop_assert_eq!(prompt.strip_inserted(), s.sentence());
        prop_assert_eq!(prompt.tokens.iter().filter(|t| *t == "[MASK]").count(), 1);
    }

    #[test]
    fn expansions_are_prefix_closed(segs in prop::collection::vec("[a-z]{1,4}", 1..6)) {
        let path: TypePath = format!("/{}", segs.join("/")).parse().unwrap();
        let all = expand_path(&path);
        prop_assert_eq!(all.len(), segs.len());
        for p in &all {
            prop_assert!(expand_path(p).is_subset(&all));
        }
    }

    #[test]
    fn metrics_are_bounded_and_perfect_on_identity(pairs in label_sets()) {
        let (golds, preds): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        for prf in [macro_prf(&golds, &preds).unwrap(), micro_prf(&golds, &preds).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&prf.p) && (0.0..=1.0).contains(&prf.r) && (0.0..=1.0).contains(&prf.f1));
        }
        prop_assert_eq!(macro_prf(&golds, &golds).unwrap().f1, 1.0);
        prop_assert_eq!(strict_accuracy(&golds, &golds).unwrap(), 1.0);
    }
}
