use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use typelabel_core::fg::{annotate_unlabeled, load_mapping, mine_mapping_candidates};
use typelabel_core::mlm::{
    greedy_build_pattern_list, label_with_pattern_list, Baseline, CachedBackend, HttpBackend, MlmBackend, MockBackend,
};
use typelabel_core::model::{new_model, TypingModel};
use typelabel_core::patterns::{builtin_patterns, load_patterns, write_patterns, HypernymPattern};
use typelabel_core::pronoun::{extract_pronoun_mentions, tokenize, PronounLexicon, DEFAULT_PRONOUNS};
use typelabel_core::sample::{read_all_samples, write_samples};
use typelabel_core::training::{finetune, pretrain, self_train, TrainLog};
use typelabel_core::{eval, load_vocabulary, merge_label_sources, MentionSample, TypeVocabulary};

use crate::config::{BackendKind, PipelineConfig, RESOLVED_CONFIG};
use crate::{CliError, Command, CACHE_DIR_ENV};

type Result<T> = std::result::Result<T, CliError>;

pub const LABELED_FILE: &str = "labeled.jsonl";
pub const USAGE_FILE: &str = "pattern_usage.tsv";
pub const PATTERN_LIST_FILE: &str = "pattern_list.txt";
pub const TRACE_FILE: &str = "selection_trace.tsv";
pub const MODEL_DIR: &str = "model";
pub const REPORT_TEXT: &str = "report.txt";
pub const REPORT_KV: &str = "report.kv";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const FG_FILE: &str = "fg_labeled.jsonl";
pub const CANDIDATES_FILE: &str = "mapping_candidates.tsv";

/// Runs one stage and returns the summary printed to stdout.
pub fn run(command: Command, cfg: &PipelineConfig) -> Result<String> {
    match command {
        Command::GenerateLabels => generate_labels(cfg),
        Command::SelectPatterns => select_patterns(cfg),
        Command::Pretrain => cmd_pretrain(cfg),
        Command::Finetune => cmd_finetune(cfg),
        Command::Selftrain => cmd_selftrain(cfg),
        Command::Evaluate => evaluate(cfg),
        Command::MapTypes => map_types(cfg),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| typelabel_core::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

/// Creates the output directory and records the config that produced it.
fn prepare_output(cfg: &PipelineConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
    write_file(&dir.join(RESOLVED_CONFIG), &cfg.to_toml())?;
    Ok(dir)
}

fn vocabulary(cfg: &PipelineConfig) -> Result<Arc<TypeVocabulary>> {
    let v = cfg.require("vocab", &cfg.vocab)?;
    let g = cfg.require("general", &cfg.general)?;
    let f = cfg.require("fine", &cfg.fine)?;
    Ok(Arc::new(load_vocabulary(v, g, f)?))
}

fn patterns(cfg: &PipelineConfig) -> Result<Vec<HypernymPattern>> {
    match cfg.optional("pattern_file", &cfg.pattern_file)? {
        Some(p) => {
            let list = load_patterns(p)?;
            if list.is_empty() {
                return Err(CliError::Config(format!(
                    "pattern_file {} lists no patterns",
                    p.display()
                )));
            }
            Ok(list)
        }
        None => Ok(builtin_patterns()),
    }
}

fn cache_name(cfg: &PipelineConfig) -> String {
    let raw = format!(
        "{:?}-{}-{}",
        cfg.backend.kind,
        cfg.backend.url.as_deref().unwrap_or(""),
        cfg.backend.checkpoint.as_deref().unwrap_or("")
    );
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn backend(cfg: &PipelineConfig) -> Result<Box<dyn MlmBackend>> {
    let b = &cfg.backend;
    let inner: Box<dyn MlmBackend> = match b.kind {
        BackendKind::Mock => {
            let table = b
                .checkpoint
                .as_deref()
                .ok_or_else(|| CliError::Config("backend.checkpoint (mock table) is not set".into()))?;
            if !Path::new(table).exists() {
                return Err(CliError::Config(format!("backend.checkpoint not found: {table}")));
            }
            Box::new(MockBackend::load(table)?)
        }
        BackendKind::Http => {
            let url = b
                .url
                .clone()
                .ok_or_else(|| CliError::Config("backend.url is not set".into()))?;
            let mut h = HttpBackend::new(url, b.checkpoint.clone())?;
            if let Some(m) = &b.mask_token {
                h = h.with_mask_token(m.clone());
            }
            Box::new(h)
        }
    };
    match std::env::var_os(CACHE_DIR_ENV) {
        Some(dir) => {
            let dir = PathBuf::from(dir);
            fs::create_dir_all(&dir)
                .map_err(|e| CliError::Config(format!("cannot create cache dir {}: {e}", dir.display())))?;
            let path = dir.join(format!("{}.jsonl", cache_name(cfg)));
            log::info!("backend cache: {}", path.display());
            Ok(Box::new(CachedBackend::with_store(inner, path)?))
        }
        None => Ok(Box::new(CachedBackend::new(inner))),
    }
}

fn load_model(
    cfg: &PipelineConfig,
    key: &str,
    value: &Option<PathBuf>,
    vocab: &Arc<TypeVocabulary>,
) -> Result<TypingModel> {
    let dir = cfg.require(key, value)?;
    Ok(TypingModel::load(dir, Arc::clone(vocab))?)
}

fn samples(cfg: &PipelineConfig, key: &str, value: &Option<PathBuf>) -> Result<Vec<MentionSample>> {
    Ok(read_all_samples(cfg.require(key, value)?)?)
}

fn generate_labels(cfg: &PipelineConfig) -> Result<String> {
    let vocab = vocabulary(cfg)?;
    let list = patterns(cfg)?;
    let mut input = samples(cfg, "input", &cfg.input)?;
    if let Some(text) = cfg.optional("pronoun_text", &cfg.pronoun_text)? {
        let lexicon = match cfg.optional("pronoun_lexicon", &cfg.pronoun_lexicon)? {
            Some(p) => PronounLexicon::load(p)?,
            None => PronounLexicon::new(DEFAULT_PRONOUNS.iter().copied())?,
        };
        let raw = fs::read_to_string(text).map_err(|e| typelabel_core::Error::Io {
            path: text.to_path_buf(),
            source: e,
        })?;
        input.extend(extract_pronoun_mentions(&tokenize(&raw), &lexicon));
    }
    let baseline = if list.len() > 1 {
        Some(load_model(cfg, "baseline", &cfg.baseline, &vocab)?)
    } else {
        None
    };
    let backend = backend(cfg)?;
    let out = prepare_output(cfg)?;

    let (labels, usage) = label_with_pattern_list(
        &input,
        &list,
        &*backend,
        baseline.as_ref().map(|b| b as &dyn Baseline),
        &vocab,
        cfg.k,
        cfg.top_n,
    )?;
    let merged: Vec<MentionSample> = input
        .iter()
        .zip(labels)
        .map(|(s, l)| merge_label_sources(s, l))
        .collect();
    let n = write_samples(out.join(LABELED_FILE), &merged)?;
    let with_labels = merged.iter().filter(|s| s.has_labels()).count();

    let mut usage_tsv = String::from("pattern\tmentions\n");
    let mut summary = format!("samples={n}\nlabeled={with_labels}\n");
    for (id, count) in &usage.counts {
        let _ = writeln!(usage_tsv, "{id}\t{count}");
        let _ = writeln!(summary, "pattern[{id}]={count}");
    }
    write_file(&out.join(USAGE_FILE), &usage_tsv)?;
    Ok(summary)
}

fn select_patterns(cfg: &PipelineConfig) -> Result<String> {
    let vocab = vocabulary(cfg)?;
    let candidates = patterns(cfg)?;
    let dev = samples(cfg, "dev", &cfg.dev)?;
    let baseline = load_model(cfg, "baseline", &cfg.baseline, &vocab)?;
    let backend = backend(cfg)?;
    let out = prepare_output(cfg)?;

    let list = greedy_build_pattern_list(
        &candidates,
        &dev,
        &*backend,
        &baseline,
        &vocab,
        cfg.k,
        cfg.top_n,
        cfg.delta,
    )?;
    write_patterns(out.join(PATTERN_LIST_FILE), &list.patterns)?;
    let mut trace = String::from("step\tpattern\tdev_f1\n");
    let mut summary = String::new();
    for (i, (p, f1)) in list.patterns.iter().zip(&list.trace).enumerate() {
        let _ = writeln!(trace, "{i}\t{}\t{f1:.6}", p.to_template_string());
        let _ = writeln!(summary, "{i}: {} (dev F1 {f1:.4})", p.to_template_string());
    }
    write_file(&out.join(TRACE_FILE), &trace)?;
    Ok(summary)
}

fn finish_training(out: &Path, model: &TypingModel, log: &TrainLog) -> Result<String> {
    model.save(out.join(MODEL_DIR))?;
    log.write_tsv(out.join(format!("{}_loss.tsv", log.stage)))?;
    let mut s = format!("stage={}\nsteps_run={}\n", log.stage, log.losses.len());
    if let Some((step, loss)) = log.losses.last() {
        let _ = writeln!(s, "last_step={step}\nlast_loss={loss:.6}");
    }
    let _ = writeln!(s, "checksum={}", model.checksum());
    Ok(s)
}

fn checkpoint_root(out: &Path) -> PathBuf {
    out.join("checkpoints")
}

fn cmd_pretrain(cfg: &PipelineConfig) -> Result<String> {
    let vocab = vocabulary(cfg)?;
    let weak = samples(cfg, "weak_data", &cfg.weak_data)?;
    let out = prepare_output(cfg)?;
    let model = new_model(vocab, cfg.hidden_size, cfg.encoder.clone(), cfg.seed)?;
    let (h, log) = pretrain(
        model,
        &weak,
        &cfg.loss_config(),
        &cfg.train_config(Some(&checkpoint_root(&out))),
    )?;
    finish_training(&out, &h, &log)
}

fn cmd_finetune(cfg: &PipelineConfig) -> Result<String> {
    let vocab = vocabulary(cfg)?;
    let h = load_model(cfg, "pretrained", &cfg.pretrained, &vocab)?;
    let human = samples(cfg, "human_train", &cfg.human_train)?;
    let out = prepare_output(cfg)?;
    let (m, log) = finetune(h, &human, &cfg.train_config(Some(&checkpoint_root(&out))))?;
    finish_training(&out, &m, &log)
}

fn cmd_selftrain(cfg: &PipelineConfig) -> Result<String> {
    let vocab = vocabulary(cfg)?;
    let h = load_model(cfg, "pretrained", &cfg.pretrained, &vocab)?;
    let m = load_model(cfg, "finetuned", &cfg.finetuned, &vocab)?;
    let human = samples(cfg, "human_train", &cfg.human_train)?;
    let weak = samples(cfg, "weak_data", &cfg.weak_data)?;
    let out = prepare_output(cfg)?;
    let train = cfg.train_config(Some(&checkpoint_root(&out)));
    let (student, log) = self_train(h, &m, &human, &weak, &cfg.loss_config(), &train)?;
    finish_training(&out, &student, &log)
}

#[derive(serde::Serialize)]
struct PredictionRecord<'a> {
    mention: String,
    mention_kind: &'a str,
    gold: Vec<&'a String>,
    predicted: Vec<String>,
    probabilities: Vec<f64>,
}

fn evaluate(cfg: &PipelineConfig) -> Result<String> {
    let vocab = vocabulary(cfg)?;
    let model = load_model(cfg, "model", &cfg.model, &vocab)?;
    let test = samples(cfg, "test", &cfg.test)?;
    let out = prepare_output(cfg)?;
    let preds = test
        .iter()
        .map(|s| model.predict(s))
        .collect::<typelabel_core::Result<Vec<_>>>()?;
    let sets: Vec<_> = preds.iter().map(|p| p.type_set()).collect();
    let report = eval::evaluate_by_kind(&test, &sets)?;

    let mut lines = String::new();
    for (s, p) in test.iter().zip(preds) {
        let rec = PredictionRecord {
            mention: s.mention_text(),
            mention_kind: s.mention_kind.as_str(),
            gold: s.labels().collect(),
            predicted: p.types,
            probabilities: p.probabilities,
        };
        let _ = writeln!(lines, "{}", serde_json::to_string(&rec).expect("record serializes"));
    }
    write_file(&out.join(PREDICTIONS_FILE), &lines)?;
    write_file(&out.join(REPORT_TEXT), &report.to_text())?;
    let kv = report.to_key_values();
    write_file(&out.join(REPORT_KV), &kv)?;
    Ok(kv)
}

fn map_types(cfg: &PipelineConfig) -> Result<String> {
    let mapping = load_mapping(cfg.require("mapping", &cfg.mapping)?)?;
    let input = samples(cfg, "input", &cfg.input)?;
    let backend = backend(cfg)?;
    let out = prepare_output(cfg)?;

    let (labeled, stats) = annotate_unlabeled(&input, &*backend, &mapping)?;
    write_samples(out.join(FG_FILE), &labeled)?;
    let unlabeled: Vec<MentionSample> = input.iter().filter(|s| !s.has_labels()).cloned().collect();
    let mut tsv = String::from("word\tcount\n");
    if !unlabeled.is_empty() {
        for (w, c) in mine_mapping_candidates(&unlabeled, &*backend, 100)? {
            let _ = writeln!(tsv, "{w}\t{c}");
        }
    }
    write_file(&out.join(CANDIDATES_FILE), &tsv)?;
    let tried = stats.annotated + stats.unmapped;
    let ratio = if tried == 0 {
        0.0
    } else {
        stats.unmapped as f64 / tried as f64
    };
    Ok(format!(
        "kept={}\nannotated={}\nunmapped={}\nunmapped_ratio={ratio:.4}\n",
        stats.kept, stats.annotated, stats.unmapped
    ))
}
