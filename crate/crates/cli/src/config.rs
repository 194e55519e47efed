//! Pipeline configuration: one TOML file plus `key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use typelabel_core::model::EncoderSpec;
use typelabel_core::training::{LossConfig, TrainConfig};

use crate::CliError;

/// Name of the resolved config written into every output directory.
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Prompt table loaded from `checkpoint`.
    #[default]
    Mock,
    /// Fill-mask service at `url`, asked for model `checkpoint`.
    Http,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mask_token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub seed: u64,

    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub general: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fine: Option<PathBuf>,

    // label generation
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pronoun_text: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pronoun_lexicon: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern_file: Option<PathBuf>,
    pub k: usize,
    pub top_n: usize,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<PathBuf>,
    pub backend: BackendConfig,

    // data
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weak_data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub human_train: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mapping: Option<PathBuf>,

    // models
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrained: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finetuned: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    pub hidden_size: usize,
    pub encoder: EncoderSpec,

    // training
    pub alpha_strong: f64,
    pub lambda: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "P_w")]
    pub p_w: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub steps: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_dir: Option<PathBuf>,
    pub checkpoint_every: u64,
    pub resume: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let loss = LossConfig::default();
        let train = TrainConfig::default();
        PipelineConfig {
            output_dir: PathBuf::from("out"),
            seed: train.seed,
            vocab: None,
            general: None,
            fine: None,
            input: None,
            pronoun_text: None,
            pronoun_lexicon: None,
            pattern_file: None,
            k: typelabel_core::mlm::DEFAULT_K,
            top_n: typelabel_core::mlm::DEFAULT_TOP_N,
            delta: typelabel_core::mlm::DEFAULT_DELTA,
            baseline: None,
            backend: BackendConfig::default(),
            weak_data: None,
            human_train: None,
            dev: None,
            test: None,
            mapping: None,
            pretrained: None,
            finetuned: None,
            model: None,
            hidden_size: 64,
            encoder: EncoderSpec::Stub { buckets: 4096 },
            alpha_strong: loss.alpha_strong,
            lambda: loss.lambda,
            p: loss.p_threshold,
            p_w: loss.p_weak,
            lr: train.lr,
            batch_size: train.batch_size,
            steps: train.steps,
            checkpoint_dir: None,
            checkpoint_every: train.checkpoint_every,
            resume: train.resume,
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Applies `a.b.c=value`; the value is read as a TOML scalar, else as a string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), parse_value(raw.trim()));
    Ok(())
}

impl PipelineConfig {
    /// Reads the optional config file, applies overrides, and checks values.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        // defaults underneath, so `encoder.buckets=..` keeps `encoder.kind`
        let mut table = toml::Table::try_from(PipelineConfig::default()).expect("defaults serialize");
        if let Some(p) = file {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", p.display())))?;
            let from_file =
                toml::from_str::<toml::Table>(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            merge(&mut table, from_file);
        }
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: PipelineConfig = toml::Table::try_into(table).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.k == 0 {
            return Err(CliError::Config("k must be positive".into()));
        }
        if self.top_n < self.k {
            return Err(CliError::Config(format!(
                "top_n ({}) must be at least k ({})",
                self.top_n, self.k
            )));
        }
        if self.delta.is_nan() || self.delta <= 0.0 {
            return Err(CliError::Config(format!("delta must be positive, got {}", self.delta)));
        }
        if self.hidden_size == 0 {
            return Err(CliError::Config("hidden_size must be positive".into()));
        }
        self.encoder.validate()?;
        self.loss_config().validate()?;
        self.train_config(None).validate()?;
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            alpha_strong: self.alpha_strong,
            lambda: self.lambda,
            p_threshold: self.p,
            p_weak: self.p_w,
        }
    }

    /// Training settings; checkpoints go to `checkpoint_dir`, else `default_dir`.
    pub fn train_config(&self, default_dir: Option<&Path>) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            batch_size: self.batch_size,
            steps: self.steps,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
            checkpoint_dir: self
                .checkpoint_dir
                .clone()
                .or_else(|| default_dir.map(Path::to_path_buf)),
            resume: self.resume,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// An input path that must name an existing file or directory.
    pub fn require<'a>(&self, key: &str, value: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
        let p = value
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("`{key}` is not set")))?;
        if !p.exists() {
            return Err(CliError::Config(format!("{key} not found: {}", p.display())));
        }
        Ok(p)
    }

    /// Like [`Self::require`] but allows the key to be unset.
    pub fn optional<'a>(&self, key: &str, value: &'a Option<PathBuf>) -> Result<Option<&'a Path>, CliError> {
        match value {
            None => Ok(None),
            Some(_) => self.require(key, value).map(Some),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let cfg = PipelineConfig::load(None, &[]).unwrap();
        assert_eq!(cfg.k, 10);
        assert_eq!(cfg.top_n, 50);
        assert_eq!(cfg.p, 0.9);
        let text = cfg.to_toml();
        assert!(text.contains("k = 10"));
        assert!(text.contains("P_w = 0.7"));
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides() {
        let cfg = PipelineConfig::load(
            None,
            &[
                "k=3".into(),
                "vocab=/tmp/v.txt".into(),
                "backend.kind=http".into(),
                "backend.url=http://localhost:1/".into(),
                "encoder.kind=stub".into(),
                "encoder.buckets=16".into(),
                "lambda=0".into(),
                "P=0.95".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.k, 3);
        assert_eq!(cfg.vocab.as_deref(), Some(Path::new("/tmp/v.txt")));
        assert_eq!(cfg.backend.kind, BackendKind::Http);
        assert_eq!(cfg.encoder, EncoderSpec::Stub { buckets: 16 });
        assert_eq!(cfg.lambda, 0.0);
        assert_eq!(cfg.p, 0.95);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for bad in [
            "k=0",
            "top_n=5",
            "delta=0",
            "alpha_strong=1",
            "P=0.4",
            "nonsense=1",
            "k",
            "lr=-1",
        ] {
            let err = PipelineConfig::load(None, &[bad.to_string()]).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{bad}");
        }
    }

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        fs::write(
            &p,
            "k = 4\nsteps = 7\n[backend]\nkind = \"mock\"\ncheckpoint = \"t.jsonl\"\n",
        )
        .unwrap();
        let cfg = PipelineConfig::load(Some(&p), &["steps=9".into()]).unwrap();
        assert_eq!((cfg.k, cfg.steps), (4, 9));
        assert_eq!(cfg.backend.checkpoint.as_deref(), Some("t.jsonl"));
        assert!(PipelineConfig::load(Some(&dir.path().join("missing.toml")), &[]).is_err());
    }
}
