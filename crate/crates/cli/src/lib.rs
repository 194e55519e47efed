//! Subcommands of the `typelabel` pipeline executable.

pub mod commands;
pub mod config;

use clap::Subcommand;
use thiserror::Error;
use typelabel_core::Error as CoreError;

pub use commands::run;
pub use config::PipelineConfig;

/// Environment variable naming a directory for persistent backend caches.
pub const CACHE_DIR_ENV: &str = "TYPELABEL_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Label mentions with masked-LM predictions on hypernym prompts.
    GenerateLabels,
    /// Greedily choose a pattern list on a development set.
    SelectPatterns,
    /// Train a fresh model on automatically labeled data.
    Pretrain,
    /// Fine-tune a pretrained model on human-annotated data.
    Finetune,
    /// Self-train with the fine-tuned model as teacher.
    Selftrain,
    /// Score a model on a labeled test file.
    Evaluate,
    /// Attach hierarchical type paths through a word-to-type mapping.
    MapTypes,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GenerateLabels => "generate-labels",
            Command::SelectPatterns => "select-patterns",
            Command::Pretrain => "pretrain",
            Command::Finetune => "finetune",
            Command::Selftrain => "selftrain",
            Command::Evaluate => "evaluate",
            Command::MapTypes => "map-types",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// 2 for configuration and input problems, 1 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                CoreError::Backend { .. } | CoreError::NumericDomain { .. } | CoreError::Io { .. } => 1,
                _ => 2,
            },
        }
    }
}
