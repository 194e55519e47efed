//! Weak type-label generation from masked language models and training of
//! multi-label entity typing models on the generated data.
//!
//! The pipeline:
//! 1. wrap each mention in a Hearst-style hypernym prompt ([`patterns`]),
//! 2. read hypernym candidates off a masked language model and keep the ones in
//!    the type vocabulary ([`mlm`]),
//! 3. pretrain a typing model on the weak labels, fine-tune on human labels,
//!    then self-train against the fine-tuned teacher ([`training`]),
//! 4. score predictions with macro/micro F1 and strict accuracy ([`eval`]).

pub mod error;
pub mod eval;
pub mod fg;
pub mod mlm;
pub mod model;
pub mod patterns;
pub mod pronoun;
pub mod sample;
pub mod training;
pub mod vocab;

pub use error::{Error, Result};
pub use sample::{merge_label_sources, MentionKind, MentionSample, Provenance};
pub use vocab::{load_vocabulary, Partition, TypeVocabulary};
