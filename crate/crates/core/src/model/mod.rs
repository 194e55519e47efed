//! Multi-label typing model: `p = sigmoid(W u)` over the pooled mention encoding `u`.

mod checkpoint;
mod encoder;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use checkpoint::{read_arrays, write_arrays};
pub use encoder::{EncoderSpec, RemoteEncoder, StubEncoder, TokenRows};

use crate::error::{Error, Result};
use crate::mlm::Baseline;
use crate::sample::MentionSample;
use crate::vocab::TypeVocabulary;

pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
/// Probabilities are kept inside `[EPS, 1 - EPS]`.
pub const EPS: f64 = 1e-7;

const CONFIG_FILE: &str = "config.json";
const PARAMS_FILE: &str = "params.bin";

/// `[CLS] sentence [SEP] mention [SEP]`
pub fn format_model_input(sample: &MentionSample) -> Vec<String> {
    let mut out =
        Vec::with_capacity(sample.mention_end() + sample.right_context.len() + sample.mention_tokens().len() + 3);
    out.push(CLS.to_string());
    out.extend(sample.sentence());
    out.push(SEP.to_string());
    out.extend_from_slice(sample.mention_tokens());
    out.push(SEP.to_string());
    out
}

pub fn sigmoid(z: f64) -> f64 {
    (1.0 / (1.0 + (-z).exp())).clamp(EPS, 1.0 - EPS)
}

/// Decoded types with their probabilities, in vocabulary order.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub types: Vec<String>,
    pub probabilities: Vec<f64>,
}

impl PredictionSet {
    pub fn type_set(&self) -> BTreeSet<String> {
        self.types.iter().cloned().collect()
    }
}

/// Indices with `p > 0.5`, or the single argmax (lowest index on ties) if none.
pub fn predict_indices(p: &[f64]) -> Vec<usize> {
    let above: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.5).collect();
    if !above.is_empty() || p.is_empty() {
        return above;
    }
    let mut best = 0;
    for i in 1..p.len() {
        if p[i] > p[best] {
            best = i;
        }
    }
    vec![best]
}

pub fn predict_types(p: &[f64], vocab: &TypeVocabulary) -> Result<PredictionSet> {
    if p.len() != vocab.len() {
        return Err(Error::InvalidInput(format!(
            "probability vector has length {} but the vocabulary has {} types",
            p.len(),
            vocab.len()
        )));
    }
    if p.is_empty() {
        return Err(Error::InvalidInput("empty vocabulary".into()));
    }
    let idx = predict_indices(p);
    Ok(PredictionSet {
        types: idx.iter().map(|&i| vocab.name(i).to_string()).collect(),
        probabilities: idx.iter().map(|&i| p[i]).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_fingerprint: String,
    pub num_types: usize,
    pub hidden_size: usize,
    pub encoder: EncoderSpec,
    pub seed: u64,
}

#[derive(Debug, Clone)]
enum Encoder {
    Stub(StubEncoder),
    Remote(Arc<RemoteEncoder>),
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    rows: Option<TokenRows>,
    u: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Gradient buffers aligned with [`TypingModel::params`].
#[derive(Debug, Clone)]
pub struct Gradients(pub Vec<Array2<f64>>);

impl Gradients {
    pub fn scale(&mut self, s: f64) {
        for g in &mut self.0 {
            g.mapv_inplace(|x| x * s);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TypingModel {
    config: ModelConfig,
    vocab: Arc<TypeVocabulary>,
    encoder: Encoder,
    /// `[num_types, hidden]`
    classifier: Array2<f64>,
}

/// Builds a freshly initialized model.
pub fn new_model(
    vocab: Arc<TypeVocabulary>,
    hidden_size: usize,
    encoder: EncoderSpec,
    seed: u64,
) -> Result<TypingModel> {
    TypingModel::new(vocab, hidden_size, encoder, seed)
}

impl TypingModel {
    pub fn new(vocab: Arc<TypeVocabulary>, hidden_size: usize, encoder: EncoderSpec, seed: u64) -> Result<Self> {
        if hidden_size == 0 {
            return Err(Error::Config("hidden_size must be positive".into()));
        }
        if vocab.is_empty() {
            return Err(Error::Config("type vocabulary is empty".into()));
        }
        encoder.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = vocab.len();
        let a = (6.0 / (d + hidden_size) as f64).sqrt();
        let classifier = Array2::from_shape_simple_fn((d, hidden_size), || rng.random_range(-a..a));
        let enc = match &encoder {
            EncoderSpec::Stub { buckets } => Encoder::Stub(StubEncoder::new(*buckets, hidden_size, &mut rng)),
            EncoderSpec::Remote { url } => Encoder::Remote(Arc::new(RemoteEncoder::new(url.clone(), hidden_size)?)),
        };
        Ok(TypingModel {
            config: ModelConfig {
                vocab_fingerprint: vocab.fingerprint(),
                num_types: d,
                hidden_size,
                encoder,
                seed,
            },
            vocab,
            encoder: enc,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &TypeVocabulary {
        &self.vocab
    }

    pub fn vocab_arc(&self) -> Arc<TypeVocabulary> {
        Arc::clone(&self.vocab)
    }

    pub fn num_types(&self) -> usize {
        self.classifier.nrows()
    }

    pub fn check_vocab(&self, vocab: &TypeVocabulary) -> Result<()> {
        let found = vocab.fingerprint();
        if found != self.config.vocab_fingerprint {
            return Err(Error::VocabMismatch {
                expected: self.config.vocab_fingerprint.clone(),
                found,
            });
        }
        Ok(())
    }

    /// Pooled vector `u` for a mention.
    pub fn encode(&self, sample: &MentionSample) -> Result<Vec<f64>> {
        Ok(self.trace(sample)?.u)
    }

    pub fn trace(&self, sample: &MentionSample) -> Result<Trace> {
        let input = format_model_input(sample);
        let (rows, u) = match &self.encoder {
            Encoder::Stub(enc) => {
                let rows = enc.rows(&input);
                let u = enc.pool(&rows);
                (Some(rows), u)
            }
            Encoder::Remote(enc) => (None, enc.encode(&input)?),
        };
        let logits = self.classifier.dot(&ndarray::aview1(&u)).to_vec();
        Ok(Trace { rows, u, logits })
    }

    pub fn logits(&self, sample: &MentionSample) -> Result<Vec<f64>> {
        Ok(self.trace(sample)?.logits)
    }

    /// Per-type probabilities, one per vocabulary entry.
    pub fn forward(&self, sample: &MentionSample) -> Result<Vec<f64>> {
        Ok(self.logits(sample)?.into_iter().map(sigmoid).collect())
    }

    pub fn predict(&self, sample: &MentionSample) -> Result<PredictionSet> {
        predict_types(&self.forward(sample)?, &self.vocab)
    }

    /// Trainable parameters: the classifier, then the stub embeddings if any.
    pub fn params(&self) -> Vec<&Array2<f64>> {
        let mut v = vec![&self.classifier];
        if let Encoder::Stub(enc) = &self.encoder {
            v.push(&enc.embeddings);
        }
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut v = vec![&mut self.classifier];
        if let Encoder::Stub(enc) = &mut self.encoder {
            v.push(&mut enc.embeddings);
        }
        v
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients(self.params().iter().map(|p| Array2::zeros(p.dim())).collect())
    }

    /// Accumulates parameter gradients given `d loss / d logits`.
    pub fn backward(&self, trace: &Trace, grad_logits: &[f64], grads: &mut Gradients) {
        let h = self.config.hidden_size;
        let mut grad_u = vec![0.0; h];
        for (t, &g) in grad_logits.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let w = self.classifier.row(t);
            let mut gw = grads.0[0].row_mut(t);
            for j in 0..h {
                gw[j] += g * trace.u[j];
                grad_u[j] += g * w[j];
            }
        }
        if let (Encoder::Stub(enc), Some(rows)) = (&self.encoder, &trace.rows) {
            enc.backward(rows, &grad_u, &mut grads.0[1]);
        }
    }

    /// Hex digest of all parameters (bit-level).
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for p in self.params() {
            for x in p.iter() {
                h.update(x.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cfg = serde_json::to_string_pretty(&self.config).expect("config serializes");
        let cfg_path = dir.join(CONFIG_FILE);
        fs::write(&cfg_path, cfg).map_err(|e| Error::io(&cfg_path, e))?;
        write_arrays(&dir.join(PARAMS_FILE), &self.params())
    }

    /// Loads a checkpoint, refusing one trained on a different vocabulary.
    pub fn load(dir: impl AsRef<Path>, vocab: Arc<TypeVocabulary>) -> Result<Self> {
        let dir = dir.as_ref();
        let cfg_path = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
        let config: ModelConfig =
            serde_json::from_str(&text).map_err(|e| Error::format(&cfg_path, e.line(), e.to_string()))?;
        let mut model = TypingModel::new(
            Arc::clone(&vocab),
            config.hidden_size,
            config.encoder.clone(),
            config.seed,
        )?;
        if model.config.vocab_fingerprint != config.vocab_fingerprint {
            return Err(Error::VocabMismatch {
                expected: config.vocab_fingerprint,
                found: model.config.vocab_fingerprint,
            });
        }
        let arrays = read_arrays(&dir.join(PARAMS_FILE))?;
        let mut slots = model.params_mut();
        if arrays.len() != slots.len() {
            return Err(Error::format(
                dir.join(PARAMS_FILE),
                0,
                "parameter count does not match config",
            ));
        }
        for (slot, a) in slots.iter_mut().zip(arrays) {
            if slot.dim() != a.dim() {
                return Err(Error::format(
                    dir.join(PARAMS_FILE),
                    0,
                    "parameter shape does not match config",
                ));
            }
            **slot = a;
        }
        Ok(model)
    }
}

impl Baseline for TypingModel {
    fn predicted_types(&self, sample: &MentionSample) -> Result<BTreeSet<String>> {
        Ok(self.predict(sample)?.type_set())
    }
}
