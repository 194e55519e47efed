//! Mention-in-context encoders producing the pooled vector fed to the classifier.

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use ndarray::{Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which encoder a model uses; stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderSpec {
    /// Trainable hashed bag-of-tokens: a dedicated `[CLS]` row plus the mean of
    /// the rows of the remaining tokens. Tokens after the first `[SEP]` hash
    /// into a separate segment.
    Stub { buckets: usize },
    /// Frozen pretrained transformer served over HTTP; the pooled vector is the
    /// first (`[CLS]`) hidden state returned by a feature-extraction endpoint.
    Remote { url: String },
}

impl EncoderSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            EncoderSpec::Stub { buckets } if *buckets == 0 => {
                Err(Error::Config("stub encoder needs at least one bucket".into()))
            }
            EncoderSpec::Remote { url } if url.is_empty() => Err(Error::Config("remote encoder url is empty".into())),
            _ => Ok(()),
        }
    }
}

/// Row indices touched by one input; row 0 is the `[CLS]` row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenRows(pub Vec<usize>);

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq)]
pub struct StubEncoder {
    pub(crate) buckets: usize,
    /// `[buckets + 1, hidden]`
    pub(crate) embeddings: Array2<f64>,
}

impl StubEncoder {
    pub fn new<R: Rng>(buckets: usize, hidden: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (hidden as f64).sqrt();
        let embeddings = Array2::from_shape_simple_fn((buckets + 1, hidden), || rng.random_range(-scale..scale));
        StubEncoder { buckets, embeddings }
    }

    pub fn rows(&self, input: &[String]) -> TokenRows {
        let mut segment = 0u64;
        let mut rows = Vec::with_capacity(input.len());
        for tok in input.iter().skip(1) {
            rows.push(1 + (fnv1a(tok.as_bytes(), segment) % self.buckets as u64) as usize);
            if tok == super::SEP && segment == 0 {
                segment = 0x9e37_79b9_7f4a_7c15;
            }
        }
        TokenRows(rows)
    }

    pub fn pool(&self, rows: &TokenRows) -> Vec<f64> {
        let mut u = self.embeddings.row(0).to_vec();
        if !rows.0.is_empty() {
            let w = 1.0 / rows.0.len() as f64;
            for &r in &rows.0 {
                add_scaled(&mut u, self.embeddings.row(r), w);
            }
        }
        u
    }

    /// Accumulates `d pooled / d embeddings` given the upstream gradient.
    pub fn backward(&self, rows: &TokenRows, grad_u: &[f64], grad: &mut Array2<f64>) {
        for (g, x) in grad.row_mut(0).iter_mut().zip(grad_u) {
            *g += x;
        }
        if rows.0.is_empty() {
            return;
        }
        let w = 1.0 / rows.0.len() as f64;
        for &r in &rows.0 {
            for (g, x) in grad.row_mut(r).iter_mut().zip(grad_u) {
                *g += w * x;
            }
        }
    }
}

fn add_scaled(acc: &mut [f64], row: ArrayView1<f64>, w: f64) {
    for (a, x) in acc.iter_mut().zip(row.iter()) {
        *a += w * x;
    }
}

#[derive(Serialize)]
struct FeatureRequest<'a> {
    inputs: &'a str,
}

/// Feature-extraction client. Responses may be `[[f64]]` (tokens × hidden) or
/// `[[[f64]]]` (batch × tokens × hidden); the first token's vector is used.
#[derive(Debug)]
pub struct RemoteEncoder {
    url: String,
    hidden: usize,
    client: reqwest::blocking::Client,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl RemoteEncoder {
    pub fn new(url: impl Into<String>, hidden: usize) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(RemoteEncoder {
            url: url.into(),
            hidden,
            client,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn encode(&self, input: &[String]) -> Result<Vec<f64>> {
        // the service adds its own special tokens
        let text: Vec<&str> = input.iter().skip(1).map(String::as_str).collect();
        let text = text.join(" ");
        let text = text.strip_suffix(super::SEP).unwrap_or(&text).trim_end().to_string();
        if let Some(v) = self.cache.lock().expect("encoder cache").get(&text) {
            return Ok(v.clone());
        }
        let fail = |message: String| Error::Backend {
            prompt: text.clone(),
            message,
        };
        let resp = self
            .client
            .post(&self.url)
            .json(&FeatureRequest { inputs: &text })
            .send()
            .map_err(|e| fail(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(fail(format!("HTTP {}", resp.status())));
        }
        let value: serde_json::Value = resp.json().map_err(|e| fail(e.to_string()))?;
        let mut cur = &value;
        while let Some(first) = cur.as_array().and_then(|a| a.first()) {
            if first.is_number() {
                break;
            }
            cur = first;
        }
        let v: Vec<f64> = cur
            .as_array()
            .ok_or_else(|| fail("unexpected feature response shape".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| fail("non-numeric feature".into())))
            .collect::<Result<_>>()?;
        if v.len() != self.hidden {
            return Err(fail(format!("expected hidden size {}, got {}", self.hidden, v.len())));
        }
        self.cache.lock().expect("encoder cache").insert(text, v.clone());
        Ok(v)
    }
}
