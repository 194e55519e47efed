//! Masked-language-model backends: a table-driven mock, an HTTP client for a
//! fill-mask service, and a caching wrapper.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlm::MaskedPrediction;
use crate::patterns::{Prompt, MASK_TOKEN};

/// Fills the single mask slot of a prompt with ranked candidate words.
///
/// Implementations must be deterministic for a fixed checkpoint and input.
pub trait MlmBackend: Send + Sync {
    fn fill_mask(&self, prompt: &Prompt, top_n: usize) -> Result<MaskedPrediction>;

    fn fill_mask_batch(&self, prompts: &[Prompt], top_n: usize) -> Result<Vec<MaskedPrediction>> {
        prompts.par_iter().map(|p| self.fill_mask(p, top_n)).collect()
    }
}

impl<B: MlmBackend + ?Sized> MlmBackend for &B {
    fn fill_mask(&self, prompt: &Prompt, top_n: usize) -> Result<MaskedPrediction> {
        (**self).fill_mask(prompt, top_n)
    }

    fn fill_mask_batch(&self, prompts: &[Prompt], top_n: usize) -> Result<Vec<MaskedPrediction>> {
        (**self).fill_mask_batch(prompts, top_n)
    }
}

impl<B: MlmBackend + ?Sized> MlmBackend for Box<B> {
    fn fill_mask(&self, prompt: &Prompt, top_n: usize) -> Result<MaskedPrediction> {
        (**self).fill_mask(prompt, top_n)
    }

    fn fill_mask_batch(&self, prompts: &[Prompt], top_n: usize) -> Result<Vec<MaskedPrediction>> {
        (**self).fill_mask_batch(prompts, top_n)
    }
}

/// One line of a mock table (and of the on-disk prediction cache).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableEntry {
    pub prompt: String,
    pub predictions: Vec<(String, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_n: Option<usize>,
}

/// Looks prompts up by their space-joined text.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    table: HashMap<String, MaskedPrediction>,
    fallback: Option<MaskedPrediction>,
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prompt_text: impl Into<String>, prediction: MaskedPrediction) {
        self.table.insert(prompt_text.into(), prediction);
    }

    pub fn with_entry(mut self, prompt_text: impl Into<String>, prediction: MaskedPrediction) -> Self {
        self.insert(prompt_text, prediction);
        self
    }

    /// Prediction returned for prompts missing from the table; without one,
    /// unknown prompts are a backend error.
    pub fn with_fallback(mut self, prediction: MaskedPrediction) -> Self {
        self.fallback = Some(prediction);
        self
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut mock = MockBackend::new();
        for (i, line) in BufReader::new(f).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TableEntry =
                serde_json::from_str(&line).map_err(|e| Error::format(path, i + 1, e.to_string()))?;
            let pred =
                MaskedPrediction::new(entry.predictions).map_err(|e| Error::format(path, i + 1, e.to_string()))?;
            mock.insert(entry.prompt, pred);
        }
        Ok(mock)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut keys: Vec<&String> = self.table.keys().collect();
        keys.sort();
        let mut text = String::new();
        for k in keys {
            let entry = TableEntry {
                prompt: k.clone(),
                predictions: self.table[k].ranked().to_vec(),
                top_n: None,
            };
            text.push_str(&serde_json::to_string(&entry).expect("entry serializes"));
            text.push('\n');
        }
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

impl MlmBackend for MockBackend {
    fn fill_mask(&self, prompt: &Prompt, top_n: usize) -> Result<MaskedPrediction> {
        let key = prompt.text();
        match self.table.get(&key).or(self.fallback.as_ref()) {
            Some(p) => Ok(p.truncated(top_n)),
            None => Err(Error::Backend {
                prompt: key,
                message: "prompt not present in mock table".into(),
            }),
        }
    }
}

/// Client for a fill-mask HTTP service that accepts
/// `{"inputs": "...", "parameters": {"top_k": n}}` and answers with a list of
/// `{"token_str": "...", "score": p}` objects.
#[derive(Debug)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: Option<String>,
    mask_token: String,
}

#[derive(Serialize)]
struct FillMaskRequest<'a> {
    inputs: String,
    parameters: FillMaskParameters,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
}

#[derive(Serialize)]
struct FillMaskParameters {
    top_k: usize,
}

#[derive(Deserialize)]
struct FillMaskCandidate {
    token_str: String,
    score: f64,
}

impl HttpBackend {
    pub fn new(url: impl Into<String>, model: Option<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        Ok(HttpBackend {
            client,
            url: url.into(),
            model,
            mask_token: MASK_TOKEN.to_string(),
        })
    }

    /// Mask spelling expected by the served checkpoint (e.g. `<mask>`).
    pub fn with_mask_token(mut self, mask: impl Into<String>) -> Self {
        self.mask_token = mask.into();
        self
    }

    fn render(&self, prompt: &Prompt) -> String {
        let mut toks = prompt.tokens.clone();
        toks[prompt.mask_index] = self.mask_token.clone();
        toks.join(" ")
    }
}

impl MlmBackend for HttpBackend {
    fn fill_mask(&self, prompt: &Prompt, top_n: usize) -> Result<MaskedPrediction> {
        let text = self.render(prompt);
        let fail = |message: String| Error::Backend {
            prompt: text.clone(),
            message,
        };
        let body = FillMaskRequest {
            inputs: text.clone(),
            parameters: FillMaskParameters { top_k: top_n },
            model: self.model.as_deref(),
        };
        let resp = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .map_err(|e| fail(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(fail(format!("HTTP {}", resp.status())));
        }
        let candidates: Vec<FillMaskCandidate> = resp.json().map_err(|e| fail(e.to_string()))?;
        let scored = candidates
            .into_iter()
            .map(|c| (c.token_str.trim().trim_start_matches("##").to_string(), c.score))
            .filter(|(w, _)| !w.is_empty());
        Ok(MaskedPrediction::from_scores(scored).truncated(top_n))
    }
}

/// Memoizes predictions by `(prompt text, top_n)`, optionally persisting them
/// as a mock-table file so a later run can replay them offline.
pub struct CachedBackend<B> {
    inner: B,
    memo: Mutex<HashMap<(String, usize), MaskedPrediction>>,
    store: Option<Mutex<File>>,
    store_path: Option<PathBuf>,
}

impl<B: MlmBackend> CachedBackend<B> {
    pub fn new(inner: B) -> Self {
        CachedBackend {
            inner,
            memo: Mutex::new(HashMap::new()),
            store: None,
            store_path: None,
        }
    }

    /// Loads previously stored predictions from `path` and appends new ones to it.
    pub fn with_store(inner: B, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut memo = HashMap::new();
        if path.exists() {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in BufReader::new(f).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: TableEntry =
                    serde_json::from_str(&line).map_err(|err| Error::format(path, i + 1, err.to_string()))?;
                let pred =
                    MaskedPrediction::new(e.predictions).map_err(|err| Error::format(path, i + 1, err.to_string()))?;
                if let Some(n) = e.top_n {
                    memo.insert((e.prompt, n), pred);
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(CachedBackend {
            inner,
            memo: Mutex::new(memo),
            store: Some(Mutex::new(file)),
            store_path: Some(path.to_path_buf()),
        })
    }

    pub fn cached_entries(&self) -> usize {
        self.memo.lock().expect("cache lock").len()
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }

    fn record(&self, key: (String, usize), pred: &MaskedPrediction) -> Result<()> {
        if let (Some(store), Some(path)) = (&self.store, &self.store_path) {
            let entry = TableEntry {
                prompt: key.0.clone(),
                predictions: pred.ranked().to_vec(),
                top_n: Some(key.1),
            };
            let line = serde_json::to_string(&entry).expect("entry serializes");
            let mut f = store.lock().expect("store lock");
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        self.memo.lock().expect("cache lock").insert(key, pred.clone());
        Ok(())
    }
}

impl<B: MlmBackend> MlmBackend for CachedBackend<B> {
    fn fill_mask(&self, prompt: &Prompt, top_n: usize) -> Result<MaskedPrediction> {
        let key = (prompt.text(), top_n);
        if let Some(p) = self.memo.lock().expect("cache lock").get(&key) {
            return Ok(p.clone());
        }
        let pred = self.inner.fill_mask(prompt, top_n)?;
        self.record(key, &pred)?;
        Ok(pred)
    }

    fn fill_mask_batch(&self, prompts: &[Prompt], top_n: usize) -> Result<Vec<MaskedPrediction>> {
        let mut out: Vec<Option<MaskedPrediction>> = {
            let memo = self.memo.lock().expect("cache lock");
            prompts.iter().map(|p| memo.get(&(p.text(), top_n)).cloned()).collect()
        };
        let missing: Vec<usize> = (0..prompts.len()).filter(|&i| out[i].is_none()).collect();
        if !missing.is_empty() {
            let batch: Vec<Prompt> = missing.iter().map(|&i| prompts[i].clone()).collect();
            let preds = self.inner.fill_mask_batch(&batch, top_n)?;
            for (i, pred) in missing.into_iter().zip(preds) {
                self.record((prompts[i].text(), top_n), &pred)?;
                out[i] = Some(pred);
            }
        }
        Ok(out.into_iter().map(|p| p.expect("filled above")).collect())
    }
}
