//! Uniform access to language models: token scoring, embeddings and sampled
//! generation.
//!
//! Three implementations ship with the crate:
//!
//! - [`MockBackend`]: hash-derived log-probabilities and embeddings, no model.
//! - [`ScriptedBackend`]: replays values from a JSON script, for tests.
//! - [`HttpBackend`]: an OpenAI-compatible inference server.
//!
//! Callers go through [`score_tokens`], [`embed_token`], [`embed_last_token`]
//! and [`generate`], which validate inputs and normalize outputs so every
//! backend obeys the same contract.

pub mod http;
mod mock;
mod scripted;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use http::{HttpBackend, HttpConfig};
pub use mock::MockBackend;
pub use scripted::{GenerationRule, ReplyMode, Script, ScriptedBackend, ScriptedTokens};

/// Default sampling temperature for every generation in the toolkit.
pub const DEFAULT_TEMPERATURE: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub token_text: String,
    pub position: usize,
    pub logprob: f64,
    /// Backend-flagged special or control token (BOS, EOS, chat markers).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub special: bool,
}

/// A text with per-token log-probabilities under one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredText {
    pub text: String,
    pub tokens: Vec<TokenScore>,
    pub model_id: String,
}

impl ScoredText {
    /// Builds a scored text from `(token_text, logprob, special)` pieces,
    /// assigning contiguous positions.
    pub fn from_pieces<I>(text: impl Into<String>, model_id: impl Into<String>, pieces: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, f64, bool)>,
    {
        let text = text.into();
        let tokens: Vec<TokenScore> = pieces
            .into_iter()
            .enumerate()
            .map(|(position, (token_text, logprob, special))| TokenScore {
                token_text,
                position,
                logprob,
                special,
            })
            .collect();
        if let Some(bad) = tokens.iter().find(|t| !t.logprob.is_finite()) {
            return Err(Error::BadResponse(format!(
                "non-finite logprob {} for token {:?}",
                bad.logprob, bad.token_text
            )));
        }
        if tokens.is_empty() && !text.is_empty() {
            return Err(Error::BadResponse("backend returned no tokens".into()));
        }
        Ok(Self {
            text,
            tokens,
            model_id: model_id.into(),
        })
    }

    pub fn logprobs(&self) -> impl Iterator<Item = f64> + '_ {
        self.tokens.iter().map(|t| t.logprob)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// A dense vector. Vectors produced by this module are unit-norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub values: Vec<f64>,
    pub dim: usize,
}

impl Embedding {
    /// L2-normalizes `values`. Rejects empty, non-finite and all-zero input.
    pub fn unit(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidEmbedding("zero-length vector"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidEmbedding("non-finite component"));
        }
        // Scale first so huge components cannot overflow the sum of squares.
        let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_abs == 0.0 {
            return Err(Error::InvalidEmbedding("all-zero vector"));
        }
        let scaled: Vec<f64> = values.iter().map(|v| v / max_abs).collect();
        let norm = scaled.iter().map(|v| v * v).sum::<f64>().sqrt();
        let values: Vec<f64> = scaled.into_iter().map(|v| v / norm).collect();
        Ok(Self {
            dim: values.len(),
            values,
        })
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity. Dimension mismatch is a domain error.
    pub fn cosine(&self, other: &Embedding) -> Result<f64> {
        if self.dim != other.dim {
            return Err(Error::Domain(format!(
                "embedding dimensions differ: {} vs {}",
                self.dim, other.dim
            )));
        }
        let dot: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok((dot / (self.norm() * other.norm())).clamp(-1.0, 1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: 256,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }
}

/// A model continuation plus call metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    /// The server stopped on the length limit. A warning, not a failure.
    pub truncated: bool,
    /// Transport attempts spent on this call (1 for local backends).
    pub attempts: u32,
}

/// A language model reachable for scoring, embedding and generation.
///
/// Implementations return raw values; the free functions in this module apply
/// input validation and normalization.
pub trait Backend: Send + Sync {
    fn model_id(&self) -> &str;

    fn score(&self, text: &str) -> Result<ScoredText>;

    /// Raw (unnormalized) embedding of one token string.
    fn embed_raw(&self, token_text: &str) -> Result<Vec<f64>>;

    /// Raw embedding of the final model token of `text`.
    fn embed_last_raw(&self, text: &str) -> Result<Vec<f64>>;

    fn complete(&self, request: &GenerationRequest) -> Result<Generation>;
}

pub fn score_tokens(text: &str, backend: &dyn Backend) -> Result<ScoredText> {
    if text.is_empty() {
        return Err(Error::EmptyInput("text to score"));
    }
    let scored = backend.score(text)?;
    debug_assert!(scored.tokens.iter().enumerate().all(|(i, t)| t.position == i));
    if scored.tokens.is_empty() {
        return Err(Error::BadResponse(format!("no tokens returned for {text:?}")));
    }
    Ok(scored)
}

pub fn embed_token(token_text: &str, backend: &dyn Backend) -> Result<Embedding> {
    if token_text.is_empty() {
        return Err(Error::EmptyInput("token text"));
    }
    Embedding::unit(backend.embed_raw(token_text)?)
}

pub fn embed_last_token(text: &str, backend: &dyn Backend) -> Result<Embedding> {
    if text.is_empty() {
        return Err(Error::EmptyInput("text to embed"));
    }
    Embedding::unit(backend.embed_last_raw(text)?)
}

pub fn generate(request: &GenerationRequest, backend: &dyn Backend) -> Result<Generation> {
    if request.prompt.is_empty() {
        return Err(Error::EmptyInput("generation prompt"));
    }
    if request.temperature.is_nan() || request.temperature < 0.0 || request.max_tokens == 0 {
        return Err(Error::InvalidConfig(format!(
            "temperature must be >= 0 and max_tokens positive (got {}, {})",
            request.temperature, request.max_tokens
        )));
    }
    let generation = backend.complete(request)?;
    if generation.truncated {
        log::warn!(
            "generation hit the {}-token limit and was truncated",
            request.max_tokens
        );
    }
    Ok(generation)
}

/// Splits text into word-level pieces with leading whitespace attached, so
/// that concatenating the pieces reproduces the text exactly.
pub fn whitespace_tokenize(text: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut seen_word = false;
    let mut ws_run: Option<usize> = None;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            ws_run.get_or_insert(i);
            continue;
        }
        if let Some(ws) = ws_run.take() {
            if seen_word {
                pieces.push(&text[start..ws]);
                start = ws;
            }
        }
        seen_word = true;
    }
    if start < text.len() {
        pieces.push(&text[start..]);
    }
    pieces
}

/// Stable 64-bit hash of a sequence of byte strings.
pub(crate) fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Runs `f` over `items` with at most `max_inflight` calls in flight and
/// returns the results in input order.
pub fn bounded_map<T, R, F>(items: &[T], max_inflight: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    let workers = max_inflight.max(1).min(items.len());
    if workers <= 1 {
        return items.iter().enumerate().map(|(i, item)| f(i, item)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let out = f(i, &items[i]);
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every slot is filled"))
        .collect()
}
