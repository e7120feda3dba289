//! How familiar a model is with a text, from its token log-probabilities.
//!
//! Two estimators: the reciprocal of perplexity, and the mean pairwise cosine
//! similarity between the embeddings of the most surprising tokens.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{embed_token, score_tokens, Backend, Embedding, ScoredText, TokenScore};
use crate::error::{Error, Result};

/// Salient-token count used when none is configured.
pub const DEFAULT_K_SALIENT: usize = 20;

/// Separator between prompt and query when scoring them together.
pub const PROMPT_QUERY_DELIMITER: &str = "\n";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamiliarityMethod {
    Ppl,
    #[default]
    Sim,
}

impl fmt::Display for FamiliarityMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Ppl => "ppl",
            Self::Sim => "sim",
        })
    }
}

impl FromStr for FamiliarityMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ppl" => Ok(Self::Ppl),
            "sim" => Ok(Self::Sim),
            other => Err(Error::InvalidConfig(format!("unknown familiarity method {other:?}"))),
        }
    }
}

/// A familiarity value in `(0, 1]`, higher meaning more familiar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamiliarityValue {
    pub value: f64,
    pub method: FamiliarityMethod,
    /// Salient-token count requested (similarity method only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Raw perplexity (ppl) or raw mean cosine (sim).
    pub detail: f64,
}

/// The most surprising tokens of a text, each with its embedding, ordered by
/// ascending logprob and then by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SalientTokenSet {
    pub entries: Vec<(TokenScore, Embedding)>,
    pub k_requested: usize,
}

pub fn perplexity(scored: &ScoredText) -> Result<f64> {
    if scored.is_empty() {
        return Err(Error::EmptyInput("scored text has no tokens"));
    }
    let mean = scored.logprobs().sum::<f64>() / scored.len() as f64;
    Ok((-mean).exp())
}

pub fn familiarity_ppl(scored: &ScoredText) -> Result<FamiliarityValue> {
    let ppl = perplexity(scored)?;
    Ok(FamiliarityValue {
        value: 1.0 / ppl,
        method: FamiliarityMethod::Ppl,
        k: None,
        detail: ppl,
    })
}

fn is_eligible(token: &TokenScore) -> bool {
    !token.special && !token.token_text.trim().is_empty()
}

/// Picks the `max(k, 2)` eligible tokens with the lowest logprob and embeds
/// each of them.
pub fn salient_tokens(scored: &ScoredText, k: usize, backend: &dyn Backend) -> Result<SalientTokenSet> {
    if scored.is_empty() {
        return Err(Error::EmptyInput("scored text has no tokens"));
    }
    let k = k.max(2);
    let mut eligible: Vec<&TokenScore> = scored.tokens.iter().filter(|t| is_eligible(t)).collect();
    if eligible.len() < 2 {
        return Err(Error::TooFewTokens { found: eligible.len() });
    }
    eligible.sort_by(|a, b| a.logprob.total_cmp(&b.logprob).then(a.position.cmp(&b.position)));
    eligible.truncate(k);
    let entries = eligible
        .into_iter()
        .map(|token| Ok((token.clone(), embed_token(&token.token_text, backend)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SalientTokenSet {
        entries,
        k_requested: k,
    })
}

/// Mean cosine similarity over all unordered pairs of embeddings.
pub fn mean_pairwise_cosine(embeddings: &[&Embedding]) -> Result<f64> {
    let n = embeddings.len();
    if n < 2 {
        return Err(Error::TooFewTokens { found: n });
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += embeddings[i].cosine(embeddings[j])?;
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// Maps a mean cosine in `[-1, 1]` onto `(0, 1]`.
pub fn similarity_to_familiarity(raw: f64) -> f64 {
    ((1.0 + raw) / 2.0).max(f64::MIN_POSITIVE)
}

pub fn familiarity_sim(scored: &ScoredText, k: usize, backend: &dyn Backend) -> Result<FamiliarityValue> {
    let salient = salient_tokens(scored, k, backend)?;
    let embeddings: Vec<&Embedding> = salient.entries.iter().map(|(_, e)| e).collect();
    let raw = mean_pairwise_cosine(&embeddings)?;
    Ok(FamiliarityValue {
        value: similarity_to_familiarity(raw),
        method: FamiliarityMethod::Sim,
        k: Some(salient.k_requested),
        detail: raw,
    })
}

pub fn familiarity(
    scored: &ScoredText,
    method: FamiliarityMethod,
    k: usize,
    backend: &dyn Backend,
) -> Result<FamiliarityValue> {
    match method {
        FamiliarityMethod::Ppl => familiarity_ppl(scored),
        FamiliarityMethod::Sim => familiarity_sim(scored, k, backend),
    }
}

/// The text scored for a (prompt, query) pair.
pub fn join_prompt_query(prompt: &str, query: &str) -> String {
    format!("{prompt}{PROMPT_QUERY_DELIMITER}{query}")
}

/// Familiarity of a prompt and query scored as one text, so salient tokens
/// are pooled across both.
pub fn combined_familiarity(
    prompt: &str,
    query: &str,
    method: FamiliarityMethod,
    k: usize,
    backend: &dyn Backend,
) -> Result<FamiliarityValue> {
    if prompt.is_empty() {
        return Err(Error::EmptyInput("prompt"));
    }
    if query.is_empty() {
        return Err(Error::EmptyInput("query"));
    }
    let scored = score_tokens(&join_prompt_query(prompt, query), backend)?;
    familiarity(&scored, method, k, backend)
}
