//! OpenAI-compatible HTTP client.
//!
//! Scoring uses `/v1/completions` with echo-and-score semantics
//! (`max_tokens: 0`, `echo: true`, `logprobs: 1`). Token embeddings come from
//! one `/v1/embeddings` call per token string, since common servers do not
//! expose contextual hidden states. Generation uses `/v1/chat/completions`.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{Backend, Generation, GenerationRequest, ScoredText};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    /// Server root, e.g. `http://localhost:8000`. A trailing `/v1` is accepted.
    pub base_url: String,
    pub model: String,
    /// Model used for `/v1/embeddings`; defaults to `model`.
    pub embed_model: Option<String>,
    pub api_key: Option<String>,
    pub max_attempts: u32,
    pub timeout: Duration,
    /// First backoff delay; doubles after each failed attempt.
    pub backoff_base: Duration,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            embed_model: None,
            api_key: None,
            max_attempts: 3,
            timeout: Duration::from_secs(30),
            backoff_base: Duration::from_secs(1),
        }
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    config: HttpConfig,
    client: Client,
    attempts: AtomicU64,
}

/// Outcome of one failed attempt.
enum Failure {
    Retryable(String),
    Fatal(Error),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self> {
        if config.max_attempts == 0 {
            return Err(Error::InvalidConfig("max_attempts must be at least 1".into()));
        }
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("http client: {e}")))?;
        Ok(Self {
            config,
            client,
            attempts: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    /// Total HTTP attempts issued by this backend so far.
    pub fn attempts_made(&self) -> u64 {
        self.attempts.load(Ordering::Relaxed)
    }

    fn endpoint(&self, path: &str) -> String {
        let base = self.config.base_url.trim_end_matches('/');
        let base = base.strip_suffix("/v1").unwrap_or(base);
        format!("{base}/v1/{path}")
    }

    fn embed_model(&self) -> &str {
        self.config.embed_model.as_deref().unwrap_or(&self.config.model)
    }

    /// POSTs `body`, retrying transport errors, 429 and 5xx with exponential
    /// backoff. Returns the parsed body and the number of attempts used.
    fn post(&self, path: &str, body: &Value, on_client_error: fn(StatusCode, String) -> Error) -> Result<(Value, u32)> {
        let url = self.endpoint(path);
        let mut delay = self.config.backoff_base;
        let mut last = String::new();
        for attempt in 1..=self.config.max_attempts {
            self.attempts.fetch_add(1, Ordering::Relaxed);
            match self.try_post(&url, body, on_client_error) {
                Ok(value) => return Ok((value, attempt)),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(reason)) => {
                    log::debug!("attempt {attempt} to {url} failed: {reason}");
                    last = reason;
                }
            }
            if attempt < self.config.max_attempts {
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(Error::BackendUnavailable {
            attempts: self.config.max_attempts,
            reason: format!("{url}: {last}"),
        })
    }

    fn try_post(
        &self,
        url: &str,
        body: &Value,
        on_client_error: fn(StatusCode, String) -> Error,
    ) -> Result<Value, Failure> {
        let mut request = self.client.post(url).json(body);
        if let Some(key) = &self.config.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| Failure::Retryable(e.to_string()))?;
        if status.is_success() {
            return serde_json::from_str(&text)
                .map_err(|e| Failure::Fatal(Error::BadResponse(format!("invalid JSON body: {e}"))));
        }
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            Err(Failure::Retryable(format!("HTTP {status}: {text}")))
        } else {
            Err(Failure::Fatal(on_client_error(status, text)))
        }
    }
}

fn scoring_rejected(status: StatusCode, body: String) -> Error {
    Error::ScoringUnsupported(format!("HTTP {status}: {body}"))
}

fn request_rejected(status: StatusCode, body: String) -> Error {
    Error::BadResponse(format!("HTTP {status}: {body}"))
}

/// Body for `POST /v1/completions` in echo-and-score mode.
pub fn completions_body(model: &str, prompt: &str) -> Value {
    json!({
        "model": model,
        "prompt": prompt,
        "max_tokens": 0,
        "echo": true,
        "logprobs": 1,
    })
}

/// Body for `POST /v1/embeddings`.
pub fn embeddings_body(model: &str, input: &str) -> Value {
    json!({ "model": model, "input": input })
}

/// Body for `POST /v1/chat/completions`.
pub fn chat_body(model: &str, request: &GenerationRequest) -> Value {
    let mut body = json!({
        "model": model,
        "messages": [{ "role": "user", "content": request.prompt }],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    });
    if let Some(seed) = request.seed {
        body["seed"] = json!(seed);
    }
    body
}

/// Reads echoed prompt tokens and their logprobs from a completions response.
///
/// Leading tokens without a logprob (the first token has no context) are
/// dropped, as are any generated tokens past the end of the prompt.
pub fn parse_scores(text: &str, model_id: &str, body: &Value) -> Result<ScoredText> {
    let logprobs = &body["choices"][0]["logprobs"];
    let (Some(tokens), Some(values)) = (logprobs["tokens"].as_array(), logprobs["token_logprobs"].as_array()) else {
        return Err(Error::ScoringUnsupported(
            "response carries no echoed token logprobs".into(),
        ));
    };
    if tokens.len() != values.len() {
        return Err(Error::BadResponse(format!(
            "{} tokens but {} logprobs",
            tokens.len(),
            values.len()
        )));
    }
    let mut pieces = Vec::with_capacity(tokens.len());
    let mut consumed = 0usize;
    for (token, value) in tokens.iter().zip(values) {
        if consumed >= text.len() {
            break;
        }
        let token = token
            .as_str()
            .ok_or_else(|| Error::BadResponse("token is not a string".into()))?;
        consumed += token.len();
        match value.as_f64() {
            Some(lp) => pieces.push((token.to_string(), lp, false)),
            None if pieces.is_empty() => continue,
            None => return Err(Error::BadResponse(format!("missing logprob for token {token:?}"))),
        }
    }
    if pieces.is_empty() {
        return Err(Error::ScoringUnsupported(format!(
            "no scorable tokens echoed for {text:?}"
        )));
    }
    ScoredText::from_pieces(text, model_id, pieces)
}

pub fn parse_embedding(body: &Value) -> Result<Vec<f64>> {
    body["data"][0]["embedding"]
        .as_array()
        .ok_or_else(|| Error::BadResponse("no data[0].embedding in response".into()))?
        .iter()
        .map(|v| {
            v.as_f64()
                .ok_or_else(|| Error::BadResponse("embedding component is not a number".into()))
        })
        .collect()
}

/// Returns the reply text and whether the server stopped on length.
pub fn parse_chat(body: &Value) -> Result<(String, bool)> {
    let choice = &body["choices"][0];
    let text = choice["message"]["content"]
        .as_str()
        .ok_or_else(|| Error::BadResponse("no choices[0].message.content in response".into()))?;
    Ok((text.to_string(), choice["finish_reason"] == "length"))
}

impl Backend for HttpBackend {
    fn model_id(&self) -> &str {
        &self.config.model
    }

    fn score(&self, text: &str) -> Result<ScoredText> {
        let body = completions_body(&self.config.model, text);
        let (response, _) = self.post("completions", &body, scoring_rejected)?;
        parse_scores(text, &self.config.model, &response)
    }

    fn embed_raw(&self, token_text: &str) -> Result<Vec<f64>> {
        let body = embeddings_body(self.embed_model(), token_text);
        let (response, _) = self.post("embeddings", &body, request_rejected)?;
        parse_embedding(&response)
    }

    /// Approximated by embedding the full text; pooling is the server's choice.
    fn embed_last_raw(&self, text: &str) -> Result<Vec<f64>> {
        self.embed_raw(text)
    }

    fn complete(&self, request: &GenerationRequest) -> Result<Generation> {
        let body = chat_body(&self.config.model, request);
        let (response, attempts) = self.post("chat/completions", &body, request_rejected)?;
        let (text, truncated) = parse_chat(&response)?;
        Ok(Generation {
            text,
            truncated,
            attempts,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_response_drops_unconditioned_first_token() {
        let body = json!({
            "choices": [{
                "text": "The cat",
                "logprobs": {
                    "tokens": ["The", " cat"],
                    "token_logprobs": [null, -2.5]
                }
            }]
        });
        let scored = parse_scores("The cat", "m", &body).unwrap();
        assert_eq!(scored.tokens.len(), 1);
        assert_eq!(scored.tokens[0].token_text, " cat");
        assert_eq!(scored.tokens[0].position, 0);
        assert_eq!(scored.tokens[0].logprob, -2.5);
    }

    #[test]
    fn generated_tail_is_ignored() {
        let body = json!({
            "choices": [{"logprobs": {
                "tokens": ["a", " b", " c"],
                "token_logprobs": [-1.0, -2.0, -9.0]
            }}]
        });
        let scored = parse_scores("a b", "m", &body).unwrap();
        assert_eq!(scored.logprobs().collect::<Vec<_>>(), vec![-1.0, -2.0]);
    }

    #[test]
    fn missing_logprobs_means_unsupported() {
        let body = json!({"choices": [{"text": "a b"}]});
        assert!(matches!(
            parse_scores("a b", "m", &body),
            Err(Error::ScoringUnsupported(_))
        ));
    }

    #[test]
    fn chat_length_stop_is_flagged() {
        let body = json!({"choices": [{"message": {"content": "(A)"}, "finish_reason": "length"}]});
        assert_eq!(parse_chat(&body).unwrap(), ("(A)".to_string(), true));
    }

    #[test]
    fn seed_is_optional_in_chat_body() {
        let req = GenerationRequest::new("hi");
        assert!(chat_body("m", &req).get("seed").is_none());
        assert_eq!(chat_body("m", &req.with_seed(3))["seed"], 3);
    }

    #[test]
    fn endpoint_accepts_v1_suffix() {
        let a = HttpBackend::new(HttpConfig::new("http://h:1/v1/", "m")).unwrap();
        let b = HttpBackend::new(HttpConfig::new("http://h:1", "m")).unwrap();
        assert_eq!(a.endpoint("embeddings"), "http://h:1/v1/embeddings");
        assert_eq!(b.endpoint("embeddings"), "http://h:1/v1/embeddings");
    }
}
