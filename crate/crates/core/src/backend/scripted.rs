use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{stable_hash, whitespace_tokenize, Backend, Generation, GenerationRequest, MockBackend, ScoredText};
use crate::error::{Error, Result};

/// Token scores for one scripted text: either bare log-probabilities over the
/// whitespace tokenization of the text, or explicit tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScriptedTokens {
    Logprobs { logprobs: Vec<f64> },
    Tokens { tokens: Vec<ScriptedToken> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedToken {
    pub token_text: String,
    pub logprob: f64,
    #[serde(default)]
    pub special: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplyMode {
    /// Replies are consumed in order, cycling when exhausted.
    #[default]
    Sequence,
    /// Reply `seed mod len` is returned; requests without a seed get the first.
    BySeed,
    /// Reply chosen by a hash of prompt and seed.
    ByPromptAndSeed,
}

/// Canned replies for generation prompts containing `contains` (all prompts
/// when absent). The first matching rule wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRule {
    #[serde(default)]
    pub contains: Option<String>,
    pub replies: Vec<String>,
    #[serde(default)]
    pub mode: ReplyMode,
    #[serde(default)]
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default = "default_model_id")]
    pub model_id: String,
    /// Answer unscripted scoring/embedding calls with the mock backend.
    #[serde(default)]
    pub fallback_to_mock: bool,
    #[serde(default)]
    pub scores: BTreeMap<String, ScriptedTokens>,
    #[serde(default)]
    pub embeddings: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub last_token_embeddings: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub generations: Vec<GenerationRule>,
}

impl Default for Script {
    fn default() -> Self {
        Self {
            model_id: default_model_id(),
            fallback_to_mock: false,
            scores: BTreeMap::new(),
            embeddings: BTreeMap::new(),
            last_token_embeddings: BTreeMap::new(),
            generations: Vec::new(),
        }
    }
}

fn default_model_id() -> String {
    "scripted".into()
}

/// Backend that replays a [`Script`]. Shared cursors sit behind a mutex, so a
/// single instance can serve concurrent callers.
#[derive(Debug)]
pub struct ScriptedBackend {
    script: Script,
    cursors: Mutex<Vec<usize>>,
    fallback: Option<MockBackend>,
}

impl ScriptedBackend {
    pub fn new(script: Script) -> Self {
        let fallback = script
            .fallback_to_mock
            .then(|| MockBackend::new(script.model_id.clone()));
        Self {
            cursors: Mutex::new(vec![0; script.generations.len()]),
            script,
            fallback,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Ok(Self::new(serde_json::from_str(&raw)?))
    }

    pub fn script(&self) -> &Script {
        &self.script
    }

    pub fn with_scores(mut self, text: &str, logprobs: &[f64]) -> Self {
        self.script.scores.insert(
            text.to_string(),
            ScriptedTokens::Logprobs {
                logprobs: logprobs.to_vec(),
            },
        );
        self
    }

    pub fn with_embedding(mut self, token: &str, values: &[f64]) -> Self {
        self.script.embeddings.insert(token.to_string(), values.to_vec());
        self
    }

    pub fn with_last_token_embedding(mut self, text: &str, values: &[f64]) -> Self {
        self.script
            .last_token_embeddings
            .insert(text.to_string(), values.to_vec());
        self
    }

    pub fn with_rule(mut self, rule: GenerationRule) -> Self {
        self.script.generations.push(rule);
        self.cursors.get_mut().unwrap().push(0);
        self
    }

    /// Sequential replies for prompts containing `contains`.
    pub fn with_replies<S: Into<String>>(self, contains: Option<&str>, replies: impl IntoIterator<Item = S>) -> Self {
        self.with_rule(GenerationRule {
            contains: contains.map(str::to_string),
            replies: replies.into_iter().map(Into::into).collect(),
            mode: ReplyMode::Sequence,
            truncated: false,
        })
    }

    fn miss(&self, kind: &'static str, key: &str) -> Error {
        Error::NotScripted {
            kind,
            key: key.to_string(),
        }
    }
}

impl Backend for ScriptedBackend {
    fn model_id(&self) -> &str {
        &self.script.model_id
    }

    fn score(&self, text: &str) -> Result<ScoredText> {
        match self.script.scores.get(text) {
            Some(ScriptedTokens::Logprobs { logprobs }) => {
                let pieces = whitespace_tokenize(text);
                if pieces.len() != logprobs.len() {
                    return Err(Error::BadResponse(format!(
                        "script gives {} logprobs for {:?}, which has {} tokens",
                        logprobs.len(),
                        text,
                        pieces.len()
                    )));
                }
                ScoredText::from_pieces(
                    text,
                    self.script.model_id.as_str(),
                    pieces
                        .into_iter()
                        .zip(logprobs)
                        .map(|(p, &lp)| (p.to_string(), lp, false)),
                )
            }
            Some(ScriptedTokens::Tokens { tokens }) => ScoredText::from_pieces(
                text,
                self.script.model_id.as_str(),
                tokens.iter().map(|t| (t.token_text.clone(), t.logprob, t.special)),
            ),
            None => match &self.fallback {
                Some(mock) => mock.score(text),
                None => Err(self.miss("score", text)),
            },
        }
    }

    fn embed_raw(&self, token_text: &str) -> Result<Vec<f64>> {
        match self.script.embeddings.get(token_text) {
            Some(values) => Ok(values.clone()),
            None => match &self.fallback {
                Some(mock) => mock.embed_raw(token_text),
                None => Err(self.miss("embedding", token_text)),
            },
        }
    }

    fn embed_last_raw(&self, text: &str) -> Result<Vec<f64>> {
        if let Some(values) = self.script.last_token_embeddings.get(text) {
            return Ok(values.clone());
        }
        let last = whitespace_tokenize(text).pop().unwrap_or(text);
        if let Some(values) = self.script.embeddings.get(last) {
            return Ok(values.clone());
        }
        match &self.fallback {
            Some(mock) => mock.embed_last_raw(text),
            None => Err(self.miss("last-token embedding", text)),
        }
    }

    fn complete(&self, request: &GenerationRequest) -> Result<Generation> {
        let (index, rule) = self
            .script
            .generations
            .iter()
            .enumerate()
            .find(|(_, rule)| {
                rule.contains
                    .as_deref()
                    .is_none_or(|needle| request.prompt.contains(needle))
            })
            .ok_or_else(|| self.miss("generation", &request.prompt))?;
        if rule.replies.is_empty() {
            return Err(self.miss("generation", &request.prompt));
        }
        let pick = match rule.mode {
            ReplyMode::Sequence => {
                let mut cursors = self.cursors.lock().unwrap();
                let pick = cursors[index] % rule.replies.len();
                cursors[index] += 1;
                pick
            }
            ReplyMode::BySeed => (request.seed.unwrap_or(0) % rule.replies.len() as u64) as usize,
            ReplyMode::ByPromptAndSeed => {
                let seed = request.seed.unwrap_or(0).to_le_bytes();
                (stable_hash(&[request.prompt.as_bytes(), &seed]) % rule.replies.len() as u64) as usize
            }
        };
        Ok(Generation {
            text: rule.replies[pick].clone(),
            truncated: rule.truncated,
            attempts: 1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{embed_last_token, embed_token, generate, score_tokens};

    #[test]
    fn echoes_scripted_logprobs() {
        let backend = ScriptedBackend::new(Script::default()).with_scores("a b", &[-1.0, -2.0]);
        let scored = score_tokens("a b", &backend).unwrap();
        let lps: Vec<f64> = scored.logprobs().collect();
        assert_eq!(lps, vec![-1.0, -2.0]);
        assert_eq!(scored.tokens[1].token_text, " b");
        assert_eq!(scored.tokens[1].position, 1);
    }

    #[test]
    fn empty_text_is_rejected_before_backend() {
        let backend = ScriptedBackend::new(Script::default());
        assert!(matches!(score_tokens("", &backend), Err(Error::EmptyInput(_))));
        assert!(matches!(embed_last_token("", &backend), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn logprob_count_must_match_tokens() {
        let backend = ScriptedBackend::new(Script::default()).with_scores("a b c", &[-1.0]);
        assert!(score_tokens("a b c", &backend).is_err());
    }

    #[test]
    fn embeddings_are_normalized() {
        let backend = ScriptedBackend::new(Script::default())
            .with_embedding("cat", &[3.0, 4.0])
            .with_last_token_embedding("x y", &[0.0, 2.0]);
        let cat = embed_token("cat", &backend).unwrap();
        assert!((cat.values[0] - 0.6).abs() < 1e-12 && (cat.values[1] - 0.8).abs() < 1e-12);
        let last = embed_last_token("x y", &backend).unwrap();
        assert_eq!(last.values, vec![0.0, 1.0]);
        assert_eq!(embed_last_token("cat", &backend).unwrap(), cat);
    }

    #[test]
    fn canned_reply_and_sequence() {
        let backend = ScriptedBackend::new(Script::default())
            .with_replies(Some("steps"), ["3", "4"])
            .with_replies(None, ["(A) Yes"]);
        let ask = |p: &str| generate(&GenerationRequest::new(p), &backend).unwrap().text;
        assert_eq!(ask("anything"), "(A) Yes");
        assert_eq!(ask("how many steps"), "3");
        assert_eq!(ask("how many steps"), "4");
        assert_eq!(ask("how many steps"), "3");
    }

    #[test]
    fn by_seed_replies_are_pure() {
        let backend = ScriptedBackend::new(Script::default()).with_rule(GenerationRule {
            contains: None,
            replies: vec!["A".into(), "B".into(), "C".into()],
            mode: ReplyMode::BySeed,
            truncated: false,
        });
        for seed in [0u64, 1, 2, 5, 5, 1] {
            let text = generate(&GenerationRequest::new("q").with_seed(seed), &backend)
                .unwrap()
                .text;
            assert_eq!(text, ["A", "B", "C"][(seed % 3) as usize]);
        }
    }

    #[test]
    fn prompt_and_seed_mode_is_pure_and_varies_with_prompt() {
        let backend = ScriptedBackend::new(Script::default()).with_rule(GenerationRule {
            contains: None,
            replies: (0..16).map(|i| i.to_string()).collect(),
            mode: ReplyMode::ByPromptAndSeed,
            truncated: false,
        });
        let get = |prompt: &str, seed: u64| {
            generate(&GenerationRequest::new(prompt).with_seed(seed), &backend)
                .unwrap()
                .text
        };
        assert_eq!(get("q1", 3), get("q1", 3));
        let distinct: std::collections::BTreeSet<String> = (0..8).map(|i| get(&format!("q{i}"), 0)).collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn unscripted_calls_fail_or_fall_back() {
        let strict = ScriptedBackend::new(Script::default());
        assert!(matches!(strict.score("zzz"), Err(Error::NotScripted { .. })));
        let lenient = ScriptedBackend::new(Script {
            fallback_to_mock: true,
            ..Script::default()
        });
        assert_eq!(
            lenient.score("zzz").unwrap().tokens,
            MockBackend::new("scripted").score("zzz").unwrap().tokens
        );
    }

    #[test]
    fn script_parses_from_json() {
        let script: Script = serde_json::from_str(
            r#"{
                "model_id": "m",
                "scores": {
                    "a b": {"logprobs": [-1.0, -2.0]},
                    "<s> hi": {"tokens": [
                        {"token_text": "<s>", "logprob": -0.1, "special": true},
                        {"token_text": " hi", "logprob": -3.0}
                    ]}
                },
                "embeddings": {"cat": [3, 4]},
                "generations": [{"contains": "Answer:", "replies": ["(A)"], "mode": "by_seed"}]
            }"#,
        )
        .unwrap();
        let backend = ScriptedBackend::new(script);
        assert!(backend.score("<s> hi").unwrap().tokens[0].special);
        assert_eq!(backend.model_id(), "m");
    }
}
