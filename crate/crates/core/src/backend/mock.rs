use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{stable_hash, whitespace_tokenize, Backend, Generation, GenerationRequest, ScoredText};
use crate::complexity::{OPERATIONAL_CUE, STEP_COUNT_CUE};
use crate::error::Result;

pub const MOCK_EMBEDDING_DIM: usize = 16;

/// Deterministic stand-in model. Every value is a pure function of the input,
/// the model id and (for generation) the seed.
///
/// Token log-probability is `-(1 + (h mod 400) / 100)` where `h` hashes
/// `(token_text, model_id)`, so values fall in `[-5.00, -1.00]`.
#[derive(Debug, Clone)]
pub struct MockBackend {
    model_id: String,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new("mock")
    }
}

impl MockBackend {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
        }
    }

    fn token_hash(&self, token_text: &str) -> u64 {
        stable_hash(&[token_text.as_bytes(), self.model_id.as_bytes()])
    }

    pub fn token_logprob(&self, token_text: &str) -> f64 {
        -(1.0 + (self.token_hash(token_text) % 400) as f64 / 100.0)
    }

    fn token_embedding(&self, token_text: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.token_hash(token_text));
        (0..MOCK_EMBEDDING_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

const PROGRAM_LINES: [&str; 8] = [
    "sel = select(tokens, tokens, equal)",
    "width = selector_width(sel)",
    "prev = shift_right(tokens, 1)",
    "flags = map(is_digit, tokens)",
    "pairs = seq_map(combine, tokens, prev)",
    "total = cumsum(flags)",
    "agg = aggregate(sel, flags)",
    "out = where(flags, tokens, prev)",
];

impl Backend for MockBackend {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn score(&self, text: &str) -> Result<ScoredText> {
        let pieces = whitespace_tokenize(text)
            .into_iter()
            .map(|piece| (piece.to_string(), self.token_logprob(piece), false));
        ScoredText::from_pieces(text, self.model_id.as_str(), pieces)
    }

    fn embed_raw(&self, token_text: &str) -> Result<Vec<f64>> {
        Ok(self.token_embedding(token_text))
    }

    fn embed_last_raw(&self, text: &str) -> Result<Vec<f64>> {
        let last = whitespace_tokenize(text).pop().unwrap_or(text);
        self.embed_raw(last)
    }

    fn complete(&self, request: &GenerationRequest) -> Result<Generation> {
        let seed_bytes = match request.seed {
            Some(seed) => seed.to_le_bytes().to_vec(),
            None => Vec::new(),
        };
        let h = stable_hash(&[
            self.model_id.as_bytes(),
            request.prompt.as_bytes(),
            &seed_bytes,
            &request.temperature.to_bits().to_le_bytes(),
        ]);
        let prompt = request.prompt.trim_end();
        let text = if prompt.ends_with(OPERATIONAL_CUE) {
            let n = 1 + (h % PROGRAM_LINES.len() as u64) as usize;
            format!("```\n{}\n```", PROGRAM_LINES[..n].join("\n"))
        } else if prompt.ends_with(STEP_COUNT_CUE) {
            format!("It takes {} steps.", 1 + h % 6)
        } else {
            let labels = option_labels(prompt);
            let label = if labels.is_empty() {
                'A'
            } else {
                labels[(h % labels.len() as u64) as usize]
            };
            format!("The answer is ({label}).")
        };
        Ok(Generation {
            text,
            truncated: false,
            attempts: 1,
        })
    }
}

/// Option labels offered after the last "Options:" marker in a prompt.
fn option_labels(prompt: &str) -> Vec<char> {
    let tail = prompt.rfind("Options:").map_or(prompt, |i| &prompt[i..]);
    let bytes = tail.as_bytes();
    let mut labels = Vec::new();
    for w in bytes.windows(3) {
        if w[0] == b'(' && w[1].is_ascii_uppercase() && w[2] == b')' {
            let c = w[1] as char;
            if !labels.contains(&c) {
                labels.push(c);
            }
        }
    }
    labels
}
