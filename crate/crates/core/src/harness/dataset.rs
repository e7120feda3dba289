use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backend::stable_hash;
use crate::error::{Error, Result};
use crate::jsonl::read_jsonl_lines;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqOption {
    pub label: String,
    pub text: String,
}

/// A multiple-choice question with options labeled `A`, `B`, ...
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqInstance {
    pub id: String,
    #[serde(rename = "task")]
    pub task_id: String,
    pub question: String,
    pub options: Vec<McqOption>,
    #[serde(rename = "answer")]
    pub gold_label: String,
}

/// Label for the option at `index`: `A`, `B`, ... `Z`.
pub fn label_for(index: usize) -> String {
    assert!(index < 26, "at most 26 options are supported");
    char::from(b'A' + index as u8).to_string()
}

impl McqInstance {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.question.is_empty() {
            return Err(format!("instance {}: empty question", self.id));
        }
        if self.options.is_empty() || self.options.len() > 26 {
            return Err(format!("instance {}: needs 1 to 26 options", self.id));
        }
        let mut seen = HashSet::new();
        for (i, option) in self.options.iter().enumerate() {
            if !seen.insert(option.label.as_str()) {
                return Err(format!("instance {}: duplicate label {}", self.id, option.label));
            }
            if option.label != label_for(i) {
                return Err(format!(
                    "instance {}: option {} is labeled {:?}, expected {:?}",
                    self.id,
                    i + 1,
                    option.label,
                    label_for(i)
                ));
            }
        }
        if !seen.contains(self.gold_label.as_str()) {
            return Err(format!(
                "instance {}: gold label {} is not an option",
                self.id, self.gold_label
            ));
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<String> {
        self.options.iter().map(|o| o.label.clone()).collect()
    }

    pub fn gold_text(&self) -> Option<&str> {
        self.options
            .iter()
            .find(|o| o.label == self.gold_label)
            .map(|o| o.text.as_str())
    }

    /// `<question>\nOptions: (A) ... (B) ...`
    pub fn render(&self) -> String {
        let options: Vec<String> = self
            .options
            .iter()
            .map(|o| format!("({}) {}", o.label, o.text))
            .collect();
        format!("{}\nOptions: {}", self.question, options.join(" "))
    }
}

pub fn load_dataset(path: &Path) -> Result<Vec<McqInstance>> {
    let rows: Vec<(usize, McqInstance)> = read_jsonl_lines(path)?;
    let mut ids = HashSet::new();
    let mut instances = Vec::with_capacity(rows.len());
    for (line, instance) in rows {
        instance.validate().map_err(|message| Error::Schema { line, message })?;
        if !ids.insert(instance.id.clone()) {
            return Err(Error::Schema {
                line,
                message: format!("duplicate instance id {}", instance.id),
            });
        }
        instances.push(instance);
    }
    Ok(instances)
}

pub(crate) fn derived_rng(tag: &str, seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    let seed_bytes = seed.to_le_bytes();
    let mut all: Vec<&[u8]> = vec![tag.as_bytes(), &seed_bytes];
    all.extend_from_slice(parts);
    ChaCha8Rng::seed_from_u64(stable_hash(&all))
}

/// Keeps the gold option and one uniformly drawn distractor, in random
/// order, relabeled `A`/`B`. Deterministic in `(seed, instance.id)`.
pub fn reduce_to_binary(instance: &McqInstance, seed: u64) -> Result<McqInstance> {
    if instance.options.len() < 2 {
        return Err(Error::TooFewOptions(instance.id.clone()));
    }
    let gold = instance
        .options
        .iter()
        .find(|o| o.label == instance.gold_label)
        .ok_or_else(|| Error::Schema {
            line: 0,
            message: format!("instance {}: gold label is not an option", instance.id),
        })?;
    let distractors: Vec<&McqOption> = instance
        .options
        .iter()
        .filter(|o| o.label != instance.gold_label)
        .collect();
    let mut rng = derived_rng("binary", seed, &[instance.id.as_bytes()]);
    let distractor = distractors.choose(&mut rng).expect("at least one distractor");
    let gold_first = rng.gen_bool(0.5);
    let (first, second) = if gold_first {
        (gold, *distractor)
    } else {
        (*distractor, gold)
    };
    Ok(McqInstance {
        id: instance.id.clone(),
        task_id: instance.task_id.clone(),
        question: instance.question.clone(),
        options: vec![
            McqOption {
                label: "A".into(),
                text: first.text.clone(),
            },
            McqOption {
                label: "B".into(),
                text: second.text.clone(),
            },
        ],
        gold_label: if gold_first { "A" } else { "B" }.into(),
    })
}
