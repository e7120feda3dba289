use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{derived_rng, McqInstance};
use crate::error::{Error, Result};
use crate::selection::{CandidatePrompt, DemonstrationExample};

/// One unit of evaluation: a question plus the context placed before it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub instance: McqInstance,
    /// Index distinguishing several contexts for the same instance.
    pub pairing: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<CandidatePrompt>,
    /// Demonstrations in prompt order.
    pub demos: Vec<DemonstrationExample>,
}

impl EvalItem {
    pub fn context_ids(&self) -> Vec<String> {
        self.instruction
            .iter()
            .map(|p| p.id.clone())
            .chain(self.demos.iter().map(|d| d.id.clone()))
            .collect()
    }

    /// Instruction and demonstrations, separated by blank lines.
    pub fn context(&self) -> String {
        self.instruction
            .iter()
            .map(|p| p.text.clone())
            .chain(self.demos.iter().map(DemonstrationExample::text))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// The full prompt: context, then the question and the answer cue.
    pub fn prompt(&self) -> String {
        let context = self.context();
        let question = self.instance.render();
        if context.is_empty() {
            format!("{question}\nAnswer:")
        } else {
            format!("{context}\n\n{question}\nAnswer:")
        }
    }
}

/// Pairs every instance with `repeats` draws of `demos_per_question`
/// demonstrations, taken without replacement from tasks other than the
/// instance's own.
pub fn generate_cross_task_pairings(
    instances: &[McqInstance],
    pool: &[DemonstrationExample],
    demos_per_question: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<EvalItem>> {
    let mut items = Vec::with_capacity(instances.len() * repeats);
    for instance in instances {
        let eligible: Vec<&DemonstrationExample> = pool.iter().filter(|d| d.task_id != instance.task_id).collect();
        if eligible.len() < demos_per_question {
            return Err(Error::InsufficientPool {
                task: instance.task_id.clone(),
                available: eligible.len(),
                requested: demos_per_question,
            });
        }
        for pairing in 0..repeats {
            let mut rng = derived_rng(
                "pairing",
                seed,
                &[instance.id.as_bytes(), &(pairing as u64).to_le_bytes()],
            );
            let mut shuffled = eligible.clone();
            let (chosen, _) = shuffled.partial_shuffle(&mut rng, demos_per_question);
            items.push(EvalItem {
                instance: instance.clone(),
                pairing,
                instruction: None,
                demos: chosen.iter().map(|d| (*d).clone()).collect(),
            });
        }
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::dataset::{label_for, McqOption};
    use std::collections::HashSet;

    fn instance(task: &str, n: usize) -> McqInstance {
        McqInstance {
            id: format!("{task}-{n}"),
            task_id: task.into(),
            question: format!("question {n} of {task}"),
            options: (0..2)
                .map(|i| McqOption {
                    label: label_for(i),
                    text: format!("option {i}"),
                })
                .collect(),
            gold_label: "A".into(),
        }
    }

    fn demo(task: &str, n: usize) -> DemonstrationExample {
        DemonstrationExample {
            id: format!("{task}-demo-{n}"),
            task_id: task.into(),
            question: format!("demo {n} of {task}"),
            cot_answer: "Reasoning. So the answer is (A).".into(),
        }
    }

    fn fixture() -> (Vec<McqInstance>, Vec<DemonstrationExample>) {
        let tasks = ["t1", "t2", "t3"];
        let instances = tasks.iter().flat_map(|t| (0..2).map(move |n| instance(t, n))).collect();
        let pool = tasks.iter().flat_map(|t| (0..3).map(move |n| demo(t, n))).collect();
        (instances, pool)
    }

    #[test]
    fn excludes_same_task_demos() {
        let (instances, pool) = fixture();
        let items = generate_cross_task_pairings(&instances, &pool, 3, 1, 0).unwrap();
        assert_eq!(items.len(), 6);
        for item in &items {
            assert_eq!(item.demos.len(), 3);
            assert!(item.demos.iter().all(|d| d.task_id != item.instance.task_id));
            let ids: HashSet<&str> = item.demos.iter().map(|d| d.id.as_str()).collect();
            assert_eq!(ids.len(), 3);
        }
    }

    #[test]
    fn zero_repeats_is_empty() {
        let (instances, pool) = fixture();
        assert!(generate_cross_task_pairings(&instances, &pool, 3, 0, 0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn deterministic_per_seed() {
        let (instances, pool) = fixture();
        let a = generate_cross_task_pairings(&instances, &pool, 3, 4, 11).unwrap();
        let b = generate_cross_task_pairings(&instances, &pool, 3, 4, 11).unwrap();
        let c = generate_cross_task_pairings(&instances, &pool, 3, 4, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.iter().map(|i| i.pairing).max(), Some(3));
    }

    #[test]
    fn insufficient_pool() {
        let (instances, pool) = fixture();
        match generate_cross_task_pairings(&instances, &pool, 7, 1, 0) {
            Err(Error::InsufficientPool {
                available: 6,
                requested: 7,
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn prompt_layout() {
        let (instances, pool) = fixture();
        let item = EvalItem {
            instance: instances[0].clone(),
            pairing: 0,
            instruction: None,
            demos: vec![pool[3].clone(), pool[4].clone()],
        };
        let prompt = item.prompt();
        assert!(prompt.starts_with("demo 0 of t2\nReasoning."));
        assert!(prompt.contains("(A).\n\ndemo 1 of t2"));
        assert!(prompt.ends_with("Options: (A) option 0 (B) option 1\nAnswer:"));
        assert_eq!(item.context_ids(), vec!["t2-demo-0", "t2-demo-1"]);
    }
}
