//! Prompt selection and cross-task demonstration ranking.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};

use crate::backend::{bounded_map, embed_last_token, score_tokens, Backend};
use crate::error::{Error, Result};
use crate::familiarity::perplexity;
use crate::jsonl::read_jsonl;
use crate::measure::{ComplexityScope, FamiCom};

pub const DEFAULT_MAX_INFLIGHT: usize = 8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptSource {
    #[default]
    Original,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePrompt {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub source: PromptSource,
    pub task_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemonstrationExample {
    pub id: String,
    pub task_id: String,
    pub question: String,
    pub cot_answer: String,
}

impl DemonstrationExample {
    /// Question and chain-of-thought answer joined by a newline.
    pub fn text(&self) -> String {
        format!("{}\n{}", self.question, self.cot_answer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Famicom,
    Spell,
    Knn,
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Famicom => "famicom",
            Self::Spell => "spell",
            Self::Knn => "knn",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub id: String,
    pub score: f64,
}

/// A candidate left out because its scoring failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dropped {
    pub id: String,
    pub reason: String,
}

/// Candidates ordered best first (non-increasing score, ties by id).
///
/// Serializes as an array of `{id, score, method}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedSelection {
    pub entries: Vec<RankedEntry>,
    pub method: SelectionMethod,
    pub dropped: Vec<Dropped>,
}

impl RankedSelection {
    pub fn ids(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.id.as_str()).collect()
    }

    pub fn winner(&self) -> Option<&RankedEntry> {
        self.entries.first()
    }

    /// Builds a ranking from per-candidate results, dropping failures.
    fn from_results(method: SelectionMethod, results: Vec<(String, Result<f64>)>, keep: usize) -> Result<Self> {
        let mut entries = Vec::new();
        let mut dropped = Vec::new();
        for (id, result) in results {
            match result {
                Ok(score) => entries.push(RankedEntry { id, score }),
                Err(e) => {
                    log::warn!("dropping candidate {id}: {e}");
                    dropped.push(Dropped {
                        id,
                        reason: e.to_string(),
                    });
                }
            }
        }
        if entries.is_empty() {
            return Err(Error::AllCandidatesFailed);
        }
        entries.sort_by(|x, y| y.score.total_cmp(&x.score).then_with(|| x.id.cmp(&y.id)));
        entries.truncate(keep);
        Ok(Self {
            entries,
            method,
            dropped,
        })
    }
}

impl Serialize for RankedSelection {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Row<'a> {
            id: &'a str,
            score: f64,
            method: SelectionMethod,
        }
        let mut seq = serializer.serialize_seq(Some(self.entries.len()))?;
        for entry in &self.entries {
            seq.serialize_element(&Row {
                id: &entry.id,
                score: entry.score,
                method: self.method,
            })?;
        }
        seq.end()
    }
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::InvalidConfig(format!("duplicate id {id:?}")));
        }
    }
    Ok(())
}

/// Ranks candidate prompts by the FamiCom score of (candidate, query).
pub fn select_prompt_famicom(
    candidates: &[CandidatePrompt],
    query: &str,
    scorer: &FamiCom,
    backend: &dyn Backend,
    max_inflight: usize,
) -> Result<RankedSelection> {
    if candidates.is_empty() {
        return Err(Error::PoolTooSmall {
            available: 0,
            requested: 1,
        });
    }
    check_unique(candidates.iter().map(|c| c.id.as_str()))?;
    let texts: Vec<String> = candidates.iter().map(|c| c.text.clone()).collect();
    let scores = score_prompts(&texts, query, scorer, backend, max_inflight)?;
    let results = candidates.iter().map(|c| c.id.clone()).zip(scores).collect();
    RankedSelection::from_results(SelectionMethod::Famicom, results, candidates.len())
}

/// FamiCom scores of several prompts against one query. With query-scoped
/// complexity the query is estimated once, before the fan-out.
fn score_prompts(
    prompts: &[String],
    query: &str,
    scorer: &FamiCom,
    backend: &dyn Backend,
    max_inflight: usize,
) -> Result<Vec<Result<f64>>> {
    let shared = match scorer.config.complexity_scope {
        ComplexityScope::Query => Some(scorer.complexity(query, backend)?),
        ComplexityScope::PromptAndQuery => None,
    };
    Ok(bounded_map(prompts, max_inflight, |_, prompt| {
        let breakdown = match &shared {
            Some(c) => scorer.score_pair_with_complexity(prompt, query, c.clone(), backend),
            None => scorer.score_pair(prompt, query, backend),
        };
        breakdown.map(|b| b.score)
    }))
}

/// Ranks candidate prompts by ascending perplexity of the prompt text alone.
/// The reported score is the negated perplexity.
pub fn select_prompt_spell(
    candidates: &[CandidatePrompt],
    backend: &dyn Backend,
    max_inflight: usize,
) -> Result<RankedSelection> {
    if candidates.is_empty() {
        return Err(Error::PoolTooSmall {
            available: 0,
            requested: 1,
        });
    }
    check_unique(candidates.iter().map(|c| c.id.as_str()))?;
    let scores = bounded_map(candidates, max_inflight, |_, c| {
        score_tokens(&c.text, backend)
            .and_then(|s| perplexity(&s))
            .map(|ppl| -ppl)
    });
    let results = candidates.iter().map(|c| c.id.clone()).zip(scores).collect();
    RankedSelection::from_results(SelectionMethod::Spell, results, candidates.len())
}

fn check_pool(pool: &[DemonstrationExample], k: usize) -> Result<()> {
    if k == 0 || pool.len() < k {
        return Err(Error::PoolTooSmall {
            available: pool.len(),
            requested: k,
        });
    }
    check_unique(pool.iter().map(|d| d.id.as_str()))
}

/// Top-`k` demonstrations by FamiCom of (demonstration text, query).
pub fn rank_demonstrations_famicom(
    pool: &[DemonstrationExample],
    query: &str,
    k: usize,
    scorer: &FamiCom,
    backend: &dyn Backend,
    max_inflight: usize,
) -> Result<RankedSelection> {
    check_pool(pool, k)?;
    let texts: Vec<String> = pool.iter().map(DemonstrationExample::text).collect();
    let scores = score_prompts(&texts, query, scorer, backend, max_inflight)?;
    let results = pool.iter().map(|d| d.id.clone()).zip(scores).collect();
    RankedSelection::from_results(SelectionMethod::Famicom, results, k)
}

/// Top-`k` demonstrations by cosine similarity of last-token embeddings.
pub fn rank_demonstrations_knn(
    pool: &[DemonstrationExample],
    query: &str,
    k: usize,
    backend: &dyn Backend,
    max_inflight: usize,
) -> Result<RankedSelection> {
    check_pool(pool, k)?;
    let target = embed_last_token(query, backend)?;
    let scores = bounded_map(pool, max_inflight, |_, demo| {
        embed_last_token(&demo.text(), backend).and_then(|e| e.cosine(&target))
    });
    let results = pool.iter().map(|d| d.id.clone()).zip(scores).collect();
    RankedSelection::from_results(SelectionMethod::Knn, results, k)
}

/// The selected demonstrations in prompt order: lowest score first, so the
/// best demonstration sits next to the question.
pub fn prompt_order<'a>(
    selection: &RankedSelection,
    pool: &'a [DemonstrationExample],
) -> Vec<&'a DemonstrationExample> {
    selection
        .entries
        .iter()
        .rev()
        .filter_map(|entry| pool.iter().find(|d| d.id == entry.id))
        .collect()
}

pub fn load_candidates(path: &Path) -> Result<Vec<CandidatePrompt>> {
    let candidates: Vec<CandidatePrompt> = read_jsonl(path)?;
    for (i, c) in candidates.iter().enumerate() {
        if c.text.is_empty() {
            return Err(Error::Schema {
                line: i + 1,
                message: format!("candidate {} has empty text", c.id),
            });
        }
    }
    check_unique(candidates.iter().map(|c| c.id.as_str()))?;
    Ok(candidates)
}

pub fn load_pool(path: &Path) -> Result<Vec<DemonstrationExample>> {
    let pool: Vec<DemonstrationExample> = read_jsonl(path)?;
    for (i, d) in pool.iter().enumerate() {
        if d.question.is_empty() || d.cot_answer.is_empty() {
            return Err(Error::Schema {
                line: i + 1,
                message: format!("demonstration {} has an empty question or answer", d.id),
            });
        }
    }
    check_unique(pool.iter().map(|d| d.id.as_str()))?;
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{MockBackend, Script, ScriptedBackend};
    use crate::complexity::ComplexityMethod;
    use crate::familiarity::FamiliarityMethod;
    use crate::measure::FamiComConfig;

    fn candidate(id: &str, text: &str) -> CandidatePrompt {
        CandidatePrompt {
            id: id.into(),
            text: text.into(),
            source: PromptSource::Generated,
            task_id: "t".into(),
        }
    }

    fn demo(id: &str, q: &str) -> DemonstrationExample {
        DemonstrationExample {
            id: id.into(),
            task_id: format!("task-{id}"),
            question: q.into(),
            cot_answer: "so (A)".into(),
        }
    }

    fn ppl_scorer() -> FamiCom {
        FamiCom::new(FamiComConfig {
            familiarity_method: FamiliarityMethod::Ppl,
            complexity_method: ComplexityMethod::Direct,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn spell_prefers_lowest_perplexity() {
        // PPL(x) = e^2.5 ~ 12.2, PPL(y) = e^2.25 ~ 9.5
        let backend = ScriptedBackend::new(Script::default())
            .with_scores("x", &[-2.5])
            .with_scores("y", &[-2.25]);
        let sel = select_prompt_spell(&[candidate("X", "x"), candidate("Y", "y")], &backend, 2).unwrap();
        assert_eq!(sel.ids(), vec!["Y", "X"]);
    }

    #[test]
    fn ties_break_by_id() {
        let backend = ScriptedBackend::new(Script::default())
            .with_scores("same", &[-2.0])
            .with_scores("same\nq", &[-2.0, -2.0])
            .with_replies(None, ["3"]);
        let cands = [candidate("b", "same"), candidate("a", "same")];
        assert_eq!(select_prompt_spell(&cands, &backend, 1).unwrap().ids(), vec!["a", "b"]);
        let sel = select_prompt_famicom(&cands, "q", &ppl_scorer(), &backend, 1).unwrap();
        assert_eq!(sel.ids(), vec!["a", "b"]);
    }

    #[test]
    fn single_candidate_wins() {
        let sel = select_prompt_famicom(
            &[candidate("only", "p")],
            "q",
            &ppl_scorer(),
            &MockBackend::default(),
            4,
        )
        .unwrap();
        assert_eq!(sel.ids(), vec!["only"]);
    }

    #[test]
    fn failing_candidates_are_dropped() {
        let backend = ScriptedBackend::new(Script::default())
            .with_scores("good\nq", &[-1.0, -1.0])
            .with_replies(None, ["2"]);
        let sel = select_prompt_famicom(
            &[candidate("a", "good"), candidate("b", "bad")],
            "q",
            &ppl_scorer(),
            &backend,
            2,
        )
        .unwrap();
        assert_eq!(sel.ids(), vec!["a"]);
        assert_eq!(sel.dropped.len(), 1);
        assert_eq!(sel.dropped[0].id, "b");
        let none = select_prompt_famicom(&[candidate("b", "bad")], "q", &ppl_scorer(), &backend, 2);
        assert!(matches!(none, Err(Error::AllCandidatesFailed)));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let cands = [candidate("a", "x"), candidate("a", "y")];
        assert!(select_prompt_spell(&cands, &MockBackend::default(), 1).is_err());
    }

    #[test]
    fn famicom_demo_ranking_takes_top_k() {
        // familiarity 0.3, 0.2, 0.1 at complexity 1
        let pool = [demo("d1", "one"), demo("d2", "two"), demo("d3", "three")];
        let mut backend = ScriptedBackend::new(Script::default()).with_replies(None, ["1"]);
        for (d, f) in pool.iter().zip([0.3f64, 0.2, 0.1]) {
            let text = format!("{}\nq", d.text());
            let n = crate::backend::whitespace_tokenize(&text).len();
            backend = backend.with_scores(&text, &vec![f.ln(); n]);
        }
        let sel = rank_demonstrations_famicom(&pool, "q", 2, &ppl_scorer(), &backend, 3).unwrap();
        assert_eq!(sel.ids(), vec!["d1", "d2"]);
        assert!((sel.entries[0].score - 0.3).abs() < 1e-12);
        let all = rank_demonstrations_famicom(&pool, "q", 3, &ppl_scorer(), &backend, 3).unwrap();
        assert_eq!(all.ids(), vec!["d1", "d2", "d3"]);
        let order: Vec<&str> = prompt_order(&sel, &pool).iter().map(|d| d.id.as_str()).collect();
        assert_eq!(order, vec!["d2", "d1"]);
        assert!(matches!(
            rank_demonstrations_famicom(&pool, "q", 4, &ppl_scorer(), &backend, 3),
            Err(Error::PoolTooSmall {
                available: 3,
                requested: 4
            })
        ));
    }

    #[test]
    fn knn_ranks_by_cosine() {
        let pool = [demo("a", "alpha"), demo("b", "beta")];
        let backend = ScriptedBackend::new(Script::default())
            .with_last_token_embedding("query", &[1.0, 1.0])
            .with_last_token_embedding(&pool[0].text(), &[2.0, 2.0])
            .with_last_token_embedding(&pool[1].text(), &[1.0, -1.0]);
        let sel = rank_demonstrations_knn(&pool, "query", 1, &backend, 2).unwrap();
        assert_eq!(sel.ids(), vec!["a"]);
        assert!((sel.entries[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn knn_identical_embeddings_fall_back_to_id_order() {
        let pool = [demo("c", "x"), demo("a", "y"), demo("b", "z")];
        let mut backend = ScriptedBackend::new(Script::default()).with_last_token_embedding("query", &[0.0, 1.0]);
        for d in &pool {
            backend = backend.with_last_token_embedding(&d.text(), &[0.0, 3.0]);
        }
        let sel = rank_demonstrations_knn(&pool, "query", 2, &backend, 2).unwrap();
        assert_eq!(sel.ids(), vec!["a", "b"]);
    }

    #[test]
    fn serializes_as_array() {
        let sel = RankedSelection {
            entries: vec![RankedEntry {
                id: "x".into(),
                score: 0.5,
            }],
            method: SelectionMethod::Knn,
            dropped: vec![],
        };
        assert_eq!(
            serde_json::to_string(&sel).unwrap(),
            r#"[{"id":"x","score":0.5,"method":"knn"}]"#
        );
    }
}
