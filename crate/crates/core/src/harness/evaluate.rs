//! Self-consistency evaluation of prompts, with measures attached.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pairing::EvalItem;
use super::stats::{bin_and_correlate, CorrelationReport};
use super::vote::{extract_answer, majority_vote};
use crate::backend::{bounded_map, generate, Backend, GenerationRequest, DEFAULT_TEMPERATURE};
use crate::complexity::ComplexityReport;
use crate::error::{Error, Result};
use crate::measure::{famicom_score, ComplexityScope, FamiCom, MeasureBreakdown};

pub const DEFAULT_RUNS: usize = 5;

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub runs: usize,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Run `r` of every item is sampled with seed `seed + r`.
    pub seed: u64,
    pub max_inflight: usize,
    /// Attach FamiCom measures to every record when set.
    pub scorer: Option<FamiCom>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            runs: DEFAULT_RUNS,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: 256,
            seed: 0,
            max_inflight: 8,
            scorer: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub instance_id: String,
    pub task_id: String,
    pub pairing: usize,
    pub context_ids: Vec<String>,
    pub responses: Vec<String>,
    pub prediction: Option<String>,
    pub gold_label: String,
    pub correct: bool,
    #[serde(default)]
    pub tie: bool,
    pub measures: Option<MeasureBreakdown>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure_error: Option<String>,
}

/// An item whose generations failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemFailure {
    pub instance_id: String,
    pub pairing: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    /// Sorted by `(instance_id, pairing)`.
    pub records: Vec<EvalRecord>,
    pub failures: Vec<ItemFailure>,
}

pub fn accuracy(records: &[EvalRecord]) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    Some(records.iter().filter(|r| r.correct).count() as f64 / records.len() as f64)
}

pub fn evaluate(items: &[EvalItem], backend: &dyn Backend, config: &EvalConfig) -> Result<EvalOutcome> {
    if config.runs == 0 {
        return Err(Error::InvalidConfig("runs must be at least 1".into()));
    }
    if items.is_empty() {
        return Ok(EvalOutcome {
            records: Vec::new(),
            failures: Vec::new(),
        });
    }
    let complexities = shared_complexities(items, backend, config);
    let results = bounded_map(items, config.max_inflight, |_, item| {
        evaluate_item(item, backend, config, &complexities)
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (item, result) in items.iter().zip(results) {
        match result {
            Ok(record) => records.push(record),
            Err(e) => {
                log::warn!("item {}#{} failed: {e}", item.instance.id, item.pairing);
                failures.push(ItemFailure {
                    instance_id: item.instance.id.clone(),
                    pairing: item.pairing,
                    reason: e.to_string(),
                });
            }
        }
    }
    if records.is_empty() {
        return Err(Error::AllItemsFailed);
    }
    records.sort_by(|a, b| (&a.instance_id, a.pairing).cmp(&(&b.instance_id, b.pairing)));
    Ok(EvalOutcome { records, failures })
}

type ComplexityCache = HashMap<String, std::result::Result<ComplexityReport, String>>;

/// Query-scoped complexity for each distinct question, computed once up
/// front in first-appearance order.
fn shared_complexities(items: &[EvalItem], backend: &dyn Backend, config: &EvalConfig) -> ComplexityCache {
    let Some(scorer) = &config.scorer else {
        return HashMap::new();
    };
    if scorer.config.complexity_scope != ComplexityScope::Query {
        return HashMap::new();
    }
    let mut queries: Vec<String> = Vec::new();
    for item in items {
        let q = item.instance.render();
        if !queries.contains(&q) {
            queries.push(q);
        }
    }
    let reports = bounded_map(&queries, config.max_inflight, |_, q| {
        scorer.complexity(q, backend).map_err(|e| e.to_string())
    });
    queries.into_iter().zip(reports).collect()
}

fn evaluate_item(
    item: &EvalItem,
    backend: &dyn Backend,
    config: &EvalConfig,
    complexities: &ComplexityCache,
) -> Result<EvalRecord> {
    let prompt = item.prompt();
    let labels = item.instance.labels();
    let mut responses = Vec::with_capacity(config.runs);
    for run in 0..config.runs {
        let request = GenerationRequest::new(prompt.as_str())
            .with_temperature(config.temperature)
            .with_max_tokens(config.max_tokens)
            .with_seed(config.seed.wrapping_add(run as u64));
        responses.push(generate(&request, backend)?.text);
    }
    let extracted: Vec<Option<String>> = responses.iter().map(|r| extract_answer(r, &labels)).collect();
    let vote = majority_vote(&extracted);
    let correct = vote.label.as_deref() == Some(item.instance.gold_label.as_str());
    let (measures, measure_error) = match item_measures(item, backend, config, complexities) {
        Ok(m) => (m, None),
        Err(e) => {
            log::warn!("measures failed for {}#{}: {e}", item.instance.id, item.pairing);
            (None, Some(e.to_string()))
        }
    };
    Ok(EvalRecord {
        instance_id: item.instance.id.clone(),
        task_id: item.instance.task_id.clone(),
        pairing: item.pairing,
        context_ids: item.context_ids(),
        responses,
        prediction: vote.label,
        gold_label: item.instance.gold_label.clone(),
        correct,
        tie: vote.tie,
        measures,
        measure_error,
    })
}

fn item_measures(
    item: &EvalItem,
    backend: &dyn Backend,
    config: &EvalConfig,
    complexities: &ComplexityCache,
) -> Result<Option<MeasureBreakdown>> {
    let Some(scorer) = &config.scorer else {
        return Ok(None);
    };
    let context = item.context();
    if context.is_empty() {
        return Ok(None);
    }
    let query = item.instance.render();
    let breakdown = match complexities.get(&query) {
        Some(Ok(c)) => scorer.score_pair_with_complexity(&context, &query, c.clone(), backend)?,
        Some(Err(reason)) => return Err(Error::Domain(format!("complexity failed: {reason}"))),
        None => scorer.score_pair(&context, &query, backend)?,
    };
    Ok(Some(breakdown))
}

/// Which attached measure to correlate with correctness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Familiarity,
    /// `1 / complexity`, so that higher means easier.
    InverseComplexity,
    Famicom,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 3] = [Self::Famicom, Self::Familiarity, Self::InverseComplexity];

    pub fn value(self, record: &EvalRecord) -> Option<f64> {
        let m = record.measures.as_ref()?;
        Some(match self {
            Self::Familiarity => m.familiarity.value,
            Self::InverseComplexity => 1.0 / m.complexity.mean,
            Self::Famicom => m.score,
        })
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Familiarity => "familiarity",
            Self::InverseComplexity => "inverse_complexity",
            Self::Famicom => "famicom",
        })
    }
}

impl FromStr for MeasureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "familiarity" => Ok(Self::Familiarity),
            "inverse_complexity" | "complexity" => Ok(Self::InverseComplexity),
            "famicom" => Ok(Self::Famicom),
            other => Err(Error::InvalidConfig(format!("unknown measure {other:?}"))),
        }
    }
}

/// Binned correlation between a measure and correctness. Records without
/// the measure are skipped.
pub fn correlate_records<F>(records: &[EvalRecord], measure: F, n_bins: usize) -> Result<CorrelationReport>
where
    F: Fn(&EvalRecord) -> Option<f64>,
{
    let points: Vec<(f64, bool)> = records
        .iter()
        .filter_map(|r| measure(r).map(|m| (m, r.correct)))
        .collect();
    bin_and_correlate(&points, n_bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub a: f64,
    pub b: f64,
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
}

/// Re-scores records with every `(a, b)` pair and correlates each variant.
/// Degenerate combinations are reported with empty statistics.
pub fn grid_search(
    records: &[EvalRecord],
    a_values: &[f64],
    b_values: &[f64],
    n_bins: usize,
) -> Result<Vec<GridPoint>> {
    let mut out = Vec::with_capacity(a_values.len() * b_values.len());
    for &a in a_values {
        for &b in b_values {
            if !(a > 0.0 && b > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "grid values must be positive (a={a}, b={b})"
                )));
            }
            let report = correlate_records(
                records,
                |r| {
                    let m = r.measures.as_ref()?;
                    famicom_score(m.familiarity.value, m.complexity.mean, a, b).ok()
                },
                n_bins,
            );
            out.push(match report {
                Ok(rep) => GridPoint {
                    a,
                    b,
                    rho: Some(rep.rho),
                    p_value: Some(rep.p_value),
                },
                Err(e) => {
                    log::warn!("grid point a={a} b={b}: {e}");
                    GridPoint {
                        a,
                        b,
                        rho: None,
                        p_value: None,
                    }
                }
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{GenerationRule, MockBackend, ReplyMode, Script, ScriptedBackend};
    use crate::harness::dataset::{label_for, McqInstance, McqOption};
    use crate::measure::FamiComConfig;
    use crate::selection::DemonstrationExample;

    fn item(id: &str, gold: &str) -> EvalItem {
        EvalItem {
            instance: McqInstance {
                id: id.into(),
                task_id: "t".into(),
                question: format!("question {id}"),
                options: (0..2)
                    .map(|i| McqOption {
                        label: label_for(i),
                        text: format!("opt{i}"),
                    })
                    .collect(),
                gold_label: gold.into(),
            },
            pairing: 0,
            instruction: None,
            demos: vec![DemonstrationExample {
                id: "d".into(),
                task_id: "u".into(),
                question: "demo q".into(),
                cot_answer: "so (A)".into(),
            }],
        }
    }

    fn by_seed(replies: &[&str]) -> ScriptedBackend {
        ScriptedBackend::new(Script {
            fallback_to_mock: true,
            ..Script::default()
        })
        .with_replies(Some("Number of steps:"), ["2"])
        .with_rule(GenerationRule {
            contains: Some("Answer:".into()),
            replies: replies.iter().map(|s| s.to_string()).collect(),
            mode: ReplyMode::BySeed,
            truncated: false,
        })
    }

    #[test]
    fn always_a_is_always_right_on_gold_a() {
        let items: Vec<EvalItem> = (0..4).map(|i| item(&format!("i{i}"), "A")).collect();
        let outcome = evaluate(&items, &by_seed(&["(A)"]), &EvalConfig::default()).unwrap();
        assert_eq!(accuracy(&outcome.records), Some(1.0));
        assert!(outcome.records.iter().all(|r| r.responses.len() == 5));
    }

    #[test]
    fn vote_decides_correctness() {
        let outcome = evaluate(
            &[item("x", "A")],
            &by_seed(&["(A)", "(A)", "(B)", "(A)", "(B)"]),
            &EvalConfig::default(),
        )
        .unwrap();
        let record = &outcome.records[0];
        assert_eq!(record.responses, vec!["(A)", "(A)", "(B)", "(A)", "(B)"]);
        assert_eq!(record.prediction.as_deref(), Some("A"));
        assert!(record.correct);
    }

    #[test]
    fn unparseable_answers_are_wrong() {
        let outcome = evaluate(&[item("x", "A")], &by_seed(&["no idea"]), &EvalConfig::default()).unwrap();
        assert_eq!(outcome.records[0].prediction, None);
        assert!(!outcome.records[0].correct);
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        // Only prompts for instance "ok" have a scripted reply.
        let backend = ScriptedBackend::new(Script::default()).with_replies(Some("question ok"), ["(A)"]);
        let outcome = evaluate(&[item("ok", "A"), item("bad", "A")], &backend, &EvalConfig::default()).unwrap();
        assert_eq!(outcome.records.len(), 1);
        assert_eq!(outcome.failures.len(), 1);
        assert_eq!(outcome.failures[0].instance_id, "bad");
        assert!(matches!(
            evaluate(&[item("bad", "A")], &backend, &EvalConfig::default()),
            Err(Error::AllItemsFailed)
        ));
    }

    #[test]
    fn measures_are_attached_and_sorted() {
        let scorer = FamiCom::new(FamiComConfig::default()).unwrap();
        let config = EvalConfig {
            scorer: Some(scorer),
            ..EvalConfig::default()
        };
        let items = vec![item("z", "B"), item("a", "A")];
        let outcome = evaluate(&items, &MockBackend::default(), &config).unwrap();
        assert_eq!(outcome.records[0].instance_id, "a");
        for r in &outcome.records {
            let m = r.measures.as_ref().unwrap();
            assert_eq!(m.recompute_score().unwrap(), m.score);
        }
        let again = evaluate(&items, &MockBackend::default(), &config).unwrap();
        assert_eq!(outcome, again);
    }

    #[test]
    fn grid_recovers_default_point() {
        let scorer = FamiCom::new(FamiComConfig::default()).unwrap();
        let config = EvalConfig {
            scorer: Some(scorer),
            ..EvalConfig::default()
        };
        let items: Vec<EvalItem> = (0..30).map(|i| item(&format!("i{i:02}"), "A")).collect();
        let records = evaluate(&items, &MockBackend::default(), &config).unwrap().records;
        let grid = grid_search(&records, &[1.0], &[1.0, 2.0], 3).unwrap();
        assert_eq!(grid.len(), 2);
        let direct = correlate_records(&records, |r| MeasureKind::Famicom.value(r), 3);
        assert_eq!(grid[0].rho, direct.ok().map(|r| r.rho));
    }
}
