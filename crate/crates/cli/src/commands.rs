//! Subcommand implementations. Each returns the JSON document it produced.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use famicom::backend::Backend;
use famicom::familiarity::{combined_familiarity, familiarity, FamiliarityValue};
use famicom::harness::dataset::{load_dataset, reduce_to_binary};
use famicom::harness::evaluate::{correlate_records, evaluate, grid_search, EvalConfig, EvalRecord, MeasureKind};
use famicom::harness::pairing::{generate_cross_task_pairings, EvalItem};
use famicom::harness::report::emit_report;
use famicom::selection::{
    load_candidates, load_pool, prompt_order, rank_demonstrations_famicom, rank_demonstrations_knn,
    select_prompt_famicom, select_prompt_spell, RankedSelection,
};
use famicom::{read_jsonl, Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{FileConfig, Resolved};

/// Inline text or a file holding it.
#[derive(Debug, Clone, Default, Args)]
pub struct PromptInput {
    #[arg(long, conflicts_with = "prompt_file")]
    pub prompt: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub prompt_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct QueryInput {
    #[arg(long, conflicts_with = "query_file")]
    pub query: Option<String>,
    #[arg(long, value_name = "PATH")]
    pub query_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub prompt: PromptInput,
    #[command(flatten)]
    pub query: QueryInput,
}

#[derive(Debug, Clone, Args)]
pub struct FamiliarityArgs {
    #[command(flatten)]
    pub prompt: PromptInput,
    /// When given, familiarity is measured on prompt and query together
    #[command(flatten)]
    pub query: QueryInput,
}

#[derive(Debug, Clone, Args)]
pub struct ComplexityArgs {
    #[command(flatten)]
    pub query: QueryInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PromptMethod {
    Famicom,
    Spell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DemoMethod {
    Famicom,
    Knn,
}

#[derive(Debug, Clone, Args)]
pub struct SelectPromptArgs {
    /// JSONL file of candidate prompts
    #[arg(long, value_name = "PATH")]
    pub candidates: Option<PathBuf>,
    #[command(flatten)]
    pub query: QueryInput,
    #[arg(long, value_enum)]
    pub method: Option<PromptMethod>,
}

#[derive(Debug, Clone, Args)]
pub struct SelectDemosArgs {
    /// JSONL file of demonstrations
    #[arg(long, value_name = "PATH")]
    pub pool: Option<PathBuf>,
    #[command(flatten)]
    pub query: QueryInput,
    /// Number of demonstrations to keep
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub method: Option<DemoMethod>,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Multiple-choice dataset JSONL
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// Demonstration pool JSONL
    #[arg(long, value_name = "PATH")]
    pub pool: Option<PathBuf>,
    #[arg(long)]
    pub demos_per_question: Option<usize>,
    /// Demonstration draws per instance
    #[arg(long)]
    pub repeats: Option<usize>,
    /// Keep every option instead of reducing to gold plus one distractor
    #[arg(long)]
    pub no_binary: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// records.jsonl from a previous validate run
    #[arg(long, value_name = "PATH")]
    pub records: Option<PathBuf>,
    /// Comma-separated exponents for familiarity
    #[arg(long)]
    pub a_values: Option<String>,
    /// Comma-separated exponents for complexity
    #[arg(long)]
    pub b_values: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// records.jsonl from a previous validate run
    #[arg(long, value_name = "PATH")]
    pub records: Option<PathBuf>,
}

pub const DEFAULT_DEMOS_PER_QUESTION: usize = 3;
pub const DEFAULT_GRID: &str = "0.5,1,1.5,2";

fn read_text(path: &Path) -> Result<String> {
    match std::fs::read_to_string(path) {
        Ok(text) => Ok(text.trim_end_matches(['\n', '\r']).to_string()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::FileNotFound(path.to_path_buf())),
        Err(e) => Err(e.into()),
    }
}

fn text_input(
    inline: &Option<String>,
    file: &Option<PathBuf>,
    cfg_inline: &Option<String>,
    cfg_file: &Option<PathBuf>,
) -> Result<Option<String>> {
    if let Some(text) = inline {
        return Ok(Some(text.clone()));
    }
    if let Some(path) = file {
        return read_text(path).map(Some);
    }
    if let Some(text) = cfg_inline {
        return Ok(Some(text.clone()));
    }
    if let Some(path) = cfg_file {
        return read_text(path).map(Some);
    }
    Ok(None)
}

fn required<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| Error::InvalidConfig(format!("missing {what}")))
}

fn prompt_text(input: &PromptInput, file: &FileConfig) -> Result<Option<String>> {
    text_input(&input.prompt, &input.prompt_file, &file.prompt, &file.prompt_file)
}

fn query_text(input: &QueryInput, file: &FileConfig) -> Result<Option<String>> {
    text_input(&input.query, &input.query_file, &file.query, &file.query_file)
}

fn envelope(resolved: &Resolved, result: impl Serialize) -> Result<Value> {
    Ok(json!({
        "config": serde_json::to_value(resolved)?,
        "result": serde_json::to_value(result)?,
    }))
}

pub fn score(args: &ScoreArgs, file: &FileConfig, resolved: &Resolved, backend: &dyn Backend) -> Result<Value> {
    let prompt = required(prompt_text(&args.prompt, file)?, "--prompt or --prompt-file")?;
    let query = required(query_text(&args.query, file)?, "--query or --query-file")?;
    let scorer = resolved.scorer()?;
    let breakdown = scorer.score_pair(&prompt, &query, backend)?;
    envelope(resolved, breakdown)
}

pub fn familiarity_cmd(
    args: &FamiliarityArgs,
    file: &FileConfig,
    resolved: &Resolved,
    backend: &dyn Backend,
) -> Result<Value> {
    let prompt = required(prompt_text(&args.prompt, file)?, "--prompt or --prompt-file")?;
    let method = resolved.famicom.familiarity_method;
    let k = resolved.famicom.k_salient;
    let value: FamiliarityValue = match query_text(&args.query, file)? {
        Some(query) => combined_familiarity(&prompt, &query, method, k, backend)?,
        None => familiarity(&famicom::backend::score_tokens(&prompt, backend)?, method, k, backend)?,
    };
    envelope(resolved, value)
}

pub fn complexity_cmd(
    args: &ComplexityArgs,
    file: &FileConfig,
    resolved: &Resolved,
    backend: &dyn Backend,
) -> Result<Value> {
    let query = required(query_text(&args.query, file)?, "--query or --query-file")?;
    let scorer = resolved.scorer()?;
    envelope(resolved, scorer.complexity(&query, backend)?)
}

fn selection_output(resolved: &Resolved, selection: &RankedSelection, extra: Option<(&str, Value)>) -> Result<Value> {
    let mut out = envelope(resolved, selection)?;
    out["dropped"] = serde_json::to_value(&selection.dropped)?;
    if let Some((key, value)) = extra {
        out[key] = value;
    }
    Ok(out)
}

fn parse_method<T: ValueEnum>(flag: Option<T>, file: &Option<String>, default: T) -> Result<T> {
    if let Some(m) = flag {
        return Ok(m);
    }
    match file {
        Some(name) => T::from_str(name, true).map_err(|_| Error::InvalidConfig(format!("unknown method {name:?}"))),
        None => Ok(default),
    }
}

pub fn select_prompt(
    args: &SelectPromptArgs,
    file: &FileConfig,
    resolved: &Resolved,
    backend: &dyn Backend,
) -> Result<Value> {
    let path = required(
        args.candidates.clone().or_else(|| file.candidates.clone()),
        "--candidates",
    )?;
    let method = parse_method(args.method, &file.method, PromptMethod::Famicom)?;
    let candidates = load_candidates(&path)?;
    let selection = match method {
        PromptMethod::Famicom => {
            let query = required(query_text(&args.query, file)?, "--query or --query-file")?;
            select_prompt_famicom(&candidates, &query, &resolved.scorer()?, backend, resolved.max_inflight)?
        }
        PromptMethod::Spell => select_prompt_spell(&candidates, backend, resolved.max_inflight)?,
    };
    selection_output(resolved, &selection, None)
}

pub fn select_demos(
    args: &SelectDemosArgs,
    file: &FileConfig,
    resolved: &Resolved,
    backend: &dyn Backend,
) -> Result<Value> {
    let path = required(args.pool.clone().or_else(|| file.pool.clone()), "--pool")?;
    let method = parse_method(args.method, &file.method, DemoMethod::Famicom)?;
    let k = args.k.or(file.k).unwrap_or(DEFAULT_DEMOS_PER_QUESTION);
    let query = required(query_text(&args.query, file)?, "--query or --query-file")?;
    let pool = load_pool(&path)?;
    let selection = match method {
        DemoMethod::Famicom => {
            rank_demonstrations_famicom(&pool, &query, k, &resolved.scorer()?, backend, resolved.max_inflight)?
        }
        DemoMethod::Knn => rank_demonstrations_knn(&pool, &query, k, backend, resolved.max_inflight)?,
    };
    let order: Vec<&str> = prompt_order(&selection, &pool).iter().map(|d| d.id.as_str()).collect();
    selection_output(resolved, &selection, Some(("prompt_order", json!(order))))
}

fn out_dir(resolved: &Resolved) -> Result<PathBuf> {
    required(resolved.out_dir.clone(), "--out-dir")
}

fn correlations(records: &[EvalRecord], bins: usize) -> Vec<(String, famicom::harness::stats::CorrelationReport)> {
    MeasureKind::ALL
        .iter()
        .filter_map(|kind| match correlate_records(records, |r| kind.value(r), bins) {
            Ok(report) => Some((kind.to_string(), report)),
            Err(e) => {
                log::warn!("no correlation for {kind}: {e}");
                None
            }
        })
        .collect()
}

fn pairings_jsonl(items: &[EvalItem]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        let demos: Vec<Value> = item
            .demos
            .iter()
            .map(|d| json!({"id": d.id, "task_id": d.task_id}))
            .collect();
        serde_json::to_writer(
            &mut out,
            &json!({
                "instance": item.instance,
                "pairing": item.pairing,
                "demos": demos,
            }),
        )?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn validate(args: &ValidateArgs, file: &FileConfig, resolved: &Resolved, backend: &dyn Backend) -> Result<Value> {
    let dataset_path = required(args.dataset.clone().or_else(|| file.dataset.clone()), "--dataset")?;
    let pool_path = required(args.pool.clone().or_else(|| file.pool.clone()), "--pool")?;
    let dir = out_dir(resolved)?;
    let demos_per_question = args
        .demos_per_question
        .or(file.demos_per_question)
        .unwrap_or(DEFAULT_DEMOS_PER_QUESTION);
    let repeats = args.repeats.or(file.repeats).unwrap_or(1);
    let binary = !(args.no_binary || file.no_binary.unwrap_or(false));
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be at least 1".into()));
    }

    let mut instances = load_dataset(&dataset_path)?;
    let pool = load_pool(&pool_path)?;
    log::info!("loaded {} instances and {} demonstrations", instances.len(), pool.len());
    if binary {
        instances = instances
            .iter()
            .map(|inst| reduce_to_binary(inst, resolved.seed))
            .collect::<Result<_>>()?;
    }
    let items = generate_cross_task_pairings(&instances, &pool, demos_per_question, repeats, resolved.seed)?;
    log::info!("evaluating {} items with {} runs each", items.len(), resolved.runs);

    let config = EvalConfig {
        runs: resolved.runs,
        temperature: resolved.temperature,
        seed: resolved.seed,
        max_inflight: resolved.max_inflight,
        scorer: Some(resolved.scorer()?),
        ..EvalConfig::default()
    };
    let outcome = evaluate(&items, backend, &config)?;
    if outcome.records.is_empty() {
        return Err(Error::AllItemsFailed);
    }
    let correlations = correlations(&outcome.records, resolved.bins);
    let provenance = json!({
        "resolved": serde_json::to_value(resolved)?,
        "dataset": dataset_path,
        "pool": pool_path,
        "demos_per_question": demos_per_question,
        "repeats": repeats,
        "binary": binary,
        "failures": outcome.failures,
    });
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("pairings.jsonl"), pairings_jsonl(&items)?)?;
    let files = emit_report(&outcome.records, &correlations, &provenance, &dir)?;
    log::info!("wrote {}", files.summary_json.display());
    Ok(famicom::harness::report::summary(
        &outcome.records,
        &correlations,
        &provenance,
    ))
}

fn load_records(args_path: &Option<PathBuf>, file: &FileConfig) -> Result<(PathBuf, Vec<EvalRecord>)> {
    let path = required(args_path.clone().or_else(|| file.records.clone()), "--records")?;
    let records: Vec<EvalRecord> = read_jsonl(&path)?;
    Ok((path, records))
}

fn parse_grid(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidConfig(format!("bad grid value {v:?}")))
        })
        .collect()
}

pub fn grid(args: &GridArgs, file: &FileConfig, resolved: &Resolved) -> Result<Value> {
    let (_, records) = load_records(&args.records, file)?;
    let a_values = parse_grid(
        args.a_values
            .as_deref()
            .or(file.a_values.as_deref())
            .unwrap_or(DEFAULT_GRID),
    )?;
    let b_values = parse_grid(
        args.b_values
            .as_deref()
            .or(file.b_values.as_deref())
            .unwrap_or(DEFAULT_GRID),
    )?;
    let points = grid_search(&records, &a_values, &b_values, resolved.bins)?;
    envelope(resolved, points)
}

pub fn report(args: &ReportArgs, file: &FileConfig, resolved: &Resolved) -> Result<Value> {
    let (path, records) = load_records(&args.records, file)?;
    let dir = match &resolved.out_dir {
        Some(dir) => dir.clone(),
        None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let correlations = correlations(&records, resolved.bins);
    let provenance = json!({"resolved": serde_json::to_value(resolved)?, "records": path});
    emit_report(&records, &correlations, &provenance, &dir)?;
    Ok(famicom::harness::report::summary(&records, &correlations, &provenance))
}
