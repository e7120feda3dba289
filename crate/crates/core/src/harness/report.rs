//! Result files: per-record CSV and JSONL, per-bin CSV, and a JSON summary.
//! Each file is written to a temporary file and renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::evaluate::{accuracy, EvalRecord};
use super::stats::{CorrelationReport, BONFERRONI_ALPHA};
use crate::error::Result;

pub const RECORDS_CSV_HEADER: [&str; 8] = [
    "instance_id",
    "pairing",
    "task_id",
    "score",
    "familiarity",
    "complexity",
    "prediction",
    "correct",
];

pub const BINS_CSV_HEADER: [&str; 3] = ["measure", "accuracy", "count"];

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub records_csv: PathBuf,
    pub records_jsonl: PathBuf,
    pub bins_csv: PathBuf,
    pub per_measure_bins: Vec<PathBuf>,
    pub summary_json: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

pub fn records_csv(records: &[EvalRecord]) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    w.write_record(RECORDS_CSV_HEADER)?;
    for r in records {
        let m = r.measures.as_ref();
        w.write_record([
            r.instance_id.clone(),
            r.pairing.to_string(),
            r.task_id.clone(),
            opt(m.map(|m| m.score)),
            opt(m.map(|m| m.familiarity.value)),
            opt(m.map(|m| m.complexity.mean)),
            r.prediction.clone().unwrap_or_default(),
            r.correct.to_string(),
        ])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn bins_csv(report: Option<&CorrelationReport>) -> Result<Vec<u8>> {
    let mut w = csv_writer();
    w.write_record(BINS_CSV_HEADER)?;
    for bin in report.map(|r| r.bins.as_slice()).unwrap_or_default() {
        w.write_record([bin.measure.to_string(), bin.accuracy.to_string(), bin.count.to_string()])?;
    }
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn summary(records: &[EvalRecord], correlations: &[(String, CorrelationReport)], config: &Value) -> Value {
    let correlations: Vec<Value> = correlations
        .iter()
        .map(|(name, c)| {
            json!({
                "measure": name,
                "rho": c.rho,
                "p_value": c.p_value,
                "n_bins": c.n_bins,
                "n_records": c.n_records,
                "significant": c.significant(),
            })
        })
        .collect();
    json!({
        "n_records": records.len(),
        "empty": records.is_empty(),
        "accuracy": accuracy(records),
        "bonferroni_alpha": BONFERRONI_ALPHA,
        "correlations": correlations,
        "config": config,
    })
}

/// Writes `records.csv`, `records.jsonl`, `bins.csv` (first correlation),
/// `bins_<measure>.csv` (every correlation) and `summary.json`.
pub fn emit_report(
    records: &[EvalRecord],
    correlations: &[(String, CorrelationReport)],
    config: &Value,
    out_dir: &Path,
) -> Result<ReportFiles> {
    std::fs::create_dir_all(out_dir)?;
    let files = ReportFiles {
        records_csv: out_dir.join("records.csv"),
        records_jsonl: out_dir.join("records.jsonl"),
        bins_csv: out_dir.join("bins.csv"),
        per_measure_bins: correlations
            .iter()
            .map(|(name, _)| out_dir.join(format!("bins_{name}.csv")))
            .collect(),
        summary_json: out_dir.join("summary.json"),
    };
    write_atomic(&files.records_csv, &records_csv(records)?)?;
    let mut jsonl = Vec::new();
    for r in records {
        serde_json::to_writer(&mut jsonl, r)?;
        jsonl.push(b'\n');
    }
    write_atomic(&files.records_jsonl, &jsonl)?;
    write_atomic(&files.bins_csv, &bins_csv(correlations.first().map(|(_, c)| c))?)?;
    for ((_, report), path) in correlations.iter().zip(&files.per_measure_bins) {
        write_atomic(path, &bins_csv(Some(report))?)?;
    }
    let mut summary_bytes = serde_json::to_vec_pretty(&summary(records, correlations, config))?;
    summary_bytes.push(b'\n');
    write_atomic(&files.summary_json, &summary_bytes)?;
    Ok(files)
}
