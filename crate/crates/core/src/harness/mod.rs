//! Validation harness: dataset ingestion, binary reduction, cross-task
//! pairing, self-consistency evaluation, binned rank correlation and
//! report files.

pub mod dataset;
pub mod evaluate;
pub mod pairing;
pub mod report;
pub mod stats;
pub mod vote;

pub use dataset::{load_dataset, reduce_to_binary, McqInstance, McqOption};
pub use evaluate::{
    accuracy, correlate_records, evaluate, grid_search, EvalConfig, EvalOutcome, EvalRecord, GridPoint, ItemFailure,
    MeasureKind,
};
pub use pairing::{generate_cross_task_pairings, EvalItem};
pub use report::{emit_report, ReportFiles};
pub use stats::{bin_and_correlate, spearman, Bin, CorrelationReport, BONFERRONI_ALPHA};
pub use vote::{extract_answer, majority_vote, Vote};
