//! Label-free estimation of how well a prompt will work for a language
//! model, from the model's familiarity with the prompt and the complexity of
//! the question it is paired with.
//!
//! The estimate is `f^a * c^-b` ([`measure::famicom_score`]). It drives
//! prompt selection and cross-task demonstration ranking ([`selection`]),
//! and [`harness`] measures how well it tracks realized accuracy.

pub mod backend;
pub mod complexity;
pub mod error;
pub mod familiarity;
pub mod harness;
mod jsonl;
pub mod measure;
pub mod selection;

pub use error::{Error, Result};
pub use jsonl::read_jsonl;
pub use measure::{famicom_score, score_pair, FamiCom, FamiComConfig, MeasureBreakdown};
