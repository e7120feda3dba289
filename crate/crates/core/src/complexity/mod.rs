//! Question complexity: the number of reasoning steps a model believes a
//! question needs, averaged over several sampled answers.
//!
//! Three estimators share one sampling loop. Direct and guided estimation ask
//! for a step count (guided adds worked exemplars); operational estimation
//! asks for a RASP-L program and counts its primitive operations.

pub mod rasp;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::{generate, stable_hash, Backend, GenerationRequest, DEFAULT_TEMPERATURE};
use crate::error::{Error, Result};

pub use rasp::{count_rasp_ops, extract_fenced_block, RaspProgram};

/// Line that ends every step-count prompt.
pub const STEP_COUNT_CUE: &str = "Number of steps:";
/// Line that ends every program-synthesis prompt.
pub const OPERATIONAL_CUE: &str = "RASP-L program:";

pub const DIRECT_PREAMBLE: &str = "How many steps does it takes to solve the problem.";

pub const DEFAULT_K_COMPLEXITY: usize = 5;
/// Resamples allowed after a failed parse (three attempts per sample).
pub const DEFAULT_RETRY_LIMIT: usize = 2;

const GUIDED_TEMPLATE_JSON: &str = include_str!("../../assets/guided_template.json");
const OPERATIONAL_TEMPLATE_JSON: &str = include_str!("../../assets/operational_template.json");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComplexityMethod {
    Direct,
    #[default]
    Guided,
    Operational,
}

impl fmt::Display for ComplexityMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Direct => "direct",
            Self::Guided => "guided",
            Self::Operational => "operational",
        })
    }
}

impl FromStr for ComplexityMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(Self::Direct),
            "guided" => Ok(Self::Guided),
            "operational" => Ok(Self::Operational),
            other => Err(Error::InvalidConfig(format!("unknown complexity method {other:?}"))),
        }
    }
}

/// A worked example: for guided templates `work` lists the steps, for
/// operational templates it is the program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub question: String,
    pub work: String,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityPromptTemplate {
    pub kind: ComplexityMethod,
    pub preamble: String,
    #[serde(default)]
    pub exemplars: Vec<Exemplar>,
}

impl ComplexityPromptTemplate {
    pub fn direct() -> Self {
        Self {
            kind: ComplexityMethod::Direct,
            preamble: DIRECT_PREAMBLE.into(),
            exemplars: Vec::new(),
        }
    }

    pub fn guided() -> Self {
        serde_json::from_str(GUIDED_TEMPLATE_JSON).expect("bundled guided template is valid")
    }

    pub fn operational() -> Self {
        serde_json::from_str(OPERATIONAL_TEMPLATE_JSON).expect("bundled operational template is valid")
    }

    pub fn builtin(kind: ComplexityMethod) -> Self {
        match kind {
            ComplexityMethod::Direct => Self::direct(),
            ComplexityMethod::Guided => Self::guided(),
            ComplexityMethod::Operational => Self::operational(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let template: Self = serde_json::from_str(&raw)?;
        template.validate()?;
        Ok(template)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind, self.exemplars.len()) {
            (ComplexityMethod::Direct, 0) => Ok(()),
            (ComplexityMethod::Direct, _) => Err(Error::InvalidConfig(
                "a direct complexity template takes no exemplars".into(),
            )),
            (kind, 0) => Err(Error::InvalidConfig(format!(
                "a {kind} complexity template needs at least one exemplar"
            ))),
            _ => Ok(()),
        }
    }

    /// The full prompt sent to the model for `question`.
    pub fn render(&self, question: &str) -> String {
        let mut out = String::new();
        out.push_str(self.preamble.trim_end());
        out.push_str("\n\n");
        for ex in &self.exemplars {
            match self.kind {
                ComplexityMethod::Operational => {
                    out.push_str(&format!(
                        "Question: {}\n{OPERATIONAL_CUE}\n```\n{}\n```\n\n",
                        ex.question,
                        ex.work.trim_end()
                    ));
                }
                _ => {
                    out.push_str(&format!(
                        "Question: {}\nSteps:\n{}\n{STEP_COUNT_CUE} {}\n\n",
                        ex.question,
                        ex.work.trim_end(),
                        ex.count
                    ));
                }
            }
        }
        let cue = match self.kind {
            ComplexityMethod::Operational => OPERATIONAL_CUE,
            _ => STEP_COUNT_CUE,
        };
        out.push_str(&format!("Question: {question}\n{cue}"));
        out
    }
}

/// Complexity samples for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub method: ComplexityMethod,
    pub samples: Vec<u32>,
    pub mean: f64,
    pub question_id: String,
}

impl ComplexityReport {
    pub fn from_samples(method: ComplexityMethod, question_id: impl Into<String>, samples: Vec<u32>) -> Result<Self> {
        if samples.is_empty() || samples.contains(&0) {
            return Err(Error::Domain("complexity samples must be non-empty and >= 1".into()));
        }
        let mean = samples.iter().map(|&s| f64::from(s)).sum::<f64>() / samples.len() as f64;
        Ok(Self {
            method,
            samples,
            mean,
            question_id: question_id.into(),
        })
    }
}

/// The last base-10 integer in `response` that lies in `[1, 100]`.
pub fn parse_step_count(response: &str) -> Result<u32> {
    let mut last = None;
    let bytes = response.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if let Ok(n) = response[start..i].parse::<u32>() {
                if (1..=100).contains(&n) {
                    last = Some(n);
                }
            }
        } else {
            i += 1;
        }
    }
    last.ok_or(Error::NoCountFound)
}

/// Operation count of the program in a model response.
pub fn parse_program_ops(response: &str) -> Result<u32> {
    let ops = count_rasp_ops(extract_fenced_block(response))?;
    if ops == 0 {
        return Err(Error::Domain("program contains no primitive operations".into()));
    }
    u32::try_from(ops).map_err(|_| Error::Domain("operation count overflows".into()))
}

/// Sampling settings for complexity estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityEstimator {
    pub template: ComplexityPromptTemplate,
    pub k: usize,
    pub temperature: f64,
    pub retry_limit: usize,
    pub seed: u64,
}

impl ComplexityEstimator {
    pub fn new(template: ComplexityPromptTemplate, k: usize) -> Self {
        Self {
            template,
            k,
            temperature: DEFAULT_TEMPERATURE,
            retry_limit: DEFAULT_RETRY_LIMIT,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Collects `k` samples, resampling each failed parse up to
    /// `retry_limit` times.
    pub fn estimate(&self, question_id: &str, question: &str, backend: &dyn Backend) -> Result<ComplexityReport> {
        if question.is_empty() {
            return Err(Error::EmptyInput("question"));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        self.template.validate()?;
        let parse: fn(&str) -> Result<u32> = match self.template.kind {
            ComplexityMethod::Operational => parse_program_ops,
            _ => parse_step_count,
        };
        let max_tokens = match self.template.kind {
            ComplexityMethod::Operational => 512,
            _ => 256,
        };
        let prompt = self.template.render(question);
        let attempts_per_sample = self.retry_limit + 1;
        let mut samples = Vec::with_capacity(self.k);
        for sample in 0..self.k {
            let mut last_error = String::new();
            let mut value = None;
            for attempt in 0..attempts_per_sample {
                let seed = self.seed.wrapping_add((sample * attempts_per_sample + attempt) as u64);
                let request = GenerationRequest::new(prompt.as_str())
                    .with_temperature(self.temperature)
                    .with_max_tokens(max_tokens)
                    .with_seed(seed);
                let reply = generate(&request, backend)?;
                match parse(&reply.text) {
                    Ok(n) => {
                        value = Some(n);
                        break;
                    }
                    Err(e) => {
                        log::debug!("complexity sample {sample} attempt {attempt} unparseable: {e}");
                        last_error = e.to_string();
                    }
                }
            }
            match value {
                Some(n) => samples.push(n),
                None => {
                    return Err(Error::ComplexityUnparseable {
                        collected: samples.len(),
                        wanted: self.k,
                        last_error,
                    })
                }
            }
        }
        ComplexityReport::from_samples(self.template.kind, question_id, samples)
    }
}

/// Short stable identifier for a question text.
pub fn question_id(question: &str) -> String {
    format!("q{:016x}", stable_hash(&[question.as_bytes()]))
}

/// Step-count complexity (direct or guided template; operational templates
/// are routed to program counting).
pub fn estimate_complexity(
    question: &str,
    template: &ComplexityPromptTemplate,
    k: usize,
    backend: &dyn Backend,
) -> Result<ComplexityReport> {
    ComplexityEstimator::new(template.clone(), k).estimate(&question_id(question), question, backend)
}

pub fn estimate_operational_complexity(
    question: &str,
    template: &ComplexityPromptTemplate,
    k: usize,
    backend: &dyn Backend,
) -> Result<ComplexityReport> {
    if template.kind != ComplexityMethod::Operational {
        return Err(Error::InvalidConfig(format!(
            "operational complexity needs an operational template, got {}",
            template.kind
        )));
    }
    estimate_complexity(question, template, k, backend)
}
