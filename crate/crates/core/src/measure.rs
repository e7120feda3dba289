//! The FamiCom estimate `f^a * c^-b`: familiarity raised to `a`, discounted
//! by complexity raised to `b`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backend::Backend;
use crate::complexity::{
    question_id, ComplexityEstimator, ComplexityMethod, ComplexityPromptTemplate, ComplexityReport,
    DEFAULT_K_COMPLEXITY, DEFAULT_RETRY_LIMIT,
};
use crate::error::{Error, Result};
use crate::familiarity::{
    combined_familiarity, join_prompt_query, FamiliarityMethod, FamiliarityValue, DEFAULT_K_SALIENT,
};

/// What complexity is measured on when scoring a (prompt, query) pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexityScope {
    /// The query alone; one estimate serves every prompt paired with it.
    #[default]
    Query,
    /// The prompt and query joined as one text.
    PromptAndQuery,
}

impl fmt::Display for ComplexityScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Query => "query",
            Self::PromptAndQuery => "prompt_and_query",
        })
    }
}

impl FromStr for ComplexityScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "query" => Ok(Self::Query),
            "prompt_and_query" => Ok(Self::PromptAndQuery),
            other => Err(Error::InvalidConfig(format!("unknown complexity scope {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FamiComConfig {
    pub a: f64,
    pub b: f64,
    pub familiarity_method: FamiliarityMethod,
    pub k_salient: usize,
    pub complexity_method: ComplexityMethod,
    pub k_complexity: usize,
    pub complexity_scope: ComplexityScope,
}

impl Default for FamiComConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            familiarity_method: FamiliarityMethod::Sim,
            k_salient: DEFAULT_K_SALIENT,
            complexity_method: ComplexityMethod::Guided,
            k_complexity: DEFAULT_K_COMPLEXITY,
            complexity_scope: ComplexityScope::Query,
        }
    }
}

impl FamiComConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite() && self.b > 0.0 && self.b.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "a and b must be positive and finite (got a={}, b={})",
                self.a, self.b
            )));
        }
        if self.k_complexity == 0 {
            return Err(Error::InvalidConfig("k_complexity must be at least 1".into()));
        }
        Ok(())
    }
}

/// Every quantity behind one FamiCom score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureBreakdown {
    pub prompt_id: String,
    pub query_id: String,
    pub familiarity: FamiliarityValue,
    pub complexity: ComplexityReport,
    pub score: f64,
    pub a: f64,
    pub b: f64,
    pub config: FamiComConfig,
}

impl MeasureBreakdown {
    pub fn recompute_score(&self) -> Result<f64> {
        famicom_score(self.familiarity.value, self.complexity.mean, self.a, self.b)
    }
}

/// `f^a * c^-b` for familiarity `f > 0` and complexity `c >= 1`.
pub fn famicom_score(f: f64, c: f64, a: f64, b: f64) -> Result<f64> {
    if !(f > 0.0 && f.is_finite()) {
        return Err(Error::Domain(format!("familiarity must be positive, got {f}")));
    }
    if !(c >= 1.0 && c.is_finite()) {
        return Err(Error::Domain(format!("complexity must be >= 1, got {c}")));
    }
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!("a and b must be positive, got a={a}, b={b}")));
    }
    Ok(f.powf(a) * c.powf(-b))
}

/// Scores (prompt, query) pairs with one configuration and complexity
/// template.
#[derive(Debug, Clone)]
pub struct FamiCom {
    pub config: FamiComConfig,
    pub estimator: ComplexityEstimator,
}

impl FamiCom {
    /// Uses the bundled template for the configured complexity method.
    pub fn new(config: FamiComConfig) -> Result<Self> {
        let template = ComplexityPromptTemplate::builtin(config.complexity_method);
        Self::with_template(config, template)
    }

    pub fn with_template(config: FamiComConfig, template: ComplexityPromptTemplate) -> Result<Self> {
        config.validate()?;
        template.validate()?;
        if template.kind != config.complexity_method {
            return Err(Error::InvalidConfig(format!(
                "complexity method is {} but the template is {}",
                config.complexity_method, template.kind
            )));
        }
        let estimator = ComplexityEstimator {
            template,
            k: config.k_complexity,
            temperature: crate::backend::DEFAULT_TEMPERATURE,
            retry_limit: DEFAULT_RETRY_LIMIT,
            seed: 0,
        };
        Ok(Self { config, estimator })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.estimator.seed = seed;
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.estimator.temperature = temperature;
        self
    }

    /// Complexity of `text` under the configured estimator.
    pub fn complexity(&self, text: &str, backend: &dyn Backend) -> Result<ComplexityReport> {
        self.estimator.estimate(&question_id(text), text, backend)
    }

    /// The text complexity is measured on for this pair.
    pub fn complexity_subject(&self, prompt: &str, query: &str) -> String {
        match self.config.complexity_scope {
            ComplexityScope::Query => query.to_string(),
            ComplexityScope::PromptAndQuery => join_prompt_query(prompt, query),
        }
    }

    pub fn score_pair(&self, prompt: &str, query: &str, backend: &dyn Backend) -> Result<MeasureBreakdown> {
        if prompt.is_empty() {
            return Err(Error::EmptyInput("prompt"));
        }
        if query.is_empty() {
            return Err(Error::EmptyInput("query"));
        }
        let complexity = self
            .complexity(&self.complexity_subject(prompt, query), backend)
            .inspect_err(|e| log::warn!("complexity failed for query {}: {e}", question_id(query)))?;
        self.score_pair_with_complexity(prompt, query, complexity, backend)
    }

    /// Like [`FamiCom::score_pair`] with a complexity computed beforehand.
    pub fn score_pair_with_complexity(
        &self,
        prompt: &str,
        query: &str,
        complexity: ComplexityReport,
        backend: &dyn Backend,
    ) -> Result<MeasureBreakdown> {
        let familiarity = combined_familiarity(
            prompt,
            query,
            self.config.familiarity_method,
            self.config.k_salient,
            backend,
        )?;
        let score = famicom_score(familiarity.value, complexity.mean, self.config.a, self.config.b)?;
        Ok(MeasureBreakdown {
            prompt_id: question_id(prompt),
            query_id: question_id(query),
            familiarity,
            complexity,
            score,
            a: self.config.a,
            b: self.config.b,
            config: self.config.clone(),
        })
    }
}

pub fn score_pair(
    prompt: &str,
    query: &str,
    config: &FamiComConfig,
    backend: &dyn Backend,
) -> Result<MeasureBreakdown> {
    FamiCom::new(config.clone())?.score_pair(prompt, query, backend)
}
