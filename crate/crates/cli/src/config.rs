//! Settings resolution: flags, then the JSON config file, then environment,
//! then defaults.

use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use famicom::backend::{Backend, HttpBackend, HttpConfig, MockBackend, ScriptedBackend};
use famicom::complexity::{ComplexityMethod, ComplexityPromptTemplate};
use famicom::familiarity::FamiliarityMethod;
use famicom::harness::evaluate::DEFAULT_RUNS;
use famicom::measure::ComplexityScope;
use famicom::{Error, FamiCom, FamiComConfig, Result};
use serde::{Deserialize, Serialize};

pub const ENV_BACKEND_URL: &str = "FAMICOM_BACKEND_URL";
pub const ENV_MODEL: &str = "FAMICOM_MODEL";

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// OpenAI-compatible server root URL
    #[arg(long, global = true, value_name = "URL")]
    pub backend_url: Option<String>,
    /// Use the deterministic mock backend
    #[arg(long, global = true)]
    pub mock: bool,
    /// Use a scripted backend loaded from a JSON script
    #[arg(long, global = true, value_name = "PATH")]
    pub scripted: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Model for embedding requests (defaults to --model)
    #[arg(long, global = true)]
    pub embed_model: Option<String>,
    #[arg(long, global = true)]
    pub a: Option<f64>,
    #[arg(long, global = true)]
    pub b: Option<f64>,
    /// Familiarity estimator: ppl or sim
    #[arg(long, global = true)]
    pub fam_method: Option<FamiliarityMethod>,
    #[arg(long, global = true)]
    pub k_salient: Option<usize>,
    /// Complexity estimator: direct, guided or operational
    #[arg(long, global = true)]
    pub complexity_method: Option<ComplexityMethod>,
    /// Text complexity is measured on: query or prompt_and_query
    #[arg(long, global = true)]
    pub complexity_scope: Option<ComplexityScope>,
    /// JSON complexity template replacing the bundled one
    #[arg(long, global = true, value_name = "PATH")]
    pub complexity_template: Option<PathBuf>,
    #[arg(long, global = true)]
    pub k_complexity: Option<usize>,
    /// Sampled answers per question for majority voting
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    #[arg(long, global = true)]
    pub temperature: Option<f64>,
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// JSON file with default values for any flag
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub max_inflight: Option<usize>,
    /// HTTP attempts per request
    #[arg(long, global = true)]
    pub retries: Option<u32>,
}

/// Contents of a `--config` file. Keys mirror the long flag names with
/// underscores.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backend_url: Option<String>,
    pub mock: Option<bool>,
    pub scripted: Option<PathBuf>,
    pub model: Option<String>,
    pub embed_model: Option<String>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub fam_method: Option<FamiliarityMethod>,
    pub k_salient: Option<usize>,
    pub complexity_method: Option<ComplexityMethod>,
    pub complexity_scope: Option<ComplexityScope>,
    pub complexity_template: Option<PathBuf>,
    pub k_complexity: Option<usize>,
    pub runs: Option<usize>,
    pub temperature: Option<f64>,
    pub bins: Option<usize>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub max_inflight: Option<usize>,
    pub retries: Option<u32>,
    // subcommand keys
    pub prompt: Option<String>,
    pub prompt_file: Option<PathBuf>,
    pub query: Option<String>,
    pub query_file: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub pool: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub method: Option<String>,
    pub k: Option<usize>,
    pub demos_per_question: Option<usize>,
    pub repeats: Option<usize>,
    pub no_binary: Option<bool>,
    pub a_values: Option<String>,
    pub b_values: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| Error::InvalidConfig(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendChoice {
    Mock,
    Scripted {
        path: PathBuf,
    },
    Http {
        url: String,
    },
    /// Offline commands that only read saved records.
    None,
}

/// Fully resolved settings, echoed into every output.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub backend: BackendChoice,
    pub model: String,
    pub embed_model: Option<String>,
    pub famicom: FamiComConfig,
    pub complexity_template: Option<PathBuf>,
    pub runs: usize,
    pub temperature: f64,
    pub bins: usize,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub max_inflight: usize,
    pub retries: u32,
}

fn env_var(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

impl Resolved {
    pub fn resolve(flags: &GlobalArgs, file: &FileConfig) -> Result<Self> {
        Self::resolve_inner(flags, file, resolve_backend(flags, file)?)
    }

    /// Like [`Resolved::resolve`] but tolerates a missing backend selector.
    pub fn resolve_offline(flags: &GlobalArgs, file: &FileConfig) -> Result<Self> {
        let backend = match resolve_backend(flags, file) {
            Ok(choice) => choice,
            Err(Error::InvalidConfig(msg)) if msg.starts_with("no backend") => BackendChoice::None,
            Err(e) => return Err(e),
        };
        Self::resolve_inner(flags, file, backend)
    }

    fn resolve_inner(flags: &GlobalArgs, file: &FileConfig, backend: BackendChoice) -> Result<Self> {
        let default_model = match &backend {
            BackendChoice::Mock => Some("mock".to_string()),
            BackendChoice::None => Some(String::new()),
            BackendChoice::Scripted { .. } => Some("scripted".to_string()),
            BackendChoice::Http { .. } => None,
        };
        let model = flags
            .model
            .clone()
            .or_else(|| file.model.clone())
            .or_else(|| env_var(ENV_MODEL))
            .or(default_model)
            .ok_or_else(|| {
                Error::InvalidConfig(format!("--model (or {ENV_MODEL}) is required with an HTTP backend"))
            })?;
        let defaults = FamiComConfig::default();
        let famicom = FamiComConfig {
            a: flags.a.or(file.a).unwrap_or(defaults.a),
            b: flags.b.or(file.b).unwrap_or(defaults.b),
            familiarity_method: flags
                .fam_method
                .or(file.fam_method)
                .unwrap_or(defaults.familiarity_method),
            k_salient: flags.k_salient.or(file.k_salient).unwrap_or(defaults.k_salient),
            complexity_method: flags
                .complexity_method
                .or(file.complexity_method)
                .unwrap_or(defaults.complexity_method),
            k_complexity: flags
                .k_complexity
                .or(file.k_complexity)
                .unwrap_or(defaults.k_complexity),
            complexity_scope: flags
                .complexity_scope
                .or(file.complexity_scope)
                .unwrap_or(defaults.complexity_scope),
        };
        famicom.validate()?;
        let resolved = Self {
            backend,
            model,
            embed_model: flags.embed_model.clone().or_else(|| file.embed_model.clone()),
            famicom,
            complexity_template: flags
                .complexity_template
                .clone()
                .or_else(|| file.complexity_template.clone()),
            runs: flags.runs.or(file.runs).unwrap_or(DEFAULT_RUNS),
            temperature: flags
                .temperature
                .or(file.temperature)
                .unwrap_or(famicom::backend::DEFAULT_TEMPERATURE),
            bins: flags.bins.or(file.bins).unwrap_or(50),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            out_dir: flags.out_dir.clone().or_else(|| file.out_dir.clone()),
            max_inflight: flags.max_inflight.or(file.max_inflight).unwrap_or(8),
            retries: flags.retries.or(file.retries).unwrap_or(3),
        };
        if resolved.runs == 0 || resolved.max_inflight == 0 || resolved.retries == 0 {
            return Err(Error::InvalidConfig(
                "runs, max_inflight and retries must be positive".into(),
            ));
        }
        if resolved.temperature.is_nan() || resolved.temperature < 0.0 {
            return Err(Error::InvalidConfig("temperature must be non-negative".into()));
        }
        Ok(resolved)
    }

    pub fn backend(&self) -> Result<Box<dyn Backend>> {
        Ok(match &self.backend {
            BackendChoice::Mock => Box::new(MockBackend::new(self.model.clone())),
            BackendChoice::Scripted { path } => Box::new(ScriptedBackend::from_file(path)?),
            BackendChoice::Http { url } => {
                let mut config = HttpConfig::new(url.clone(), self.model.clone());
                config.embed_model = self.embed_model.clone();
                config.max_attempts = self.retries;
                config.api_key = env_var("OPENAI_API_KEY");
                if let Some(ms) = env_var("FAMICOM_BACKOFF_MS").and_then(|v| v.parse().ok()) {
                    config.backoff_base = Duration::from_millis(ms);
                }
                Box::new(HttpBackend::new(config)?)
            }
            BackendChoice::None => return Err(Error::InvalidConfig("no backend selected".into())),
        })
    }

    pub fn scorer(&self) -> Result<FamiCom> {
        let template = match &self.complexity_template {
            Some(path) => ComplexityPromptTemplate::from_file(path).map_err(|e| match e {
                Error::FileNotFound(p) => Error::InvalidConfig(format!("template not found: {}", p.display())),
                other => other,
            })?,
            None => ComplexityPromptTemplate::builtin(self.famicom.complexity_method),
        };
        Ok(FamiCom::with_template(self.famicom.clone(), template)?
            .with_seed(self.seed)
            .with_temperature(self.temperature))
    }
}

fn resolve_backend(flags: &GlobalArgs, file: &FileConfig) -> Result<BackendChoice> {
    fn pick(
        mock: bool,
        scripted: Option<&PathBuf>,
        url: Option<&String>,
        origin: &str,
    ) -> Result<Option<BackendChoice>> {
        let mut found = Vec::new();
        if mock {
            found.push(BackendChoice::Mock);
        }
        if let Some(path) = scripted {
            found.push(BackendChoice::Scripted { path: path.clone() });
        }
        if let Some(url) = url {
            found.push(BackendChoice::Http { url: url.clone() });
        }
        match found.len() {
            0 => Ok(None),
            1 => Ok(found.pop()),
            _ => Err(Error::InvalidConfig(format!(
                "{origin} selects more than one backend; use exactly one of --mock, --scripted, --backend-url"
            ))),
        }
    }
    if let Some(choice) = pick(
        flags.mock,
        flags.scripted.as_ref(),
        flags.backend_url.as_ref(),
        "the command line",
    )? {
        return Ok(choice);
    }
    if let Some(choice) = pick(
        file.mock.unwrap_or(false),
        file.scripted.as_ref(),
        file.backend_url.as_ref(),
        "the config file",
    )? {
        return Ok(choice);
    }
    env_var(ENV_BACKEND_URL)
        .map(|url| BackendChoice::Http { url })
        .ok_or_else(|| Error::InvalidConfig("no backend selected; pass --mock, --scripted or --backend-url".into()))
}
