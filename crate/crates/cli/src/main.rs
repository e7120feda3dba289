use std::io::Write;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use famicom::Error;

mod commands;
mod config;

use commands::{
    ComplexityArgs, FamiliarityArgs, GridArgs, ReportArgs, ScoreArgs, SelectDemosArgs, SelectPromptArgs, ValidateArgs,
};
use config::{FileConfig, GlobalArgs, Resolved};

/// Estimate prompt performance from model familiarity and question complexity.
#[derive(Debug, Parser)]
#[command(name = "famicom", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score one prompt/query pair
    Score(ScoreArgs),
    /// Familiarity of a prompt, optionally joined with a query
    Familiarity(FamiliarityArgs),
    /// Sampled complexity estimate of a query
    Complexity(ComplexityArgs),
    /// Rank candidate prompts for a query
    SelectPrompt(SelectPromptArgs),
    /// Rank demonstrations for a query
    SelectDemos(SelectDemosArgs),
    /// Run the cross-task evaluation and correlate measures with accuracy
    Validate(ValidateArgs),
    /// Sweep the familiarity and complexity exponents over saved records
    Grid(GridArgs),
    /// Re-bin saved records and rewrite the report files
    Report(ReportArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Score(_) => "score",
            Self::Familiarity(_) => "familiarity",
            Self::Complexity(_) => "complexity",
            Self::SelectPrompt(_) => "select-prompt",
            Self::SelectDemos(_) => "select-demos",
            Self::Validate(_) => "validate",
            Self::Grid(_) => "grid",
            Self::Report(_) => "report",
        }
    }

    fn needs_backend(&self) -> bool {
        !matches!(self, Self::Grid(_) | Self::Report(_))
    }

    /// Whether the command writes its own files into `--out-dir`.
    fn owns_out_dir(&self) -> bool {
        matches!(self, Self::Validate(_) | Self::Report(_))
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let file = FileConfig::load(cli.global.config.as_deref())?;
    let needs_backend = cli.command.needs_backend();
    let mut resolved = if needs_backend {
        Resolved::resolve(&cli.global, &file)?
    } else {
        Resolved::resolve_offline(&cli.global, &file)?
    };
    let backend = if needs_backend { Some(resolved.backend()?) } else { None };
    if let Some(b) = &backend {
        resolved.model = b.model_id().to_string();
    }
    let backend = backend.as_deref();
    let output = match &cli.command {
        Command::Score(args) => commands::score(args, &file, &resolved, backend.unwrap())?,
        Command::Familiarity(args) => commands::familiarity_cmd(args, &file, &resolved, backend.unwrap())?,
        Command::Complexity(args) => commands::complexity_cmd(args, &file, &resolved, backend.unwrap())?,
        Command::SelectPrompt(args) => commands::select_prompt(args, &file, &resolved, backend.unwrap())?,
        Command::SelectDemos(args) => commands::select_demos(args, &file, &resolved, backend.unwrap())?,
        Command::Validate(args) => commands::validate(args, &file, &resolved, backend.unwrap())?,
        Command::Grid(args) => commands::grid(args, &file, &resolved)?,
        Command::Report(args) => commands::report(args, &file, &resolved)?,
    };
    let mut bytes = serde_json::to_vec_pretty(&output)?;
    bytes.push(b'\n');
    match (&resolved.out_dir, cli.command.owns_out_dir()) {
        (Some(dir), false) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("{}.json", cli.command.name()));
            std::fs::write(&path, &bytes)?;
            eprintln!("wrote {}", path.display());
        }
        _ => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2));
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
