//! Command-line pipelines over `releval-core`.
//!
//! Every command reads one JSON run config (flags override it), writes its
//! outputs under the configured output directory as CSV plus a
//! pretty-printed text report, and exits with 0 (success), 1 (input
//! error), 2 (remote judge failure) or 3 (internal invariant violation).

pub mod commands;
pub mod error;
pub mod report;
pub mod workspace;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use releval_core::config::{JudgeKind, RunConfig};
use releval_core::judge::{Sleeper, ThreadSleeper};

use commands::judging::{http_transport, TransportFactory};
pub use error::{CliError, CliResult, ErrorKind};
use workspace::Workspace;

#[derive(Debug, Parser)]
#[command(
    name = "releval",
    version,
    about = "Offline relevance-judgment evaluation pipelines"
)]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags that override fields of the config file.
#[derive(Debug, Default, Args)]
pub struct Overrides {
    /// JSON run config; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub qips: Option<PathBuf>,
    #[arg(long, global = true)]
    pub annotations: Option<PathBuf>,
    #[arg(long, global = true)]
    pub experiments: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_judge_kind)]
    pub judge_kind: Option<JudgeKind>,
    #[arg(long, global = true)]
    pub judge_id: Option<String>,
    #[arg(long, global = true)]
    pub concurrency: Option<usize>,
}

fn parse_judge_kind(s: &str) -> Result<JudgeKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_owned()))
        .map_err(|_| format!("unknown judge kind {s:?}; expected oracle, replay, remote or chat"))
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resolve annotations and report corpus statistics.
    Ingest,
    /// Resolve multi-round annotations into final labels.
    Resolve,
    /// Label distribution of the human labels or of explicit counts.
    Stats {
        /// Counts as RELEVANT,RELATED,IRRELEVANT.
        #[arg(long, value_delimiter = ',')]
        label_counts: Option<Vec<u64>>,
    },
    /// Render judge inputs with the configured augmentations.
    Render,
    /// Judge every QIP with the configured judge (cached, resumable).
    Judge,
    /// f1 of the judge's verdicts against the human labels.
    Evaluate,
    /// Re-enact experiments with human and model labels and compare verdicts.
    Reenact {
        /// Replay published agreement matrices instead of experiments.
        #[arg(long)]
        matrices: Option<PathBuf>,
    },
    /// Cross-judge misprediction analysis.
    Analyze,
    /// Adapter lab.
    #[command(subcommand)]
    Lab(LabCommand),
    /// ingest, judge, evaluate, reenact and analyze in sequence.
    Run,
}

#[derive(Debug, Subcommand)]
pub enum LabCommand {
    /// Train the lab classifier on the rendered, labeled QIPs.
    Train,
    /// Compare analytic gradients with finite differences in both modes.
    GradCheck {
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 24)]
        batch: usize,
    },
}

/// Loads the config file (or defaults) and applies flag overrides.
pub fn effective_config(o: &Overrides) -> CliResult<RunConfig> {
    let mut config = match &o.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let p = &mut config.paths;
    if let Some(v) = &o.output {
        p.output_dir = v.clone();
    }
    if let Some(v) = &o.qips {
        p.qips = Some(v.clone());
    }
    if let Some(v) = &o.annotations {
        p.annotations = Some(v.clone());
    }
    if let Some(v) = &o.experiments {
        p.experiments = Some(v.clone());
    }
    if let Some(v) = o.seed {
        config.seed = v;
    }
    if let Some(v) = o.judge_kind {
        config.judge.kind = v;
    }
    if let Some(v) = &o.judge_id {
        config.judge.id = v.clone();
    }
    if let Some(v) = o.concurrency {
        config.concurrency_limit = v;
    }
    Ok(config)
}

/// Runs one command with an injectable transport and sleeper.
pub fn execute_with(
    cli: &Cli,
    transport: TransportFactory<'_>,
    sleeper: &dyn Sleeper,
) -> CliResult<String> {
    let ws = Workspace::open(effective_config(&cli.overrides)?)?;
    match &cli.command {
        Command::Ingest => commands::data::ingest(&ws),
        Command::Resolve => commands::data::resolve(&ws),
        Command::Stats { label_counts } => {
            let counts = match label_counts.as_deref() {
                None => None,
                Some(&[a, b, c]) => Some([a, b, c]),
                Some(other) => {
                    return Err(CliError::input(format!(
                        "--label-counts expects 3 values, got {}",
                        other.len()
                    )))
                }
            };
            commands::data::stats(&ws, counts)
        }
        Command::Render => commands::data::render(&ws),
        Command::Judge => commands::judging::judge(&ws, transport, sleeper).map(|s| s.text()),
        Command::Evaluate => commands::judging::evaluate(&ws),
        Command::Reenact {
            matrices: Some(path),
        } => commands::reenact::replay_matrices(&ws, path).map(|(t, _)| t),
        Command::Reenact { matrices: None } => commands::reenact::reenact(&ws).map(|(t, _)| t),
        Command::Analyze => commands::analyze::analyze(&ws),
        Command::Lab(LabCommand::Train) => commands::lab::lab_train(&ws),
        Command::Lab(LabCommand::GradCheck { dim, batch }) => {
            commands::lab::lab_grad_check(&ws, *dim, *batch)
        }
        Command::Run => run_pipeline(&ws, transport, sleeper),
    }
}

fn run_pipeline(
    ws: &Workspace,
    transport: TransportFactory<'_>,
    sleeper: &dyn Sleeper,
) -> CliResult<String> {
    let mut out = commands::data::ingest(ws)?;
    out.push('\n');
    out.push_str(&commands::judging::judge(ws, transport, sleeper)?.text());
    out.push('\n');
    out.push_str(&commands::judging::evaluate(ws)?);
    if ws.config.paths.experiments.is_some() {
        out.push('\n');
        out.push_str(&commands::reenact::reenact(ws)?.0);
    }
    out.push('\n');
    out.push_str(&commands::analyze::analyze(ws)?);
    Ok(out)
}

pub fn execute(cli: &Cli) -> CliResult<String> {
    execute_with(cli, &http_transport, &ThreadSleeper)
}

/// Parses `args`, runs the command, prints the report to stdout or the
/// JSON error summary to stderr, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match std::panic::catch_unwind(|| execute(&cli)) {
        Ok(Ok(text)) => {
            print!("{text}");
            0
        }
        Ok(Err(err)) => {
            eprintln!("{}", err.to_json());
            err.exit_code()
        }
        Err(_) => {
            let err = CliError::internal("internal error (panic)");
            eprintln!("{}", err.to_json());
            err.exit_code()
        }
    }
}
