//! `toolrm`: forge, filter, emit, score and evaluate tool-augmented reward
//! data, manage tool fixtures, and serve the reward endpoint.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration
//! error. Failures print one JSON object on the last line of stderr.

mod commands;
mod config;
mod output;
mod serve;

use std::fmt;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use toolrm::toolbank::FixtureMode;

/// An error caused by the invocation or configuration rather than by the
/// work itself.
#[derive(Debug)]
pub struct UsageError(String);

impl UsageError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "toolrm", version, about = "Tool-augmented reward modeling toolkit")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured root seed.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory for this command.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Validate inputs and print the plan without side effects.
    #[arg(long, global = true)]
    pub dry_run: bool,
    #[command(flatten)]
    pub mode: ModeFlags,
    #[command(subcommand)]
    pub command: Command,
}

/// Tool access mode. Replay is the default.
#[derive(Debug, Clone, Copy, Args)]
pub struct ModeFlags {
    /// Serve tool results from recorded fixtures only.
    #[arg(long, global = true, conflicts_with_all = ["record", "live"])]
    pub replay: bool,
    /// Call live tool endpoints and record every result.
    #[arg(long, global = true, conflicts_with = "live")]
    pub record: bool,
    /// Call live tool endpoints without recording.
    #[arg(long, global = true)]
    pub live: bool,
}

impl ModeFlags {
    pub fn mode(self) -> FixtureMode {
        if self.record {
            FixtureMode::Record
        } else if self.live {
            FixtureMode::Passthrough
        } else {
            FixtureMode::Replay
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a preference corpus.
    #[command(subcommand)]
    Forge(ForgeCommand),
    /// Drop malformed pairs and optionally split into train and test.
    Filter {
        #[arg(long)]
        input: PathBuf,
        /// Also drop pairs whose tool calls failed.
        #[arg(long)]
        strict_filter: bool,
        /// Write train.jsonl and test.jsonl next to the kept corpus.
        #[arg(long)]
        split: bool,
    },
    /// Write loss-masked training records and the pair manifest.
    Emit {
        #[arg(long)]
        input: PathBuf,
        /// One of themis, no_observation, no_rationale, vanilla.
        #[arg(long, value_name = "NAME")]
        preset: Option<String>,
    },
    /// Score both sides of every pair against the model backend.
    Score {
        /// Corpus or instance JSONL.
        #[arg(long)]
        input: PathBuf,
    },
    /// Accuracy, tool statistics and reward traces from scored files.
    Eval {
        /// Scored pair or row JSONL, optionally labelled `EPOCH=PATH`.
        /// The last input is the one whose accuracy is reported.
        #[arg(long = "input", required = true, value_name = "[EPOCH=]PATH")]
        inputs: Vec<String>,
        /// Multiple-choice items `{id?, question, choices, answer?}` to
        /// score against the backend.
        #[arg(long, value_name = "PATH")]
        mc: Option<PathBuf>,
        /// Perturbation plan `{pair_id, step, replacement, expected}`
        /// applied to the scored pairs of the last input.
        #[arg(long, value_name = "PATH")]
        perturb: Option<PathBuf>,
    },
    /// Inspect tools and manage fixtures.
    #[command(subcommand)]
    Tools(ToolsCommand),
    /// Print the resolved configuration as TOML, without credentials.
    Config,
    /// Serve POST /reward until interrupted.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Debug, Subcommand)]
pub enum ForgeCommand {
    /// Weather pairs over the configured city/date/aspect grid.
    Weather,
    /// Calendar-then-Weather pairs.
    Multitool,
    /// Weekday, difference and offset pairs.
    Calendar,
    /// Agent-driven pairs from an open dataset dump.
    Agents {
        /// gsm8k, humaneval_mbpp, mlqa, natural_questions or webgpt.
        #[arg(long)]
        source: String,
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ToolsCommand {
    /// Print the registered tools.
    List,
    /// Run one tool call and print the result.
    Probe { tool: String, input: String },
    /// Execute `{tool, input}` JSONL requests live and store the fixtures.
    Record {
        #[arg(long)]
        input: PathBuf,
    },
}

fn error_json(kind: &str, message: &str, code: u8) -> String {
    serde_json::json!({"error": message, "kind": kind, "exit_code": code}).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            eprintln!("{}", error_json("usage", &first, 2));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(summary) => {
            let mut out = std::io::stdout().lock();
            let _ = match summary {
                serde_json::Value::String(text) => write!(out, "{text}"),
                other => writeln!(out, "{other}"),
            };
            ExitCode::SUCCESS
        }
        Err(e) => {
            let (kind, code) = if e.downcast_ref::<UsageError>().is_some() {
                ("usage", 2)
            } else {
                ("runtime", 1)
            };
            eprintln!("{}", error_json(kind, &format!("{e:#}"), code));
            ExitCode::from(code)
        }
    }
}
