//! The tool bank: seven executable tools behind one registry, with
//! record/replay fixtures for anything that needs the network.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub mod calculator;
pub mod calendar;
pub mod code;
mod fixtures;
pub mod search;
pub mod translator;
pub mod weather;

pub use fixtures::{normalize_input, FixtureMode, FixtureStore};

pub const CALCULATOR: &str = "Calculator";
pub const CALENDAR: &str = "Calendar";
pub const WEATHER: &str = "Weather";
pub const CODE: &str = "Code";
pub const TRANSLATOR: &str = "Translator";
pub const WIKI_SEARCH: &str = "WikiSearch";
pub const GOOGLE_SEARCH: &str = "Google Search";

pub const BUILTIN_TOOLS: [&str; 7] = [
    CALCULATOR,
    CALENDAR,
    WEATHER,
    CODE,
    TRANSLATOR,
    WIKI_SEARCH,
    GOOGLE_SEARCH,
];

/// Observation text used when a live tool call fails.
pub const TOOL_FAILURE_MESSAGE: &str =
    "An error occurred during the tool invoke, so no result was returned.";

/// Default cap on search observations, in characters.
pub const DEFAULT_OBSERVATION_CAP: usize = 1024;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    /// Human-readable description of the Action Input format.
    pub arg_grammar: String,
    pub requires_network: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRequest {
    pub tool: String,
    pub raw_input: String,
}

impl ToolRequest {
    pub fn new(tool: impl Into<String>, raw_input: impl Into<String>) -> Self {
        Self {
            tool: tool.into(),
            raw_input: raw_input.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    InvalidArgument,
    ExecutionError,
    FixtureMiss,
    NetworkError,
    Timeout,
}

/// Outcome class of a tool call, as recorded per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Ok,
    InvalidArgument,
    ExecutionError,
    FixtureMiss,
    NetworkError,
    Timeout,
}

impl OutcomeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Ok => "ok",
            OutcomeKind::InvalidArgument => "invalid_argument",
            OutcomeKind::ExecutionError => "execution_error",
            OutcomeKind::FixtureMiss => "fixture_miss",
            OutcomeKind::NetworkError => "network_error",
            OutcomeKind::Timeout => "timeout",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            OutcomeKind::Ok,
            OutcomeKind::InvalidArgument,
            OutcomeKind::ExecutionError,
            OutcomeKind::FixtureMiss,
            OutcomeKind::NetworkError,
            OutcomeKind::Timeout,
        ]
        .into_iter()
        .find(|k| k.as_str() == s.trim())
    }

    pub fn is_error(self) -> bool {
        self != OutcomeKind::Ok
    }
}

impl fmt::Display for OutcomeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<ErrorKind> for OutcomeKind {
    fn from(k: ErrorKind) -> Self {
        match k {
            ErrorKind::InvalidArgument => OutcomeKind::InvalidArgument,
            ErrorKind::ExecutionError => OutcomeKind::ExecutionError,
            ErrorKind::FixtureMiss => OutcomeKind::FixtureMiss,
            ErrorKind::NetworkError => OutcomeKind::NetworkError,
            ErrorKind::Timeout => OutcomeKind::Timeout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ToolResult {
    Ok { observation: String },
    Error { kind: ErrorKind, message: String },
}

impl ToolResult {
    pub fn ok(observation: impl Into<String>) -> Self {
        let observation = observation.into();
        debug_assert!(!observation.is_empty());
        ToolResult::Ok { observation }
    }

    pub fn error(kind: ErrorKind, message: impl Into<String>) -> Self {
        ToolResult::Error {
            kind,
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self::error(ErrorKind::InvalidArgument, message)
    }

    pub fn kind(&self) -> OutcomeKind {
        match self {
            ToolResult::Ok { .. } => OutcomeKind::Ok,
            ToolResult::Error { kind, .. } => (*kind).into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self, ToolResult::Ok { .. })
    }

    /// Text to embed as an Observation: the result, or the error message.
    pub fn observation_text(&self) -> &str {
        match self {
            ToolResult::Ok { observation } => observation,
            ToolResult::Error { message, .. } => message,
        }
    }
}

/// A single executable tool.
pub trait Tool: Send + Sync {
    fn spec(&self) -> &ToolSpec;

    /// Canonical fixture key for `raw_input`. Malformed input is reported
    /// here so replay mode rejects it the same way live mode would.
    fn fixture_key(&self, raw_input: &str) -> Result<String, ToolResult> {
        Ok(normalize_input(raw_input))
    }

    /// Runs the tool for real (locally or against its live endpoint).
    fn execute(&self, raw_input: &str) -> ToolResult;
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("tool '{0}' is already registered")]
    Duplicate(String),
    #[error("http client: {0}")]
    Http(String),
}

/// Endpoints, credentials and executor settings for the built-in tools.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolBankConfig {
    pub weather: weather::WeatherConfig,
    pub wiki: search::SearchConfig,
    pub google: search::SearchConfig,
    pub translator: translator::TranslatorConfig,
    pub code: code::CodeConfig,
    /// Per-request timeout for live HTTP tools.
    pub http_timeout_ms: Option<u64>,
}

/// Registry of tools keyed by name, with a few accepted aliases.
pub struct ToolBank {
    tools: BTreeMap<String, Arc<dyn Tool>>,
    aliases: BTreeMap<String, String>,
}

impl fmt::Debug for ToolBank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ToolBank")
            .field("tools", &self.tools.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl ToolBank {
    pub fn empty() -> Self {
        Self {
            tools: BTreeMap::new(),
            aliases: BTreeMap::new(),
        }
    }

    /// The seven built-in tools with default settings (no live endpoints).
    pub fn with_defaults() -> Self {
        Self::from_config(&ToolBankConfig::default()).expect("default tool bank")
    }

    pub fn from_config(cfg: &ToolBankConfig) -> Result<Self, RegistryError> {
        let timeout = Duration::from_millis(cfg.http_timeout_ms.unwrap_or(15_000));
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| RegistryError::Http(e.to_string()))?;

        let mut bank = Self::empty();
        bank.register(Arc::new(calculator::CalculatorTool::new()))?;
        bank.register(Arc::new(calendar::CalendarTool::new()))?;
        bank.register(Arc::new(weather::WeatherTool::new(cfg.weather.clone(), http.clone())))?;
        bank.register(Arc::new(code::CodeTool::new(cfg.code.clone())))?;
        bank.register(Arc::new(translator::TranslatorTool::new(
            cfg.translator.clone(),
            http.clone(),
        )))?;
        bank.register(Arc::new(search::SearchTool::new(
            search::SearchSource::Wiki,
            cfg.wiki.clone(),
            http.clone(),
        )))?;
        bank.register(Arc::new(search::SearchTool::new(
            search::SearchSource::Web,
            cfg.google.clone(),
            http,
        )))?;
        for (alias, target) in [
            ("Wiki Search", WIKI_SEARCH),
            ("Wikipedia", WIKI_SEARCH),
            ("Google", GOOGLE_SEARCH),
            ("GoogleSearch", GOOGLE_SEARCH),
            ("Code Interpreter", CODE),
            ("Calendar Search", CALENDAR),
        ] {
            bank.aliases.insert(alias.to_string(), target.to_string());
        }
        Ok(bank)
    }

    /// Adds an operator extension. Names must be unique.
    pub fn register(&mut self, tool: Arc<dyn Tool>) -> Result<(), RegistryError> {
        let name = tool.spec().name.clone();
        if self.tools.contains_key(&name) {
            return Err(RegistryError::Duplicate(name));
        }
        self.tools.insert(name, tool);
        Ok(())
    }

    pub fn specs(&self) -> Vec<ToolSpec> {
        self.tools.values().map(|t| t.spec().clone()).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.tools.keys().cloned().collect()
    }

    /// Canonical registry name for `name`, following aliases.
    pub fn resolve(&self, name: &str) -> Option<&str> {
        let name = name.trim();
        if let Some((k, _)) = self.tools.get_key_value(name) {
            return Some(k.as_str());
        }
        self.aliases
            .get(name)
            .and_then(|target| self.tools.get_key_value(target.as_str()))
            .map(|(k, _)| k.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn Tool>> {
        self.resolve(name).and_then(|n| self.tools.get(n))
    }

    /// Routes a request to its tool. Never panics or fails outright; every
    /// outcome is a [`ToolResult`].
    pub fn dispatch(&self, req: &ToolRequest, store: &FixtureStore) -> ToolResult {
        let Some(tool) = self.get(&req.tool) else {
            return ToolResult::invalid(format!("Unknown tool '{}'.", req.tool.trim()));
        };
        let spec = tool.spec();
        if !spec.requires_network {
            return tool.execute(&req.raw_input);
        }
        let key = match tool.fixture_key(&req.raw_input) {
            Ok(k) => k,
            Err(rejected) => return rejected,
        };
        match store.mode() {
            FixtureMode::Replay => store.get(&spec.name, &key).unwrap_or_else(|| {
                ToolResult::error(
                    ErrorKind::FixtureMiss,
                    format!("No recorded result for {} input '{}'.", spec.name, key),
                )
            }),
            FixtureMode::Record => {
                let result = tool.execute(&req.raw_input);
                store.record(&spec.name, &key, &result);
                result
            }
            FixtureMode::Passthrough => tool.execute(&req.raw_input),
        }
    }
}

/// Collapses whitespace (including newlines) and caps length so an
/// observation always fits on one grammar line.
pub fn sanitize_observation(text: &str, max_chars: usize) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.chars().count() <= max_chars {
        collapsed
    } else {
        collapsed
            .chars()
            .take(max_chars)
            .collect::<String>()
            .trim_end()
            .to_string()
    }
}

/// Shortest decimal rendering: integers without a fraction, otherwise up to
/// ten decimals with trailing zeros removed.
pub fn format_number(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    let rounded = v.round();
    if (v - rounded).abs() <= 1e-9 * rounded.abs().max(1.0) {
        let r = if rounded == 0.0 { 0.0 } else { rounded };
        return format!("{r:.0}");
    }
    let s = format!("{v:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}
