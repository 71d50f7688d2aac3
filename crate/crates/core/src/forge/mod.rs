//! Preference-pair construction: template generators, dataset adapters,
//! agent orchestration, negative normalization and corpus filtering.

use std::collections::BTreeMap;
use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::toolbank::{CALCULATOR, CALENDAR, CODE, GOOGLE_SEARCH, TRANSLATOR, WEATHER, WIKI_SEARCH};
use crate::trajectory::Trajectory;
use crate::util;

mod adapters;
mod agents;
mod filter;
mod normalize;
mod templates;

pub use adapters::{adapt_source, AdaptOutput, Source};
pub use agents::{
    agent_negative, agent_rationale, agent_toolplan, forge_with_agents, parse_agent_turn,
    AgentClient, AgentRole, AgentSet, AgentTurn, ChatMessage, ChatRequest, ChatTransport,
    HttpChat, ScriptedChat, DEFAULT_MAX_TOOL_TURNS, DEFAULT_RETRIES, STOP_TOKEN,
};
pub use filter::{filter_corpus, split_corpus, DropReason, FilterPolicy, FilterReport};
pub use normalize::normalize_negative;
pub use templates::{
    calendar_pair, gen_calendar, gen_multitool, gen_weather, placeholders, CalendarTemplates,
    GenOutput, TemplatePair, TemplateSet,
};

/// Metadata keys stored on forged trajectories.
pub mod meta {
    pub const PAIR_ID: &str = "pair_id";
    pub const SIDE: &str = "side";
    pub const DOMAIN: &str = "tool_domain";
    pub const SOURCE: &str = "source";
    /// Comma-separated flags such as `invalid_format` or `irrelevant_call`.
    pub const FLAGS: &str = "flags";
    /// Comma-separated outcome kinds, one per step.
    pub const TOOL_OUTCOMES: &str = "tool_outcomes";
}

pub const FLAG_INVALID_FORMAT: &str = "invalid_format";
pub const FLAG_IRRELEVANT_CALL: &str = "irrelevant_call";
pub const FLAG_TOO_MANY_STEPS: &str = "too_many_steps";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ToolDomain {
    Calendar,
    Calculator,
    Weather,
    Code,
    Translator,
    Wiki,
    Google,
    Multi,
}

impl ToolDomain {
    pub const ALL: [ToolDomain; 8] = [
        ToolDomain::Calendar,
        ToolDomain::Calculator,
        ToolDomain::Weather,
        ToolDomain::Code,
        ToolDomain::Translator,
        ToolDomain::Wiki,
        ToolDomain::Google,
        ToolDomain::Multi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolDomain::Calendar => "Calendar",
            ToolDomain::Calculator => "Calculator",
            ToolDomain::Weather => "Weather",
            ToolDomain::Code => "Code",
            ToolDomain::Translator => "Translator",
            ToolDomain::Wiki => "Wiki",
            ToolDomain::Google => "Google",
            ToolDomain::Multi => "Multi",
        }
    }

    /// Registry tools that count as relevant for this domain. `Multi`
    /// accepts any tool.
    pub fn tools(self) -> &'static [&'static str] {
        match self {
            ToolDomain::Calendar => &[CALENDAR],
            ToolDomain::Calculator => &[CALCULATOR],
            ToolDomain::Weather => &[WEATHER],
            ToolDomain::Code => &[CODE],
            ToolDomain::Translator => &[TRANSLATOR],
            ToolDomain::Wiki => &[WIKI_SEARCH],
            ToolDomain::Google => &[GOOGLE_SEARCH],
            ToolDomain::Multi => &[],
        }
    }

    pub fn admits(self, tool: &str) -> bool {
        self == ToolDomain::Multi || self.tools().contains(&tool)
    }

    /// Held-out fraction of the domain's pairs in the reference data
    /// statistics (test / (train + test)).
    pub fn test_fraction(self) -> f64 {
        let (train, test) = match self {
            ToolDomain::Calculator => (877.0, 154.0),
            ToolDomain::Code => (486.0, 189.0),
            ToolDomain::Translator => (1682.0, 300.0),
            ToolDomain::Google => (3932.0, 134.0),
            ToolDomain::Calendar => (320.0, 166.0),
            ToolDomain::Weather => (476.0, 158.0),
            ToolDomain::Wiki => (5399.0, 284.0),
            ToolDomain::Multi => (432.0, 144.0),
        };
        test / (train + test)
    }
}

impl fmt::Display for ToolDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolDomain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolDomain::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown tool domain '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Pos,
    Neg,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Pos => "pos",
            Side::Neg => "neg",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A question with a preferred (positive) and a dispreferred (negative)
/// answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardInstance {
    pub id: String,
    pub question: String,
    pub positive: String,
    #[serde(default)]
    pub negative: String,
    pub tool_domain: ToolDomain,
    pub source: String,
    /// Set while the negative still has to be generated.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub needs_negative: bool,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, serde_json::Value>,
}

impl RewardInstance {
    pub fn answer(&self, side: Side) -> &str {
        match side {
            Side::Pos => &self.positive,
            Side::Neg => &self.negative,
        }
    }

    /// A complete instance has a negative that differs from the positive.
    pub fn is_complete(&self) -> bool {
        !self.needs_negative && !self.negative.trim().is_empty() && self.positive != self.negative
    }
}

/// One corpus line: an instance with both executed trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgedPair {
    pub instance: RewardInstance,
    pub pos_trajectory: Trajectory,
    pub neg_trajectory: Trajectory,
}

impl ForgedPair {
    pub fn trajectory(&self, side: Side) -> &Trajectory {
        match side {
            Side::Pos => &self.pos_trajectory,
            Side::Neg => &self.neg_trajectory,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("agent role mismatch: expected {expected}, got {got}")]
    Role { expected: AgentRole, got: AgentRole },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("instance dropped: {0}")]
    Dropped(String),
    #[error("invalid_format: {0}")]
    InvalidFormat(String),
    #[error("template: {0}")]
    Template(String),
    #[error("agent transport: {0}")]
    Transport(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Comma-separated flag list stored under [`meta::FLAGS`].
pub fn flags_of(t: &Trajectory) -> Vec<&str> {
    t.meta
        .get(meta::FLAGS)
        .map(|s| s.split(',').map(str::trim).filter(|f| !f.is_empty()).collect())
        .unwrap_or_default()
}

pub fn add_flag(t: &mut Trajectory, flag: &str) {
    let mut flags: Vec<String> = flags_of(t).into_iter().map(str::to_string).collect();
    if !flags.iter().any(|f| f == flag) {
        flags.push(flag.to_string());
    }
    t.meta.insert(meta::FLAGS.to_string(), flags.join(","));
}

pub fn read_corpus(path: impl AsRef<Path>) -> io::Result<Vec<ForgedPair>> {
    util::read_jsonl_file(path)
}

pub fn write_corpus(path: impl AsRef<Path>, pairs: &[ForgedPair]) -> io::Result<()> {
    util::write_jsonl_file(path, pairs)
}
