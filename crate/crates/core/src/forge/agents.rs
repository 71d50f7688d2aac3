//! The three generation agents (negative answer, tool use, rationale) over a
//! generic chat-completion transport.
//!
//! Wire format: POST `{messages: [{role, content}], temperature, max_tokens}`
//! and read `{text}` from the response body.

use std::collections::VecDeque;
use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::normalize::normalize_negative;
use super::{
    add_flag, meta, ForgeError, ForgedPair, RewardInstance, Side, FLAG_INVALID_FORMAT,
    FLAG_IRRELEVANT_CALL, FLAG_TOO_MANY_STEPS,
};
use crate::toolbank::{FixtureStore, ToolBank, ToolRequest};
use crate::trajectory::{serialize_prefix, split_stages, Marker, ToolStep, Trajectory};
use crate::util::Permits;

/// Retries after a failed or degenerate agent response.
pub const DEFAULT_RETRIES: usize = 2;
/// Hard cap on tool-agent turns. Trajectories that reach it still go
/// through the step-count filter.
pub const DEFAULT_MAX_TOOL_TURNS: usize = 5;
/// Emitted by the tool agent when no further tool call is needed.
pub const STOP_TOKEN: &str = "[DONE]";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    NegativeGeneration,
    ToolAgent,
    RationaleAgent,
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentRole::NegativeGeneration => "negative_generation",
            AgentRole::ToolAgent => "tool_agent",
            AgentRole::RationaleAgent => "rationale_agent",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: usize,
}

pub trait ChatTransport: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<String, ForgeError>;
}

/// Chat-completion client for an HTTP endpoint.
pub struct HttpChat {
    endpoint: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpChat {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Result<Self, ForgeError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ForgeError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            api_key,
            http,
        })
    }
}

#[derive(Deserialize)]
struct ChatReply {
    text: String,
}

impl ChatTransport for HttpChat {
    fn complete(&self, req: &ChatRequest) -> Result<String, ForgeError> {
        let mut call = self.http.post(&self.endpoint).json(req);
        if let Some(key) = &self.api_key {
            call = call.bearer_auth(key);
        }
        let resp = call.send().map_err(|e| ForgeError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(ForgeError::Transport(format!("status {}", resp.status())));
        }
        resp.json::<ChatReply>()
            .map(|r| r.text)
            .map_err(|e| ForgeError::Transport(e.to_string()))
    }
}

/// Replays canned replies in order and records every request. `Err`
/// entries simulate transport failures; running out is an error too.
#[derive(Debug, Default)]
pub struct ScriptedChat {
    replies: Mutex<VecDeque<Result<String, String>>>,
    requests: Mutex<Vec<ChatRequest>>,
}

impl ScriptedChat {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::with_results(replies.into_iter().map(|s| Ok(s.into())))
    }

    pub fn with_results(replies: impl IntoIterator<Item = Result<String, String>>) -> Self {
        Self {
            replies: Mutex::new(replies.into_iter().collect()),
            requests: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.requests.lock().expect("scripted chat lock").clone()
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().expect("scripted chat lock").len()
    }
}

impl ChatTransport for ScriptedChat {
    fn complete(&self, req: &ChatRequest) -> Result<String, ForgeError> {
        self.requests.lock().expect("scripted chat lock").push(req.clone());
        match self.replies.lock().expect("scripted chat lock").pop_front() {
            Some(Ok(text)) => Ok(text),
            Some(Err(e)) => Err(ForgeError::Transport(e)),
            None => Err(ForgeError::Transport("script exhausted".into())),
        }
    }
}

/// One configured agent. Prompt templates use `{question}`, `{answer}`,
/// `{positive}`, `{history}`, `{tools}` and `{trajectory}` placeholders.
#[derive(Clone)]
pub struct AgentClient {
    pub role: AgentRole,
    pub prompt_template: String,
    pub temperature: f64,
    pub max_tokens: usize,
    pub retries: usize,
    transport: Arc<dyn ChatTransport>,
    permits: Arc<Permits>,
}

impl fmt::Debug for AgentClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AgentClient")
            .field("role", &self.role)
            .field("temperature", &self.temperature)
            .field("max_tokens", &self.max_tokens)
            .finish()
    }
}

impl AgentClient {
    pub fn new(role: AgentRole, transport: Arc<dyn ChatTransport>) -> Self {
        Self {
            role,
            prompt_template: Self::default_template(role).to_string(),
            temperature: 0.7,
            max_tokens: 512,
            retries: DEFAULT_RETRIES,
            transport,
            permits: Arc::new(Permits::new(4)),
        }
    }

    pub fn with_template(mut self, template: impl Into<String>) -> Self {
        self.prompt_template = template.into();
        self
    }

    /// Caps in-flight requests for this client.
    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.permits = Arc::new(Permits::new(n));
        self
    }

    pub fn default_template(role: AgentRole) -> &'static str {
        match role {
            AgentRole::NegativeGeneration => concat!(
                "Question: {question}\nCorrect answer: {positive}\n",
                "Write an incorrect answer in exactly the same style and format as the correct one. ",
                "Reply with the answer only."
            ),
            AgentRole::ToolAgent => concat!(
                "You verify answers with tools.\nTools:\n{tools}\n\n",
                "Question: {question}\nAnswer: {answer}\n{history}\n",
                "Reply with the next 'Thought:', 'Action:' and 'Action Input:' lines, ",
                "or with [DONE] when no more tool calls are needed."
            ),
            AgentRole::RationaleAgent => concat!(
                "{trajectory}\n",
                "Using the question, the answer and the tool observations above, ",
                "explain whether the answer is correct. Reply with the rationale only."
            ),
        }
    }

    fn expect_role(&self, role: AgentRole) -> Result<(), ForgeError> {
        if self.role == role {
            Ok(())
        } else {
            Err(ForgeError::Role {
                expected: role,
                got: self.role,
            })
        }
    }

    fn render(&self, vars: &[(&str, &str)]) -> String {
        let mut out = self.prompt_template.clone();
        for (k, v) in vars {
            out = out.replace(&format!("{{{k}}}"), v);
        }
        out
    }

    fn ask(&self, messages: Vec<ChatMessage>) -> Result<String, ForgeError> {
        let _permit = self.permits.acquire();
        self.transport.complete(&ChatRequest {
            messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        })
    }
}

/// Fills in the negative answer, retrying on empty, echoed or failed output.
pub fn agent_negative(client: &AgentClient, inst: &RewardInstance) -> Result<RewardInstance, ForgeError> {
    client.expect_role(AgentRole::NegativeGeneration)?;
    if !inst.needs_negative {
        return Err(ForgeError::Precondition(format!("instance {} already has a negative", inst.id)));
    }
    let prompt = client.render(&[("question", &inst.question), ("positive", &inst.positive)]);
    let mut last = String::from("no attempts");
    for _ in 0..=client.retries {
        match client.ask(vec![ChatMessage::user(prompt.clone())]) {
            Ok(text) => {
                let neg = normalize_negative(&inst.positive, &text);
                if neg.is_empty() {
                    last = "empty negative".into();
                } else if neg == inst.positive.trim() {
                    last = "negative identical to positive".into();
                } else {
                    let mut out = inst.clone();
                    out.negative = neg;
                    out.needs_negative = false;
                    return Ok(out);
                }
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(ForgeError::Dropped(format!("{}: {last}", inst.id)))
}

/// A parsed tool-agent reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentTurn {
    Stop,
    Call { thought: String, action: String, action_input: String },
}

/// Reads `Thought:` / `Action:` / `Action Input:` from an agent reply.
/// Anything the agent writes after the Action Input stage (a guessed
/// Observation, say) is ignored.
pub fn parse_agent_turn(text: &str) -> Result<AgentTurn, String> {
    let text = text.trim();
    if text.is_empty() {
        return Err("empty reply".into());
    }
    let stages = split_stages(text).map_err(|e| e.to_string());
    let stages = match stages {
        Ok(s) if !s.is_empty() => s,
        _ if text.contains(STOP_TOKEN) => return Ok(AgentTurn::Stop),
        Ok(_) => return Err("no stage markers".into()),
        Err(e) => return Err(e),
    };
    let kinds: Vec<Marker> = stages.iter().map(|s| s.marker).collect();
    if !kinds.starts_with(&[Marker::Thought, Marker::Action, Marker::ActionInput]) {
        if kinds.first() == Some(&Marker::Thought) && text.contains(STOP_TOKEN) {
            return Ok(AgentTurn::Stop);
        }
        return Err(format!("expected Thought, Action, Action Input; got {kinds:?}"));
    }
    let payload = |i: usize| stages[i].payload.trim().to_string();
    let (thought, action, action_input) = (payload(0), payload(1), payload(2));
    if thought.is_empty() || action.is_empty() || action_input.is_empty() || action.contains('\n') {
        return Err("empty or multi-line stage".into());
    }
    let action_input = action_input
        .lines()
        .take_while(|l| !l.contains(STOP_TOKEN))
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string();
    if action_input.is_empty() {
        return Err("empty action input".into());
    }
    Ok(AgentTurn::Call {
        thought,
        action,
        action_input,
    })
}

fn tool_listing(bank: &ToolBank) -> String {
    bank.specs()
        .iter()
        .map(|s| format!("- {}: {}", s.name, s.arg_grammar))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Runs the tool-agent loop for one side. The runtime executes every call
/// and appends its observation. The rationale is left empty.
pub fn agent_toolplan(
    client: &AgentClient,
    inst: &RewardInstance,
    side: Side,
    bank: &ToolBank,
    store: &FixtureStore,
) -> Result<Trajectory, ForgeError> {
    client.expect_role(AgentRole::ToolAgent)?;
    let answer = inst.answer(side).to_string();
    let mut t = Trajectory::new(inst.question.clone(), answer.clone())
        .with_meta(meta::PAIR_ID, inst.id.clone())
        .with_meta(meta::SIDE, side.as_str())
        .with_meta(meta::DOMAIN, inst.tool_domain.as_str())
        .with_meta(meta::SOURCE, inst.source.clone());
    let tools = tool_listing(bank);
    let mut outcomes: Vec<String> = Vec::new();

    'turns: loop {
        if t.steps.len() >= DEFAULT_MAX_TOOL_TURNS {
            add_flag(&mut t, FLAG_TOO_MANY_STEPS);
            break;
        }
        let history = serialize_prefix(&t.question, &t.answer, &t.steps);
        let prompt = client.render(&[
            ("question", &inst.question),
            ("answer", &answer),
            ("history", &history),
            ("tools", &tools),
        ]);
        let mut messages = vec![ChatMessage::user(prompt)];
        let mut reprompted = false;
        let turn = loop {
            let parsed = client
                .ask(messages.clone())
                .map_err(|e| e.to_string())
                .and_then(|text| parse_agent_turn(&text));
            match parsed {
                Ok(turn) => break turn,
                Err(why) if !reprompted => {
                    reprompted = true;
                    messages.push(ChatMessage::user(format!(
                        "Your reply could not be used ({why}). Reply with 'Thought:', 'Action:' and \
                         'Action Input:' lines, or {STOP_TOKEN}."
                    )));
                }
                Err(_) => {
                    add_flag(&mut t, FLAG_INVALID_FORMAT);
                    break 'turns;
                }
            }
        };
        match turn {
            AgentTurn::Stop => break,
            AgentTurn::Call {
                thought,
                action,
                action_input,
            } => {
                if bank.resolve(&action).is_none() || !relevant(inst, bank, &action) {
                    add_flag(&mut t, FLAG_IRRELEVANT_CALL);
                }
                let result = bank.dispatch(&ToolRequest::new(action.clone(), action_input.clone()), store);
                outcomes.push(result.kind().to_string());
                let obs = crate::toolbank::sanitize_observation(result.observation_text(), 4096);
                t.steps
                    .push(ToolStep::new(thought, action, action_input).with_observation(obs));
            }
        }
    }
    t.meta.insert(meta::TOOL_OUTCOMES.to_string(), outcomes.join(","));
    Ok(t)
}

fn relevant(inst: &RewardInstance, bank: &ToolBank, action: &str) -> bool {
    bank.resolve(action)
        .map(|name| inst.tool_domain.admits(name))
        .unwrap_or(false)
}

/// Keeps the text before any stage marker line and drops a leading
/// `Rationale:` label.
fn clean_rationale(text: &str) -> String {
    let text = text.trim();
    let text = text.strip_prefix(Marker::Rationale.label()).unwrap_or(text);
    let mut kept = Vec::new();
    for line in text.lines() {
        if Marker::ALL.iter().any(|m| line.trim_start().starts_with(m.label())) {
            break;
        }
        kept.push(line.trim_end());
    }
    kept.join("\n").trim().to_string()
}

/// Installs the rationale agent's output as the trajectory's rationale.
pub fn agent_rationale(client: &AgentClient, t: &Trajectory) -> Result<Trajectory, ForgeError> {
    client.expect_role(AgentRole::RationaleAgent)?;
    if !t.rationale.is_empty() {
        return Err(ForgeError::Precondition("rationale is already filled".into()));
    }
    let context = serialize_prefix(&t.question, &t.answer, &t.steps);
    let prompt = client.render(&[
        ("trajectory", &context),
        ("question", &t.question),
        ("answer", &t.answer),
    ]);
    let mut last = String::from("no attempts");
    for _ in 0..=client.retries {
        match client.ask(vec![ChatMessage::user(prompt.clone())]) {
            Ok(text) => {
                let r = clean_rationale(&text);
                if !r.is_empty() {
                    let mut out = t.clone();
                    out.rationale = r;
                    return Ok(out);
                }
                last = "empty rationale".into();
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(ForgeError::InvalidFormat(last))
}

/// The three agents used by [`forge_with_agents`].
#[derive(Debug, Clone)]
pub struct AgentSet {
    pub negative: AgentClient,
    pub tool: AgentClient,
    pub rationale: AgentClient,
}

/// Agent-driven pipeline over adapted instances. Instances whose negative
/// cannot be generated are dropped and returned as errors; rationale
/// failures are flagged `invalid_format` so filtering accounts for them.
pub fn forge_with_agents(
    instances: &[RewardInstance],
    agents: &AgentSet,
    bank: &ToolBank,
    store: &FixtureStore,
) -> (Vec<ForgedPair>, Vec<ForgeError>) {
    let results: Vec<Result<ForgedPair, ForgeError>> = instances
        .par_iter()
        .map(|inst| {
            let inst = if inst.needs_negative {
                agent_negative(&agents.negative, inst)?
            } else {
                inst.clone()
            };
            let side = |s: Side| -> Result<Trajectory, ForgeError> {
                let t = agent_toolplan(&agents.tool, &inst, s, bank, store)?;
                Ok(agent_rationale(&agents.rationale, &t).unwrap_or_else(|_| {
                    let mut t = t;
                    add_flag(&mut t, FLAG_INVALID_FORMAT);
                    t
                }))
            };
            Ok(ForgedPair {
                pos_trajectory: side(Side::Pos)?,
                neg_trajectory: side(Side::Neg)?,
                instance: inst,
            })
        })
        .collect();
    let mut pairs = Vec::new();
    let mut dropped = Vec::new();
    for r in results {
        match r {
            Ok(p) => pairs.push(p),
            Err(e) => dropped.push(e),
        }
    }
    (pairs, dropped)
}
