//! Step-wise reward scoring: a model backend writes the trajectory one
//! stage group at a time, the runtime executes each tool call and appends
//! its observation, and the backend scores the finished text once.
//!
//! Backend wire format: POST `/continue` `{prefix, stop, max_len}` →
//! `{text}` and POST `/score` `{text}` → `{score}`.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::forge::{RewardInstance, Side, ToolDomain};
use crate::toolbank::{sanitize_observation, FixtureStore, OutcomeKind, ToolBank, ToolRequest};
use crate::trajectory::{serialize, serialize_prefix, split_stages, Marker, ToolStep, Trajectory};
use crate::util::sha256_hex;

/// Stop markers for ordinary continuations.
pub const STOP_MARKERS: [&str; 2] = ["Observation:", "Score:"];
/// Stop markers for a forced rationale continuation.
pub const RATIONALE_STOP: [&str; 1] = ["Score:"];
/// Observation length cap when embedding tool output.
pub const OBSERVATION_CAP: usize = 2048;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoringError {
    #[error("backend transport: {0}")]
    Transport(String),
    #[error("malformed continuation after reprompt: {0}")]
    Malformed(String),
    #[error("tool call failed in strict mode: {tool}: {message}")]
    Tool { tool: String, message: String },
    #[error("backend returned a non-finite score")]
    NonFinite,
    #[error("mock backend script exhausted")]
    ScriptExhausted,
    #[error("no score scripted for this text (sha256 {0})")]
    UnscriptedScore(String),
    #[error("step {step} out of range for a trajectory with {steps} steps")]
    StepOutOfRange { step: usize, steps: usize },
    #[error("scored text does not parse: {0}")]
    Grammar(String),
}

/// A reward model behind two calls: text continuation and scalar scoring.
pub trait Backend: Send + Sync {
    /// Continues `prefix`, halting before the first stop marker or after
    /// `max_len` characters. The returned text excludes the stop marker.
    fn continue_text(&self, prefix: &str, stop: &[&str], max_len: usize) -> Result<String, ScoringError>;

    fn score(&self, text: &str) -> Result<f64, ScoringError>;

    /// Number of trajectories that may be scored concurrently.
    fn max_in_flight(&self) -> usize {
        1
    }
}

/// Backend reached over HTTP.
pub struct HttpBackend {
    base: String,
    http: reqwest::blocking::Client,
    in_flight: usize,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, timeout: Duration, in_flight: usize) -> Result<Self, ScoringError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ScoringError::Transport(e.to_string()))?;
        Ok(Self {
            base: base_url.into().trim_end_matches('/').to_string(),
            http,
            in_flight: in_flight.max(1),
        })
    }

    fn post<T: for<'de> Deserialize<'de>>(&self, path: &str, body: serde_json::Value) -> Result<T, ScoringError> {
        let resp = self
            .http
            .post(format!("{}{path}", self.base))
            .json(&body)
            .send()
            .map_err(|e| ScoringError::Transport(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(ScoringError::Transport(format!("{path}: status {}", resp.status())));
        }
        resp.json().map_err(|e| ScoringError::Transport(format!("{path}: {e}")))
    }
}

#[derive(Deserialize)]
struct ContinueReply {
    text: String,
}

#[derive(Deserialize)]
struct ScoreReply {
    score: f64,
}

impl Backend for HttpBackend {
    fn continue_text(&self, prefix: &str, stop: &[&str], max_len: usize) -> Result<String, ScoringError> {
        let body = serde_json::json!({"prefix": prefix, "stop": stop, "max_len": max_len});
        self.post::<ContinueReply>("/continue", body).map(|r| r.text)
    }

    fn score(&self, text: &str) -> Result<f64, ScoringError> {
        self.post::<ScoreReply>("/score", serde_json::json!({"text": text}))
            .map(|r| r.score)
    }

    fn max_in_flight(&self) -> usize {
        self.in_flight
    }
}

type ContinueFn = dyn Fn(&str, &[&str]) -> Option<String> + Send + Sync;
type ScoreFn = dyn Fn(&str) -> Option<f64> + Send + Sync;

/// Deterministic test backend. Continuations come from an ordered script
/// or a function of the prefix; scores come from a map keyed by the SHA-256
/// of the scored text, or from a function. Running out of script, or
/// scoring unknown text, is an error.
#[derive(Default)]
pub struct MockBackend {
    script: Mutex<VecDeque<String>>,
    continue_fn: Option<Box<ContinueFn>>,
    scores: HashMap<String, f64>,
    score_queue: Mutex<VecDeque<f64>>,
    score_fn: Option<Box<ScoreFn>>,
    continue_calls: AtomicUsize,
    score_calls: AtomicUsize,
    in_flight: usize,
}

impl fmt::Debug for MockBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MockBackend")
            .field("continue_calls", &self.continue_calls())
            .field("score_calls", &self.score_calls())
            .finish()
    }
}

impl MockBackend {
    pub fn scripted<I, S>(continuations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            script: Mutex::new(continuations.into_iter().map(Into::into).collect()),
            in_flight: 1,
            ..Self::default()
        }
    }

    /// Continuations computed from `(prefix, stop markers)`.
    pub fn from_fn(f: impl Fn(&str, &[&str]) -> Option<String> + Send + Sync + 'static) -> Self {
        Self {
            continue_fn: Some(Box::new(f)),
            in_flight: 4,
            ..Self::default()
        }
    }

    /// Score for exactly this serialized text.
    pub fn with_score(mut self, text: &str, score: f64) -> Self {
        self.scores.insert(sha256_hex(text.as_bytes()), score);
        self
    }

    /// Scores handed out in call order, after the text map is consulted.
    pub fn with_score_sequence(self, scores: impl IntoIterator<Item = f64>) -> Self {
        *self.score_queue.lock().expect("mock lock") = scores.into_iter().collect();
        self
    }

    pub fn with_score_fn(mut self, f: impl Fn(&str) -> Option<f64> + Send + Sync + 'static) -> Self {
        self.score_fn = Some(Box::new(f));
        self
    }

    pub fn with_in_flight(mut self, n: usize) -> Self {
        self.in_flight = n.max(1);
        self
    }

    pub fn continue_calls(&self) -> usize {
        self.continue_calls.load(Ordering::SeqCst)
    }

    pub fn score_calls(&self) -> usize {
        self.score_calls.load(Ordering::SeqCst)
    }

    pub fn remaining_script(&self) -> usize {
        self.script.lock().expect("mock lock").len()
    }
}

impl Backend for MockBackend {
    fn continue_text(&self, prefix: &str, stop: &[&str], _max_len: usize) -> Result<String, ScoringError> {
        self.continue_calls.fetch_add(1, Ordering::SeqCst);
        if let Some(f) = &self.continue_fn {
            if let Some(text) = f(prefix, stop) {
                return Ok(text);
            }
        }
        self.script
            .lock()
            .expect("mock lock")
            .pop_front()
            .ok_or(ScoringError::ScriptExhausted)
    }

    fn score(&self, text: &str) -> Result<f64, ScoringError> {
        self.score_calls.fetch_add(1, Ordering::SeqCst);
        let hash = sha256_hex(text.as_bytes());
        if let Some(s) = self.scores.get(&hash) {
            return Ok(*s);
        }
        if let Some(s) = self.score_queue.lock().expect("mock lock").pop_front() {
            return Ok(s);
        }
        self.score_fn
            .as_ref()
            .and_then(|f| f(text))
            .ok_or(ScoringError::UnscriptedScore(hash))
    }

    fn max_in_flight(&self) -> usize {
        self.in_flight.max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub max_steps: usize,
    /// Abort on a failed tool call instead of embedding the error text.
    pub strict: bool,
    /// Character budget per continuation.
    pub max_len: usize,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            max_steps: 3,
            strict: false,
            max_len: 1024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrajectory {
    /// Carries the reward.
    pub trajectory: Trajectory,
    /// One outcome per tool step.
    pub tool_outcomes: Vec<OutcomeKind>,
    /// Set when the backend tried to open a tool block past the cap.
    pub truncated: bool,
}

impl ScoredTrajectory {
    pub fn reward(&self) -> f64 {
        self.trajectory.reward.expect("scored trajectories carry a reward")
    }

    pub fn text(&self) -> String {
        serialize(&self.trajectory)
    }
}

enum Continuation {
    Tool { thought: String, action: String, action_input: String },
    Rationale(String),
}

/// Cuts the text at the first line that starts with one of `stop`.
fn cut_at_stop(text: &str, stop: &[&str]) -> String {
    let mut out = String::new();
    for line in text.split_inclusive('\n') {
        if stop.iter().any(|s| line.trim_start().starts_with(s)) {
            break;
        }
        out.push_str(line);
    }
    out
}

fn interpret(text: &str) -> Result<Continuation, String> {
    let text = cut_at_stop(text, &STOP_MARKERS);
    let stages = split_stages(text.trim()).map_err(|e| e.to_string())?;
    let kinds: Vec<Marker> = stages.iter().map(|s| s.marker).collect();
    match kinds.as_slice() {
        [Marker::Thought, Marker::Action, Marker::ActionInput] => {
            let p = |i: usize| stages[i].payload.clone();
            if p(0).is_empty() || p(1).is_empty() || p(2).is_empty() || p(1).contains('\n') {
                return Err("tool block with an empty or multi-line stage".into());
            }
            Ok(Continuation::Tool {
                thought: p(0),
                action: p(1),
                action_input: p(2),
            })
        }
        [Marker::Rationale] => Ok(Continuation::Rationale(stages[0].payload.clone())),
        other => Err(format!("unexpected stages {other:?}")),
    }
}

/// Payload of a forced rationale continuation.
fn rationale_payload(text: &str) -> String {
    let markers: Vec<&str> = Marker::ALL.iter().map(|m| m.label()).collect();
    let text = cut_at_stop(text, &markers);
    let text = text.trim();
    text.strip_prefix(Marker::Rationale.label()).unwrap_or(text).trim().to_string()
}

fn next_continuation(backend: &dyn Backend, prefix: &str, max_len: usize) -> Result<Continuation, ScoringError> {
    let first = backend.continue_text(prefix, &STOP_MARKERS, max_len)?;
    match interpret(&first) {
        Ok(c) => Ok(c),
        Err(_) => {
            let second = backend.continue_text(prefix, &STOP_MARKERS, max_len)?;
            interpret(&second).map_err(ScoringError::Malformed)
        }
    }
}

struct LoopState {
    steps: Vec<ToolStep>,
    outcomes: Vec<OutcomeKind>,
}

fn run_loop(
    question: &str,
    answer: &str,
    mut state: LoopState,
    backend: &dyn Backend,
    bank: &ToolBank,
    store: &FixtureStore,
    opts: &ScoreOptions,
) -> Result<ScoredTrajectory, ScoringError> {
    let mut truncated = false;
    let rationale = loop {
        let prefix = serialize_prefix(question, answer, &state.steps);
        match next_continuation(backend, &prefix, opts.max_len)? {
            Continuation::Rationale(r) => break r,
            Continuation::Tool { .. } if state.steps.len() >= opts.max_steps => {
                truncated = true;
                let forced = format!("{prefix}{}", Marker::Rationale.label());
                let text = backend.continue_text(&forced, &RATIONALE_STOP, opts.max_len)?;
                break rationale_payload(&text);
            }
            Continuation::Tool {
                thought,
                action,
                action_input,
            } => {
                let result = bank.dispatch(&ToolRequest::new(action.clone(), action_input.clone()), store);
                if opts.strict && !result.is_ok() {
                    return Err(ScoringError::Tool {
                        tool: action,
                        message: result.observation_text().to_string(),
                    });
                }
                state.outcomes.push(result.kind());
                let obs = sanitize_observation(result.observation_text(), OBSERVATION_CAP);
                state
                    .steps
                    .push(ToolStep::new(thought, action, action_input).with_observation(obs));
            }
        }
    };
    let mut t = Trajectory::new(question.trim(), answer.trim()).with_rationale(rationale);
    t.steps = state.steps;
    t.validate().map_err(|e| ScoringError::Grammar(e.to_string()))?;
    let text = serialize(&t);
    let reward = backend.score(&text)?;
    if !reward.is_finite() {
        return Err(ScoringError::NonFinite);
    }
    t.reward = Some(reward);
    Ok(ScoredTrajectory {
        trajectory: t,
        tool_outcomes: state.outcomes,
        truncated,
    })
}

/// Generates, executes and scores one (question, answer) trajectory.
pub fn score_answer(
    question: &str,
    answer: &str,
    backend: &dyn Backend,
    bank: &ToolBank,
    store: &FixtureStore,
    opts: &ScoreOptions,
) -> Result<ScoredTrajectory, ScoringError> {
    let state = LoopState {
        steps: Vec::new(),
        outcomes: Vec::new(),
    };
    run_loop(question, answer, state, backend, bank, store, opts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairVerdict {
    Preferred,
    Reversed,
    Tie,
    Unscored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair_id: String,
    pub tool_domain: ToolDomain,
    pub pos: Option<ScoredTrajectory>,
    pub neg: Option<ScoredTrajectory>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
    pub verdict: PairVerdict,
}

impl ScoredPair {
    pub fn side(&self, side: Side) -> Option<&ScoredTrajectory> {
        match side {
            Side::Pos => self.pos.as_ref(),
            Side::Neg => self.neg.as_ref(),
        }
    }
}

fn verdict(pos: Option<&ScoredTrajectory>, neg: Option<&ScoredTrajectory>) -> PairVerdict {
    match (pos, neg) {
        (Some(p), Some(n)) => {
            let (a, b) = (p.reward(), n.reward());
            if a > b {
                PairVerdict::Preferred
            } else if a < b {
                PairVerdict::Reversed
            } else {
                PairVerdict::Tie
            }
        }
        _ => PairVerdict::Unscored,
    }
}

/// Scores the positive side, then the negative side.
pub fn score_pair(
    inst: &RewardInstance,
    backend: &dyn Backend,
    bank: &ToolBank,
    store: &FixtureStore,
    opts: &ScoreOptions,
) -> ScoredPair {
    let mut errors = Vec::new();
    let mut run = |side: Side| match score_answer(&inst.question, inst.answer(side), backend, bank, store, opts) {
        Ok(s) => Some(s),
        Err(e) => {
            errors.push(format!("{side}: {e}"));
            None
        }
    };
    let pos = run(Side::Pos);
    let neg = run(Side::Neg);
    ScoredPair {
        pair_id: inst.id.clone(),
        tool_domain: inst.tool_domain,
        verdict: verdict(pos.as_ref(), neg.as_ref()),
        pos,
        neg,
        errors,
    }
}

/// Scores many pairs, at most `backend.max_in_flight()` at a time. Output
/// order follows input order.
pub fn score_pairs(
    instances: &[RewardInstance],
    backend: &dyn Backend,
    bank: &ToolBank,
    store: &FixtureStore,
    opts: &ScoreOptions,
) -> Vec<ScoredPair> {
    use rayon::prelude::*;
    let n = backend.max_in_flight().max(1);
    if n == 1 {
        return instances
            .iter()
            .map(|i| score_pair(i, backend, bank, store, opts))
            .collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
        Ok(pool) => pool.install(|| {
            instances
                .par_iter()
                .map(|i| score_pair(i, backend, bank, store, opts))
                .collect()
        }),
        Err(_) => instances
            .iter()
            .map(|i| score_pair(i, backend, bank, store, opts))
            .collect(),
    }
}

/// Replaces the observation of `step`, drops everything generated after
/// it, resumes generation from that point and rescores.
pub fn perturb_observation(
    st: &ScoredTrajectory,
    step: usize,
    replacement: &str,
    backend: &dyn Backend,
    bank: &ToolBank,
    store: &FixtureStore,
    opts: &ScoreOptions,
) -> Result<ScoredTrajectory, ScoringError> {
    let t = &st.trajectory;
    if step >= t.step_count() {
        return Err(ScoringError::StepOutOfRange {
            step,
            steps: t.step_count(),
        });
    }
    let mut steps = t.steps[..=step].to_vec();
    steps[step].observation = Some(sanitize_observation(replacement, OBSERVATION_CAP));
    let mut outcomes: Vec<OutcomeKind> = st.tool_outcomes.iter().take(step + 1).copied().collect();
    outcomes.resize(step + 1, OutcomeKind::Ok);
    run_loop(
        &t.question,
        &t.answer,
        LoopState { steps, outcomes },
        backend,
        bank,
        store,
        opts,
    )
}
