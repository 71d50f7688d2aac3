//! Staged trajectory model and its text grammar.
//!
//! A trajectory is rendered as a sequence of marker-prefixed stages:
//!
//! ```text
//! Question: ...
//! Answer: ...
//! Thought: ...
//! Action: ...
//! Action Input: ...
//! Observation: ...
//! Rationale: ...
//! Score:
//! ```
//!
//! Markers are only recognised at the start of a line, so multi-line payloads
//! (code answers, long observations) run until the next marker line. All
//! offsets exposed by [`SegmentMap`] are character (Unicode scalar) offsets
//! into the canonical text, half-open.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Stage markers in the order the grammar expects them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Marker {
    Question,
    Answer,
    Thought,
    Action,
    ActionInput,
    Observation,
    Rationale,
    Score,
}

impl Marker {
    pub const ALL: [Marker; 8] = [
        Marker::Question,
        Marker::Answer,
        Marker::Thought,
        Marker::Action,
        Marker::ActionInput,
        Marker::Observation,
        Marker::Rationale,
        Marker::Score,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Marker::Question => "Question:",
            Marker::Answer => "Answer:",
            Marker::Thought => "Thought:",
            Marker::Action => "Action:",
            Marker::ActionInput => "Action Input:",
            Marker::Observation => "Observation:",
            Marker::Rationale => "Rationale:",
            Marker::Score => "Score:",
        }
    }

    /// Matches a marker at the start of `line` (leading blanks allowed).
    /// Returns the marker and the byte length consumed including the blanks.
    fn match_line_start(line: &str) -> Option<(Marker, usize)> {
        let trimmed = line.trim_start_matches([' ', '\t']);
        let indent = line.len() - trimmed.len();
        // "Action Input:" must be tried before "Action:".
        const ORDER: [Marker; 8] = [
            Marker::Question,
            Marker::Answer,
            Marker::Thought,
            Marker::ActionInput,
            Marker::Action,
            Marker::Observation,
            Marker::Rationale,
            Marker::Score,
        ];
        ORDER
            .iter()
            .find(|m| trimmed.starts_with(m.label()))
            .map(|m| (*m, indent + m.label().len()))
    }
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One tool invocation: the thought, the call and (once executed) its result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolStep {
    pub thought: String,
    pub action: String,
    pub action_input: String,
    #[serde(default)]
    pub observation: Option<String>,
}

impl ToolStep {
    pub fn new(
        thought: impl Into<String>,
        action: impl Into<String>,
        action_input: impl Into<String>,
    ) -> Self {
        Self {
            thought: thought.into(),
            action: action.into(),
            action_input: action_input.into(),
            observation: None,
        }
    }

    pub fn with_observation(mut self, observation: impl Into<String>) -> Self {
        self.observation = Some(observation.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub steps: Vec<ToolStep>,
    #[serde(default)]
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<f64>,
    #[serde(default)]
    pub meta: BTreeMap<String, String>,
}

impl Trajectory {
    pub fn new(question: impl Into<String>, answer: impl Into<String>) -> Self {
        Self {
            question: question.into(),
            answer: answer.into(),
            steps: Vec::new(),
            rationale: String::new(),
            reward: None,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_step(mut self, step: ToolStep) -> Self {
        self.steps.push(step);
        self
    }

    pub fn with_rationale(mut self, rationale: impl Into<String>) -> Self {
        self.rationale = rationale.into();
        self
    }

    pub fn with_meta(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.meta.insert(key.into(), value.into());
        self
    }

    /// Number of tool steps (T).
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// True when every step carries an observation.
    pub fn is_executed(&self) -> bool {
        self.steps.iter().all(|s| s.observation.is_some())
    }

    /// Equality over the parts that live in the text form (reward and meta
    /// are not part of the grammar).
    pub fn same_content(&self, other: &Trajectory) -> bool {
        self.question == other.question
            && self.answer == other.answer
            && self.steps == other.steps
            && self.rationale == other.rationale
    }

    /// Checks the invariants that make `parse(serialize(t))` reproduce `t`.
    pub fn validate(&self) -> Result<(), InvalidTrajectory> {
        check_payload("question", &self.question, true)?;
        check_payload("answer", &self.answer, true)?;
        let last = self.steps.len().saturating_sub(1);
        for (i, step) in self.steps.iter().enumerate() {
            check_payload("thought", &step.thought, true).map_err(|e| e.at_step(i))?;
            check_payload("action", &step.action, true).map_err(|e| e.at_step(i))?;
            if step.action.contains('\n') {
                return Err(InvalidTrajectory::new("action", "contains a newline").at_step(i));
            }
            check_payload("action_input", &step.action_input, true).map_err(|e| e.at_step(i))?;
            match &step.observation {
                Some(obs) => check_payload("observation", obs, true).map_err(|e| e.at_step(i))?,
                None if i != last => {
                    return Err(InvalidTrajectory::new(
                        "observation",
                        "missing on a step that is followed by another step",
                    )
                    .at_step(i))
                }
                None => {}
            }
        }
        check_payload("rationale", &self.rationale, false)
    }

    pub fn to_text(&self) -> String {
        serialize(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid {field}{}: {reason}", .step.map(|s| format!(" in step {s}")).unwrap_or_default())]
pub struct InvalidTrajectory {
    pub field: &'static str,
    pub step: Option<usize>,
    pub reason: String,
}

impl InvalidTrajectory {
    fn new(field: &'static str, reason: impl Into<String>) -> Self {
        Self {
            field,
            step: None,
            reason: reason.into(),
        }
    }

    fn at_step(mut self, step: usize) -> Self {
        self.step = Some(step);
        self
    }
}

fn check_payload(field: &'static str, text: &str, required: bool) -> Result<(), InvalidTrajectory> {
    if required && text.is_empty() {
        return Err(InvalidTrajectory::new(field, "empty"));
    }
    if text.trim() != text {
        return Err(InvalidTrajectory::new(field, "leading or trailing whitespace"));
    }
    if text.contains('\r') {
        return Err(InvalidTrajectory::new(field, "carriage return"));
    }
    if text.lines().skip(1).any(|l| Marker::match_line_start(l).is_some()) {
        return Err(InvalidTrajectory::new(field, "a line starts with a stage marker"));
    }
    Ok(())
}

/// What a character range of the canonical text holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Question,
    Answer,
    Thought,
    Action,
    ActionInput,
    Observation,
    Rationale,
    ScoreMarker,
}

impl SegmentKind {
    pub const ALL: [SegmentKind; 8] = [
        SegmentKind::Question,
        SegmentKind::Answer,
        SegmentKind::Thought,
        SegmentKind::Action,
        SegmentKind::ActionInput,
        SegmentKind::Observation,
        SegmentKind::Rationale,
        SegmentKind::ScoreMarker,
    ];

    /// The tool-block kinds: thought, action and action input.
    pub const TOOL: [SegmentKind; 3] = [
        SegmentKind::Thought,
        SegmentKind::Action,
        SegmentKind::ActionInput,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub kind: SegmentKind,
    /// Tool step index for thought/action/action_input/observation segments.
    pub step: Option<usize>,
    pub range: Range<usize>,
}

/// Ordered, non-overlapping character ranges of the payloads in a canonical
/// trajectory text. The score marker segment covers the `Score:` label itself.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentMap {
    pub segments: Vec<Segment>,
}

impl SegmentMap {
    pub fn iter(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter()
    }

    pub fn of_kind(&self, kind: SegmentKind) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(move |s| s.kind == kind)
    }

    /// Character offset of the `Score:` marker.
    pub fn score_anchor(&self) -> Option<usize> {
        self.of_kind(SegmentKind::ScoreMarker).next().map(|s| s.range.start)
    }
}

/// Ranges of exactly the requested kinds, in text order.
pub fn segment_slices(map: &SegmentMap, kinds: &[SegmentKind]) -> Vec<Range<usize>> {
    map.segments
        .iter()
        .filter(|s| kinds.contains(&s.kind))
        .map(|s| s.range.clone())
        .collect()
}

/// Returns the characters of `text` in `range` (character offsets).
pub fn char_slice(text: &str, range: &Range<usize>) -> String {
    text.chars()
        .skip(range.start)
        .take(range.end.saturating_sub(range.start))
        .collect()
}

struct Writer {
    out: String,
    chars: usize,
    segments: Vec<Segment>,
}

impl Writer {
    fn new() -> Self {
        Self {
            out: String::new(),
            chars: 0,
            segments: Vec::new(),
        }
    }

    fn push(&mut self, s: &str) {
        self.out.push_str(s);
        self.chars += s.chars().count();
    }

    fn stage(&mut self, marker: Marker, kind: SegmentKind, step: Option<usize>, payload: &str) {
        self.push(marker.label());
        if !payload.is_empty() {
            self.push(" ");
            let start = self.chars;
            self.push(payload);
            self.segments.push(Segment {
                kind,
                step,
                range: start..self.chars,
            });
        }
        self.push("\n");
    }

    fn steps(&mut self, steps: &[ToolStep]) {
        for (i, step) in steps.iter().enumerate() {
            self.stage(Marker::Thought, SegmentKind::Thought, Some(i), &step.thought);
            self.stage(Marker::Action, SegmentKind::Action, Some(i), &step.action);
            self.stage(Marker::ActionInput, SegmentKind::ActionInput, Some(i), &step.action_input);
            if let Some(obs) = &step.observation {
                self.stage(Marker::Observation, SegmentKind::Observation, Some(i), obs);
            }
        }
    }
}

/// Canonical text and its segment map.
pub fn serialize_with_map(t: &Trajectory) -> (String, SegmentMap) {
    let mut w = Writer::new();
    w.stage(Marker::Question, SegmentKind::Question, None, &t.question);
    w.stage(Marker::Answer, SegmentKind::Answer, None, &t.answer);
    w.steps(&t.steps);
    w.stage(Marker::Rationale, SegmentKind::Rationale, None, &t.rationale);
    let start = w.chars;
    w.push(Marker::Score.label());
    w.segments.push(Segment {
        kind: SegmentKind::ScoreMarker,
        step: None,
        range: start..w.chars,
    });
    (w.out, SegmentMap { segments: w.segments })
}

pub fn serialize(t: &Trajectory) -> String {
    serialize_with_map(t).0
}

/// Canonical text of an in-progress trajectory: question, answer and the
/// given steps, each stage newline-terminated. This is the prefix handed to
/// a generating backend.
pub fn serialize_prefix(question: &str, answer: &str, steps: &[ToolStep]) -> String {
    let mut w = Writer::new();
    w.stage(Marker::Question, SegmentKind::Question, None, question);
    w.stage(Marker::Answer, SegmentKind::Answer, None, answer);
    w.steps(steps);
    w.out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
#[error("format error at char {position}: expected {expected}")]
pub struct FormatError {
    /// Character offset where the problem was detected.
    pub position: usize,
    pub expected: String,
}

impl FormatError {
    fn new(position: usize, expected: impl Into<String>) -> Self {
        Self {
            position,
            expected: expected.into(),
        }
    }
}

/// A marker occurrence and the trimmed payload that follows it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub marker: Marker,
    /// Character offset of the marker.
    pub position: usize,
    pub payload: String,
}

/// Splits text into marker-delimited stages without checking their order.
/// Text before the first marker must be blank.
pub fn split_stages(text: &str) -> Result<Vec<Stage>, FormatError> {
    let text = text.replace("\r\n", "\n");
    let mut stages: Vec<Stage> = Vec::new();
    let mut current: Option<(Marker, usize, String)> = None;
    let mut preamble = String::new();
    let mut chars = 0usize;

    for line in text.split_inclusive('\n') {
        match Marker::match_line_start(line) {
            Some((marker, consumed)) => {
                if let Some((m, pos, body)) = current.take() {
                    stages.push(Stage {
                        marker: m,
                        position: pos,
                        payload: body.trim().to_string(),
                    });
                }
                let indent = line.len() - line.trim_start_matches([' ', '\t']).len();
                current = Some((marker, chars + indent, line[consumed..].to_string()));
            }
            None => match &mut current {
                Some((_, _, body)) => body.push_str(line),
                None => preamble.push_str(line),
            },
        }
        chars += line.chars().count();
    }
    if let Some((m, pos, body)) = current {
        stages.push(Stage {
            marker: m,
            position: pos,
            payload: body.trim().to_string(),
        });
    }
    if !preamble.trim().is_empty() {
        let offset = preamble.chars().take_while(|c| c.is_whitespace()).count();
        return Err(FormatError::new(offset, Marker::Question.label()));
    }
    Ok(stages)
}

/// Parses text under the strict stage order. Accepts any whitespace around
/// markers and payloads; the returned map refers to the canonical
/// re-serialisation, not to the input text.
pub fn parse(text: &str) -> Result<(Trajectory, SegmentMap), FormatError> {
    let stages = split_stages(text)?;
    let end = text.replace("\r\n", "\n").chars().count();
    let mut it = stages.into_iter().peekable();

    let expect = |it: &mut std::iter::Peekable<std::vec::IntoIter<Stage>>,
                      want: Marker,
                      allow_empty: bool|
     -> Result<String, FormatError> {
        match it.next() {
            Some(s) if s.marker == want => {
                if s.payload.is_empty() && !allow_empty {
                    Err(FormatError::new(s.position, format!("non-empty {}", want.label())))
                } else {
                    Ok(s.payload)
                }
            }
            Some(s) => Err(FormatError::new(s.position, want.label())),
            None => Err(FormatError::new(end, want.label())),
        }
    };

    let question = expect(&mut it, Marker::Question, false)?;
    let answer = expect(&mut it, Marker::Answer, false)?;
    let mut steps: Vec<ToolStep> = Vec::new();
    loop {
        match it.peek().map(|s| (s.marker, s.position)) {
            Some((Marker::Thought, pos)) => {
                if steps.last().is_some_and(|s| s.observation.is_none()) {
                    return Err(FormatError::new(pos, Marker::Observation.label()));
                }
                let thought = expect(&mut it, Marker::Thought, false)?;
                let action = expect(&mut it, Marker::Action, false)?;
                let action_input = expect(&mut it, Marker::ActionInput, false)?;
                steps.push(ToolStep {
                    thought,
                    action,
                    action_input,
                    observation: None,
                });
                if let Some(Marker::Observation) = it.peek().map(|s| s.marker) {
                    let obs = expect(&mut it, Marker::Observation, false)?;
                    steps.last_mut().expect("step just pushed").observation = Some(obs);
                }
            }
            Some((Marker::Rationale, _)) => break,
            Some((_, pos)) => {
                return Err(FormatError::new(
                    pos,
                    format!("{} or {}", Marker::Thought, Marker::Rationale),
                ))
            }
            None => return Err(FormatError::new(end, Marker::Rationale.label())),
        }
    }
    let rationale = expect(&mut it, Marker::Rationale, true)?;
    let score = it
        .next()
        .ok_or_else(|| FormatError::new(end, Marker::Score.label()))?;
    if score.marker != Marker::Score {
        return Err(FormatError::new(score.position, Marker::Score.label()));
    }
    if !score.payload.is_empty() {
        return Err(FormatError::new(
            score.position + Marker::Score.label().len(),
            "end of input after Score:",
        ));
    }
    if let Some(extra) = it.next() {
        return Err(FormatError::new(extra.position, "end of input"));
    }

    let trajectory = Trajectory {
        question,
        answer,
        steps,
        rationale,
        reward: None,
        meta: BTreeMap::new(),
    };
    let (_, map) = serialize_with_map(&trajectory);
    Ok((trajectory, map))
}

/// Canonical form of a trajectory text.
pub fn normalize(text: &str) -> Result<String, FormatError> {
    parse(text).map(|(t, _)| serialize(&t))
}
