//! Adapters from open dataset dumps (JSON Lines) to reward instances.
//!
//! Record shapes:
//! * gsm8k `{question, answer}`
//! * humaneval_mbpp `{prompt, canonical_solution, test_list, lang_tag}`
//! * mlqa `{question, answer, lang}`
//! * natural_questions `{question, short_answer}`
//! * webgpt `{question, answer_a, answer_b, preference}` where preference is
//!   `"a"`, `"b"` or a number (positive prefers a)

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{RewardInstance, ToolDomain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Gsm8k,
    HumanevalMbpp,
    Mlqa,
    NaturalQuestions,
    Webgpt,
}

impl Source {
    pub const ALL: [Source; 5] = [
        Source::Gsm8k,
        Source::HumanevalMbpp,
        Source::Mlqa,
        Source::NaturalQuestions,
        Source::Webgpt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Gsm8k => "gsm8k",
            Source::HumanevalMbpp => "humaneval_mbpp",
            Source::Mlqa => "mlqa",
            Source::NaturalQuestions => "natural_questions",
            Source::Webgpt => "webgpt",
        }
    }

    pub fn domain(self) -> ToolDomain {
        match self {
            Source::Gsm8k => ToolDomain::Calculator,
            Source::HumanevalMbpp => ToolDomain::Code,
            Source::Mlqa => ToolDomain::Translator,
            Source::NaturalQuestions => ToolDomain::Wiki,
            Source::Webgpt => ToolDomain::Google,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Source::ALL
            .into_iter()
            .find(|x| x.as_str() == s.trim())
            .ok_or_else(|| format!("unknown source '{s}'"))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdaptOutput {
    pub instances: Vec<RewardInstance>,
    /// Malformed or unusable records, by 1-based line number.
    pub skipped: Vec<usize>,
}

#[derive(Deserialize)]
struct Gsm8k {
    question: String,
    answer: String,
}

#[derive(Deserialize)]
struct HumanevalMbpp {
    prompt: String,
    canonical_solution: String,
    test_list: Vec<String>,
    #[serde(default = "python")]
    lang_tag: String,
}

fn python() -> String {
    "python".to_string()
}

#[derive(Deserialize)]
struct Mlqa {
    question: String,
    answer: String,
    lang: String,
}

#[derive(Deserialize)]
struct NaturalQuestions {
    question: String,
    short_answer: String,
}

#[derive(Deserialize)]
struct Webgpt {
    question: String,
    answer_a: String,
    answer_b: String,
    preference: Value,
}

/// Rewrites a trailing `#### N` line into a sentence.
fn gsm8k_answer(answer: &str) -> String {
    let answer = answer.trim();
    match answer.rsplit_once("####") {
        Some((body, n)) if !n.trim().is_empty() => {
            let body = body.trim_end();
            let tail = format!("The final answer is {}.", n.trim());
            if body.is_empty() {
                tail
            } else {
                format!("{body}\n{tail}")
            }
        }
        _ => answer.to_string(),
    }
}

/// `Some(true)` when answer a is preferred, `None` for a tie or garbage.
fn prefers_a(pref: &Value) -> Option<bool> {
    match pref {
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "a" => Some(true),
            "b" => Some(false),
            _ => None,
        },
        Value::Number(n) => {
            let v = n.as_f64()?;
            (v != 0.0).then_some(v > 0.0)
        }
        _ => None,
    }
}

fn instance(
    source: Source,
    line: usize,
    question: String,
    positive: String,
    negative: Option<String>,
    extras: BTreeMap<String, Value>,
) -> Option<RewardInstance> {
    let question = question.trim().to_string();
    let positive = positive.trim().to_string();
    if question.is_empty() || positive.is_empty() {
        return None;
    }
    let (negative, needs_negative) = match negative {
        Some(n) => {
            let n = n.trim().to_string();
            if n.is_empty() || n == positive {
                return None;
            }
            (n, false)
        }
        None => (String::new(), true),
    };
    Some(RewardInstance {
        id: format!("{source}-{line:06}"),
        question,
        positive,
        negative,
        tool_domain: source.domain(),
        source: source.as_str().to_string(),
        needs_negative,
        extras,
    })
}

fn convert(source: Source, line: usize, text: &str) -> Option<RewardInstance> {
    match source {
        Source::Gsm8k => {
            let r: Gsm8k = serde_json::from_str(text).ok()?;
            instance(source, line, r.question, gsm8k_answer(&r.answer), None, BTreeMap::new())
        }
        Source::HumanevalMbpp => {
            let r: HumanevalMbpp = serde_json::from_str(text).ok()?;
            if r.test_list.is_empty() {
                return None;
            }
            let extras = BTreeMap::from([
                ("test_list".to_string(), Value::from(r.test_list)),
                ("lang_tag".to_string(), Value::from(r.lang_tag)),
            ]);
            instance(source, line, r.prompt, r.canonical_solution, None, extras)
        }
        Source::Mlqa => {
            let r: Mlqa = serde_json::from_str(text).ok()?;
            let extras = BTreeMap::from([("lang".to_string(), Value::from(r.lang))]);
            instance(source, line, r.question, r.answer, None, extras)
        }
        Source::NaturalQuestions => {
            let r: NaturalQuestions = serde_json::from_str(text).ok()?;
            instance(source, line, r.question, r.short_answer, None, BTreeMap::new())
        }
        Source::Webgpt => {
            let r: Webgpt = serde_json::from_str(text).ok()?;
            let (pos, neg) = if prefers_a(&r.preference)? {
                (r.answer_a, r.answer_b)
            } else {
                (r.answer_b, r.answer_a)
            };
            instance(source, line, r.question, pos, Some(neg), BTreeMap::new())
        }
    }
}

/// Converts a JSON Lines stream. Blank lines are ignored; malformed records
/// are skipped and reported by line number. Read errors end the stream.
pub fn adapt_source(source: Source, records: impl BufRead) -> AdaptOutput {
    let mut out = AdaptOutput::default();
    for (i, line) in records.lines().enumerate() {
        let line_no = i + 1;
        let Ok(line) = line else {
            out.skipped.push(line_no);
            break;
        };
        if line.trim().is_empty() {
            continue;
        }
        match convert(source, line_no, &line) {
            Some(inst) => out.instances.push(inst),
            None => out.skipped.push(line_no),
        }
    }
    out
}
