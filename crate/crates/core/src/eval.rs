//! Evaluation: pairwise accuracy, multiple-choice selection, tool-call
//! statistics, observation-perturbation probes and reward traces.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::forge::{Side, ToolDomain};
use crate::scoring::{perturb_observation, score_answer, Backend, ScoreOptions, ScoredPair, ScoredTrajectory, ScoringError};
use crate::toolbank::{FixtureStore, OutcomeKind, ToolBank};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no rows to evaluate")]
    Empty,
    #[error("non-finite score in row {0}")]
    NonFinite(String),
    #[error("no choices given")]
    NoChoices,
    #[error("choice {index} could not be scored: {source}")]
    Choice { index: usize, source: ScoringError },
}

/// Rewards for one scored pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub pair_id: String,
    pub tool_domain: ToolDomain,
    pub r_pos: f64,
    pub r_neg: f64,
    /// Outcomes of the positive side's steps followed by the negative side's.
    #[serde(default)]
    pub tool_outcomes: Vec<OutcomeKind>,
}

impl EvalRow {
    /// `None` when either side is unscored.
    pub fn from_scored(p: &ScoredPair) -> Option<Self> {
        let (pos, neg) = (p.pos.as_ref()?, p.neg.as_ref()?);
        Some(Self {
            pair_id: p.pair_id.clone(),
            tool_domain: p.tool_domain,
            r_pos: pos.reward(),
            r_neg: neg.reward(),
            tool_outcomes: pos.tool_outcomes.iter().chain(&neg.tool_outcomes).copied().collect(),
        })
    }

    /// Ties are not correct.
    pub fn is_correct(&self) -> bool {
        self.r_pos > self.r_neg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainAccuracy {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub per_domain: BTreeMap<ToolDomain, DomainAccuracy>,
    /// Instance-weighted mean over all rows.
    pub micro: f64,
    pub n: usize,
}

impl AccuracyReport {
    /// `{domain: accuracy, ..., "micro": x}` as written to accuracy.json.
    pub fn to_json(&self) -> serde_json::Value {
        let mut m = serde_json::Map::new();
        for (d, a) in &self.per_domain {
            m.insert(d.to_string(), serde_json::json!(a.accuracy));
        }
        m.insert("micro".into(), serde_json::json!(self.micro));
        serde_json::Value::Object(m)
    }
}

pub fn pairwise_accuracy(rows: &[EvalRow]) -> Result<AccuracyReport, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts: BTreeMap<ToolDomain, (usize, usize)> = BTreeMap::new();
    for r in rows {
        if !r.r_pos.is_finite() || !r.r_neg.is_finite() {
            return Err(EvalError::NonFinite(r.pair_id.clone()));
        }
        let c = counts.entry(r.tool_domain).or_default();
        c.0 += 1;
        c.1 += usize::from(r.is_correct());
    }
    let correct: usize = counts.values().map(|c| c.1).sum();
    Ok(AccuracyReport {
        per_domain: counts
            .into_iter()
            .map(|(d, (n, c))| {
                (
                    d,
                    DomainAccuracy {
                        n,
                        correct: c,
                        accuracy: c as f64 / n as f64,
                    },
                )
            })
            .collect(),
        micro: correct as f64 / rows.len() as f64,
        n: rows.len(),
    })
}

/// Index of the largest score; the lowest index wins ties. `None` for an
/// empty slice or when any score is NaN.
pub fn argmax_lowest(scores: &[f64]) -> Option<usize> {
    if scores.iter().any(|s| s.is_nan()) {
        return None;
    }
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if best.is_none_or(|b| *s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub question: String,
    pub choices: Vec<String>,
    pub scores: Vec<f64>,
    pub index: usize,
}

/// Scores every choice as an answer to `question` and picks the best.
pub fn mc_select(
    question: &str,
    choices: &[String],
    backend: &dyn Backend,
    bank: &ToolBank,
    store: &FixtureStore,
    opts: &ScoreOptions,
) -> Result<McResult, EvalError> {
    if choices.is_empty() {
        return Err(EvalError::NoChoices);
    }
    let mut scores = Vec::with_capacity(choices.len());
    for (index, c) in choices.iter().enumerate() {
        let s = score_answer(question, c, backend, bank, store, opts)
            .map_err(|source| EvalError::Choice { index, source })?;
        scores.push(s.reward());
    }
    let index = argmax_lowest(&scores).expect("finite scores");
    Ok(McResult {
        question: question.to_string(),
        choices: choices.to_vec(),
        scores,
        index,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCounts {
    pub total_calls: usize,
    /// Calls whose outcome is any error kind. Execution-level only: an `ok`
    /// call with an unhelpful input still counts as correct.
    pub incorrect_calls: usize,
    pub by_kind: BTreeMap<OutcomeKind, usize>,
}

impl ToolCounts {
    fn add(&mut self, kind: OutcomeKind) {
        self.total_calls += 1;
        self.incorrect_calls += usize::from(kind.is_error());
        *self.by_kind.entry(kind).or_default() += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: String,
    pub per_tool: BTreeMap<String, ToolCounts>,
}

/// Per-tool call counts, cumulative and per epoch.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolStats {
    pub per_tool: BTreeMap<String, ToolCounts>,
    pub series: Vec<EpochStats>,
}

impl ToolStats {
    /// Adds one epoch's trajectories. Steps are keyed by their action name.
    pub fn record(&mut self, scored: &[ScoredTrajectory], epoch: &str) {
        let mut epoch_counts: BTreeMap<String, ToolCounts> = BTreeMap::new();
        for st in scored {
            for (i, step) in st.trajectory.steps.iter().enumerate() {
                let kind = st.tool_outcomes.get(i).copied().unwrap_or(OutcomeKind::InvalidArgument);
                let tool = step.action.trim().to_string();
                epoch_counts.entry(tool.clone()).or_default().add(kind);
                self.per_tool.entry(tool).or_default().add(kind);
            }
        }
        self.series.push(EpochStats {
            epoch: epoch.to_string(),
            per_tool: epoch_counts,
        });
    }

    pub fn total_calls(&self) -> usize {
        self.per_tool.values().map(|c| c.total_calls).sum()
    }
}

pub fn tool_stats(scored: &[ScoredTrajectory], epoch: &str) -> ToolStats {
    let mut s = ToolStats::default();
    s.record(scored, epoch);
    s
}

/// One probe: replace the observation at `step` on both sides and expect
/// `expected` to be preferred afterwards.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbSpec {
    pub step: usize,
    pub replacement: String,
    pub expected: Side,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probed: usize,
    pub skipped: usize,
    /// Accuracy of the original labels over the probed pairs.
    pub before: f64,
    /// Accuracy against the expected labels after perturbation.
    pub after: f64,
    pub delta: f64,
}

/// Re-scores the planned pairs with perturbed observations. Pairs that are
/// missing, unscored, too short for the step, or fail to re-score are
/// skipped and counted.
pub fn perturbation_probe(
    pairs: &[ScoredPair],
    plan: &BTreeMap<String, PerturbSpec>,
    backend: &dyn Backend,
    bank: &ToolBank,
    store: &FixtureStore,
    opts: &ScoreOptions,
) -> ProbeReport {
    let by_id: BTreeMap<&str, &ScoredPair> = pairs.iter().map(|p| (p.pair_id.as_str(), p)).collect();
    let (mut probed, mut skipped, mut before_ok, mut after_ok) = (0usize, 0usize, 0usize, 0usize);
    for (id, spec) in plan {
        let Some((pos, neg)) = by_id
            .get(id.as_str())
            .and_then(|p| Some((p.pos.as_ref()?, p.neg.as_ref()?)))
        else {
            skipped += 1;
            continue;
        };
        let perturbed = perturb_observation(pos, spec.step, &spec.replacement, backend, bank, store, opts)
            .and_then(|p| {
                perturb_observation(neg, spec.step, &spec.replacement, backend, bank, store, opts)
                    .map(|n| (p, n))
            });
        let Ok((p2, n2)) = perturbed else {
            skipped += 1;
            continue;
        };
        probed += 1;
        before_ok += usize::from(pos.reward() > neg.reward());
        let winner_ok = match spec.expected {
            Side::Pos => p2.reward() > n2.reward(),
            Side::Neg => n2.reward() > p2.reward(),
        };
        after_ok += usize::from(winner_ok);
    }
    let frac = |k: usize| if probed == 0 { 0.0 } else { k as f64 / probed as f64 };
    let (before, after) = (frac(before_ok), frac(after_ok));
    ProbeReport {
        probed,
        skipped,
        before,
        after,
        delta: after - before,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub epoch: String,
    pub n: usize,
    pub mean_pos: f64,
    pub mean_neg: f64,
}

/// Mean positive and negative reward per epoch, in the given epoch order.
/// Epochs without rows are left out.
pub fn reward_trace(series: &[(String, Vec<EvalRow>)]) -> Vec<TracePoint> {
    series
        .iter()
        .filter(|(_, rows)| !rows.is_empty())
        .map(|(epoch, rows)| {
            let n = rows.len() as f64;
            TracePoint {
                epoch: epoch.clone(),
                n: rows.len(),
                mean_pos: rows.iter().map(|r| r.r_pos).sum::<f64>() / n,
                mean_neg: rows.iter().map(|r| r.r_neg).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Tab-separated `epoch, mean_pos, mean_neg` table with a header line.
pub fn trace_tsv(points: &[TracePoint]) -> String {
    let mut out = String::from("epoch\tmean_pos\tmean_neg\n");
    for p in points {
        out.push_str(&format!("{}\t{}\t{}\n", p.epoch, p.mean_pos, p.mean_neg));
    }
    out
}
