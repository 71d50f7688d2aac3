//! Training-record emission: loss-masked character spans over the canonical
//! trajectory text, observation dropout, positive imitation and the pairwise
//! ranking loss.
//!
//! The language-modeling mask for a record is
//! `alpha * (tool stages + beta * observations + omega * rationale)`, with
//! every switch in {0, 1}. The tool stages of a step are its thought, action
//! and action input.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::forge::{ForgedPair, Side};
use crate::trajectory::{serialize_with_map, SegmentKind, SegmentMap, Trajectory};
use crate::util::{sha256_hex, sub_seed};

/// Observation text substituted for a dropped observation.
pub const DROPPED_OBSERVATION: &str = "[no observation]";
/// Trajectories with more tool steps than this are rejected.
pub const MAX_STEPS: usize = 3;
pub const PRESETS: [&str; 4] = ["themis", "no_observation", "no_rationale", "vanilla"];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EmitError {
    #[error("invalid emit config: {0}")]
    InvalidConfig(String),
    #[error("segment map does not describe this trajectory")]
    MapMismatch,
    #[error("pair {pair_id} ({side}) is not filtered: {reason}")]
    Unfiltered {
        pair_id: String,
        side: Side,
        reason: String,
    },
    #[error("non-finite reward: {0}")]
    NonFinite(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitConfig {
    pub alpha: u8,
    pub beta: u8,
    pub omega: u8,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default)]
    pub positive_imitation: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_dropout() -> f64 {
    0.01
}

impl Default for EmitConfig {
    fn default() -> Self {
        Self::themis()
    }
}

impl EmitConfig {
    fn with_switches(alpha: u8, beta: u8, omega: u8) -> Self {
        Self {
            alpha,
            beta,
            omega,
            dropout_rate: default_dropout(),
            positive_imitation: false,
            seed: 0,
        }
    }

    /// All loss terms on.
    pub fn themis() -> Self {
        Self::with_switches(1, 1, 1)
    }

    /// `name` is one of [`PRESETS`].
    pub fn preset(name: &str) -> Option<Self> {
        Some(match name {
            "themis" => Self::with_switches(1, 1, 1),
            "no_observation" => Self::with_switches(1, 0, 1),
            "no_rationale" => Self::with_switches(1, 1, 0),
            "vanilla" => Self::with_switches(0, 0, 0),
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), EmitError> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("omega", self.omega)] {
            if v > 1 {
                return Err(EmitError::InvalidConfig(format!("{name} must be 0 or 1, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.dropout_rate) {
            return Err(EmitError::InvalidConfig(format!(
                "dropout_rate must lie in [0, 1], got {}",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Content hash of the configuration (hex SHA-256 of its JSON form).
    pub fn fingerprint(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    /// Segment kinds that receive language-modeling loss.
    pub fn loss_kinds(&self) -> Vec<SegmentKind> {
        if self.alpha == 0 {
            return Vec::new();
        }
        let mut kinds = SegmentKind::TOOL.to_vec();
        if self.beta == 1 {
            kinds.push(SegmentKind::Observation);
        }
        if self.omega == 1 {
            kinds.push(SegmentKind::Rationale);
        }
        kinds
    }
}

/// Half-open character ranges of `map` that receive LM loss under `cfg`,
/// sorted and disjoint. `map` must be the segment map of `serialize(t)`.
pub fn compute_loss_spans(t: &Trajectory, map: &SegmentMap, cfg: &EmitConfig) -> Result<Vec<Range<usize>>, EmitError> {
    if serialize_with_map(t).1 != *map {
        return Err(EmitError::MapMismatch);
    }
    Ok(spans_for(map, &cfg.loss_kinds()))
}

fn spans_for(map: &SegmentMap, kinds: &[SegmentKind]) -> Vec<Range<usize>> {
    let mut spans: Vec<Range<usize>> = map
        .iter()
        .filter(|s| kinds.contains(&s.kind) && !s.range.is_empty())
        .map(|s| s.range.clone())
        .collect();
    spans.sort_by_key(|r| r.start);
    spans
}

/// Replaces each observation with [`DROPPED_OBSERVATION`] with probability
/// `rate`. One draw is taken per step whether or not it has an observation.
/// Returns the new trajectory and the dropped step indices.
pub fn apply_observation_dropout<R: Rng + ?Sized>(
    t: &Trajectory,
    rate: f64,
    rng: &mut R,
) -> (Trajectory, Vec<usize>) {
    let rate = rate.clamp(0.0, 1.0);
    let mut out = t.clone();
    let mut dropped = Vec::new();
    for (i, step) in out.steps.iter_mut().enumerate() {
        let hit = rng.random_bool(rate);
        if hit && step.observation.is_some() {
            step.observation = Some(DROPPED_OBSERVATION.to_string());
            dropped.push(i);
        }
    }
    (out, dropped)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub pair_id: String,
    pub side: Side,
    pub text: String,
    pub lm_spans: Vec<[usize; 2]>,
    /// Character offset of the `Score:` marker.
    pub reward_anchor: usize,
    pub dropped_observations: Vec<usize>,
    pub cfg_fingerprint: String,
    /// Full-context target for positive records when imitation is on:
    /// everything before the `Score:` marker.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imitation_spans: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub pair_id: String,
    /// Zero-based line numbers in the record file.
    pub pos_line: usize,
    pub neg_line: usize,
}

fn to_pairs(spans: &[Range<usize>]) -> Vec<[usize; 2]> {
    spans.iter().map(|r| [r.start, r.end]).collect()
}

fn record(
    pair_id: &str,
    index: usize,
    side: Side,
    t: &Trajectory,
    cfg: &EmitConfig,
    fingerprint: &str,
) -> Result<TrainRecord, EmitError> {
    let unfiltered = |reason: String| EmitError::Unfiltered {
        pair_id: pair_id.to_string(),
        side,
        reason,
    };
    if t.step_count() > MAX_STEPS {
        return Err(unfiltered(format!("{} tool steps", t.step_count())));
    }
    t.validate().map_err(|e| unfiltered(e.to_string()))?;
    if !t.is_executed() {
        return Err(unfiltered("a step has no observation".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, &format!("{index}:{pair_id}:{side}")));
    let (t, dropped) = apply_observation_dropout(t, cfg.dropout_rate, &mut rng);
    let (text, map) = serialize_with_map(&t);
    let anchor = map.score_anchor().ok_or_else(|| unfiltered("no Score marker".into()))?;
    let imitation_spans = (cfg.positive_imitation && side == Side::Pos).then(|| vec![[0, anchor]]);
    Ok(TrainRecord {
        pair_id: pair_id.to_string(),
        side,
        text,
        lm_spans: to_pairs(&spans_for(&map, &cfg.loss_kinds())),
        reward_anchor: anchor,
        dropped_observations: dropped,
        cfg_fingerprint: fingerprint.to_string(),
        imitation_spans,
    })
}

/// Two records per pair (positive first) and a manifest entry per pair.
/// Output depends only on `(pairs, cfg)`.
pub fn emit(pairs: &[ForgedPair], cfg: &EmitConfig) -> Result<(Vec<TrainRecord>, Vec<ManifestEntry>), EmitError> {
    cfg.validate()?;
    let fingerprint = cfg.fingerprint();
    let per_pair: Vec<[TrainRecord; 2]> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let id = &p.instance.id;
            Ok([
                record(id, i, Side::Pos, &p.pos_trajectory, cfg, &fingerprint)?,
                record(id, i, Side::Neg, &p.neg_trajectory, cfg, &fingerprint)?,
            ])
        })
        .collect::<Result<_, EmitError>>()?;
    let manifest = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| ManifestEntry {
            pair_id: p.instance.id.clone(),
            pos_line: 2 * i,
            neg_line: 2 * i + 1,
        })
        .collect();
    Ok((per_pair.into_iter().flatten().collect(), manifest))
}

/// `-log(sigmoid(r_pos - r_neg))`, evaluated as `softplus(r_neg - r_pos)`.
pub fn ranking_loss(r_pos: f64, r_neg: f64) -> Result<f64, EmitError> {
    for r in [r_pos, r_neg] {
        if !r.is_finite() {
            return Err(EmitError::NonFinite(r));
        }
    }
    let x = r_neg - r_pos;
    Ok(x.max(0.0) + (-x.abs()).exp().ln_1p())
}
