//! Corpus filtering and the per-domain train/test split.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{flags_of, meta, ForgedPair, ToolDomain, FLAG_INVALID_FORMAT, FLAG_IRRELEVANT_CALL, FLAG_TOO_MANY_STEPS};
use crate::toolbank::{OutcomeKind, ToolBank};
use crate::trajectory::{parse, serialize, Trajectory};
use crate::util::sub_seed;

/// Maximum number of tool steps a kept trajectory may have.
pub const MAX_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    InvalidFormat,
    TooManySteps,
    IrrelevantCall,
    ResultParseError,
}

impl DropReason {
    /// Checked in this order; a pair is charged to the first reason hit.
    pub const ALL: [DropReason; 4] = [
        DropReason::InvalidFormat,
        DropReason::TooManySteps,
        DropReason::IrrelevantCall,
        DropReason::ResultParseError,
    ];
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterPolicy {
    /// Drop pairs whose observations carry execution_error or
    /// invalid_argument outcomes.
    pub strict: bool,
    /// Also require each action to belong to the instance's tool domain.
    pub require_domain_match: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    /// Every reason is present, zero or not.
    pub dropped_by_reason: BTreeMap<DropReason, usize>,
}

impl FilterReport {
    pub fn dropped(&self) -> usize {
        self.dropped_by_reason.values().sum()
    }

    pub fn total(&self) -> usize {
        self.kept + self.dropped()
    }
}

fn violates(t: &Trajectory, pair: &ForgedPair, reason: DropReason, bank: &ToolBank, policy: FilterPolicy) -> bool {
    let flags = flags_of(t);
    match reason {
        DropReason::InvalidFormat => {
            flags.contains(&FLAG_INVALID_FORMAT)
                || t.validate().is_err()
                || !t.is_executed()
                || match parse(&serialize(t)) {
                    Ok((back, _)) => !back.same_content(t),
                    Err(_) => true,
                }
        }
        DropReason::TooManySteps => flags.contains(&FLAG_TOO_MANY_STEPS) || t.step_count() > MAX_STEPS,
        DropReason::IrrelevantCall => {
            flags.contains(&FLAG_IRRELEVANT_CALL)
                || t.steps.iter().any(|s| match bank.resolve(&s.action) {
                    None => true,
                    Some(name) => {
                        policy.require_domain_match && !pair.instance.tool_domain.admits(name)
                    }
                })
        }
        DropReason::ResultParseError => {
            policy.strict
                && t.meta.get(meta::TOOL_OUTCOMES).is_some_and(|o| {
                    o.split(',').filter_map(OutcomeKind::parse).any(|k| {
                        matches!(k, OutcomeKind::ExecutionError | OutcomeKind::InvalidArgument)
                    })
                })
        }
    }
}

/// First reason that disqualifies the pair, if any.
pub fn drop_reason(pair: &ForgedPair, bank: &ToolBank, policy: FilterPolicy) -> Option<DropReason> {
    DropReason::ALL.into_iter().find(|r| {
        violates(&pair.pos_trajectory, pair, *r, bank, policy)
            || violates(&pair.neg_trajectory, pair, *r, bank, policy)
    })
}

pub fn filter_corpus(
    pairs: Vec<ForgedPair>,
    bank: &ToolBank,
    policy: FilterPolicy,
) -> (Vec<ForgedPair>, FilterReport) {
    let mut report = FilterReport {
        kept: 0,
        dropped_by_reason: DropReason::ALL.iter().map(|r| (*r, 0)).collect(),
    };
    let mut kept = Vec::with_capacity(pairs.len());
    for pair in pairs {
        match drop_reason(&pair, bank, policy) {
            Some(r) => *report.dropped_by_reason.entry(r).or_default() += 1,
            None => {
                report.kept += 1;
                kept.push(pair);
            }
        }
    }
    (kept, report)
}

/// Splits each domain separately, holding out `round(n * test_fraction)`
/// pairs after a seeded shuffle. Output order follows the input order.
pub fn split_corpus(pairs: Vec<ForgedPair>, seed: u64) -> (Vec<ForgedPair>, Vec<ForgedPair>) {
    let mut by_domain: BTreeMap<ToolDomain, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        by_domain.entry(p.instance.tool_domain).or_default().push(i);
    }
    let mut is_test = vec![false; pairs.len()];
    for (domain, mut idx) in by_domain {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, domain.as_str()));
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * domain.test_fraction()).round() as usize;
        for i in idx.into_iter().take(n_test) {
            is_test[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (p, t) in pairs.into_iter().zip(is_test) {
        if t {
            test.push(p);
        } else {
            train.push(p);
        }
    }
    (train, test)
}
