//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Runs offline.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use toolrm::emit::{emit, ranking_loss, EmitConfig, DROPPED_OBSERVATION, PRESETS};
use toolrm::eval::{mc_select, pairwise_accuracy, perturbation_probe, EvalRow, PerturbSpec};
use toolrm::forge::{filter_corpus, DropReason, FilterPolicy};
use toolrm::forge::{ForgedPair, Side, ToolDomain};
use toolrm::scoring::{score_pairs, MockBackend, ScoreOptions};
use toolrm::toolbank::calculator::calculator_execute;
use toolrm::toolbank::calendar::calendar_execute;
use toolrm::toolbank::ToolResult;
use toolrm::trajectory::{parse, serialize, serialize_with_map, SegmentKind};
use toolrm::{FixtureMode, FixtureStore, ToolBank, Trajectory};

const GRAMMAR_CORPUS_SIZE: usize = 500;
const GRAMMAR_BUDGET: Duration = Duration::from_secs(5);
const CALCULATOR_CHAINS: usize = 100;
const CALENDAR_PROBES: usize = 1000;
const CALENDAR_BUDGET: Duration = Duration::from_secs(2);
const PLANTED_PER_REASON: usize = 5;
const PLANTED_CLEAN: usize = 20;
const DROPOUT_OBSERVATIONS: usize = 10_000;
const DROPOUT_RATE: f64 = 0.01;
const DROPOUT_RANGE: (usize, usize) = (50, 200);
const LN2_TOLERANCE: f64 = 1e-12;
const BOUND_TOLERANCE: f64 = 1e-12;
const RANDOM_LOSS_PAIRS: usize = 1000;
const PIPELINE_PAIRS: usize = 40;
const PIPELINE_MICRO: f64 = 0.75;
const PIPELINE_BUDGET: Duration = Duration::from_secs(30);
const PROBE_AFTER: f64 = 1.0;

/// Pre-registered (domain, pairs, correct) table for the planted world.
const PIPELINE_TABLE: [(ToolDomain, usize, usize); 8] = [
    (ToolDomain::Calendar, 5, 5),
    (ToolDomain::Calculator, 5, 5),
    (ToolDomain::Weather, 5, 4),
    (ToolDomain::Code, 5, 4),
    (ToolDomain::Translator, 5, 3),
    (ToolDomain::Wiki, 5, 3),
    (ToolDomain::Google, 5, 3),
    (ToolDomain::Multi, 5, 3),
];

const CALCULATOR_CASE_INPUT: &str =
    "<<3/5*100=60>>60, <<1/5*100=20>>20, <<1/5*60=12>>12, <<100-(2*20)=60>>60, <<60-(2*12)=34>>34, <<60+34=94>>94";
const CALCULATOR_CASE_OBSERVATION: &str =
    "The calculations are incorrect. Details: 60-(2*12) not equal to 34.";

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn grammar_round_trip() -> Outcome {
    let start = Instant::now();
    let corpus = common::corpus();
    let mut failures = 0;
    for t in &corpus {
        let (text, map) = serialize_with_map(t);
        let ok = match parse(&text) {
            Ok((back, back_map)) => back.same_content(t) && serialize(&back) == text && back_map == map,
            Err(_) => false,
        };
        failures += usize::from(!ok);
    }
    let elapsed = start.elapsed();
    let zero = corpus.iter().filter(|t| t.step_count() == 0).count();
    let multi = corpus.iter().filter(|t| t.step_count() >= 2).count();
    let worked = corpus
        .iter()
        .filter(|t| t.meta.get("case").is_some_and(|c| !c.starts_with("synthetic")))
        .count();
    outcome(
        corpus.len() == GRAMMAR_CORPUS_SIZE && failures == 0 && zero > 0 && multi > 0 && worked > 0 && elapsed < GRAMMAR_BUDGET,
        format!(
            "{}/{} identical ({zero} zero-step, {multi} multi-step, {worked} worked examples) in {elapsed:.2?}",
            corpus.len() - failures,
            corpus.len()
        ),
    )
}

fn calculator_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut disagreements = 0;
    let mut mismatched_chains = 0;
    for _ in 0..CALCULATOR_CHAINS {
        let chain = common::random_chain(&mut rng);
        let expected = common::oracle_calculator(&chain).expect("oracle input");
        mismatched_chains += usize::from(expected.contains("incorrect"));
        match calculator_execute(&chain) {
            ToolResult::Ok { observation } if observation == expected => {}
            _ => disagreements += 1,
        }
    }
    let case = calculator_execute(CALCULATOR_CASE_INPUT);
    let case_ok = case.is_ok() && case.observation_text() == CALCULATOR_CASE_OBSERVATION;
    outcome(
        disagreements == 0 && case_ok && mismatched_chains > 0 && mismatched_chains < CALCULATOR_CHAINS,
        format!(
            "{disagreements} disagreements over {CALCULATOR_CHAINS} chains ({mismatched_chains} with planted errors), worked case {}",
            if case_ok { "exact" } else { "differs" }
        ),
    )
}

fn calendar_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut agree = 0;
    for i in 0..CALENDAR_PROBES {
        let probe = common::random_probe(&mut rng, i);
        let got = calendar_execute(&common::probe_input(&probe, i / 3));
        agree += usize::from(got.is_ok() && got.observation_text() == common::oracle_calendar(&probe));
    }
    let elapsed = start.elapsed();
    outcome(
        agree == CALENDAR_PROBES && elapsed < CALENDAR_BUDGET,
        format!("{agree}/{CALENDAR_PROBES} agree in {elapsed:.2?}"),
    )
}

fn filter_exactness() -> Outcome {
    let bank = ToolBank::with_defaults();
    let corpus = common::planted_filter_corpus(PLANTED_CLEAN);
    let total = corpus.len();
    let policy = FilterPolicy {
        strict: true,
        require_domain_match: false,
    };
    let (kept, report) = filter_corpus(corpus, &bank, policy);
    let counts: Vec<usize> = DropReason::ALL
        .iter()
        .map(|r| report.dropped_by_reason.get(r).copied().unwrap_or(usize::MAX))
        .collect();
    let exact = counts.iter().all(|c| *c == PLANTED_PER_REASON);
    let conserved = kept.len() == report.kept && report.kept + report.dropped() == total && report.kept == PLANTED_CLEAN;
    outcome(
        exact && conserved,
        format!("dropped {counts:?}, kept {} of {total}", report.kept),
    )
}

/// Pairs built from the executed, at most 3-step fixture trajectories.
fn emitted_corpus() -> Vec<ForgedPair> {
    let usable: Vec<Trajectory> = common::corpus()
        .into_iter()
        .filter(|t| t.is_executed() && t.step_count() <= 3)
        .collect();
    usable
        .chunks_exact(2)
        .enumerate()
        .map(|(i, c)| {
            let inst = common::instance(&format!("fx-{i:04}"), ToolDomain::Multi, &c[0].question, &c[0].answer, &c[1].answer);
            ForgedPair {
                instance: inst,
                pos_trajectory: c[0].clone(),
                neg_trajectory: c[1].clone(),
            }
        })
        .collect()
}

fn overlaps(a: [usize; 2], b: &std::ops::Range<usize>) -> bool {
    a[0] < b.end && b.start < a[1]
}

fn mask_correctness() -> Outcome {
    let pairs = emitted_corpus();
    let mut forbidden = 0;
    let mut records = 0;
    let mut details = Vec::new();
    for name in PRESETS {
        let cfg = EmitConfig::preset(name).expect("preset");
        let (recs, _) = match emit(&pairs, &cfg) {
            Ok(r) => r,
            Err(e) => return outcome(false, format!("{name}: {e}")),
        };
        let allowed = cfg.loss_kinds();
        let mut covered = 0;
        for r in &recs {
            let Ok((_, map)) = parse(&r.text) else {
                forbidden += 1;
                continue;
            };
            if cfg.alpha == 0 && !r.lm_spans.is_empty() {
                forbidden += 1;
            }
            for seg in map.iter().filter(|s| !allowed.contains(&s.kind)) {
                forbidden += r.lm_spans.iter().filter(|sp| overlaps(**sp, &seg.range)).count();
            }
            covered += usize::from(!r.lm_spans.is_empty());
            if cfg.beta == 0 || cfg.omega == 0 || cfg.alpha == 0 {
                for kind in [SegmentKind::Observation, SegmentKind::Rationale] {
                    let banned = cfg.alpha == 0
                        || (kind == SegmentKind::Observation && cfg.beta == 0)
                        || (kind == SegmentKind::Rationale && cfg.omega == 0);
                    if banned {
                        for seg in map.of_kind(kind) {
                            forbidden += r.lm_spans.iter().filter(|sp| overlaps(**sp, &seg.range)).count();
                        }
                    }
                }
            }
        }
        records += recs.len();
        details.push(format!("{name}:{covered}"));
    }
    outcome(
        forbidden == 0 && records == 4 * 2 * pairs.len(),
        format!(
            "{forbidden} forbidden overlaps over {records} records (records with spans {})",
            details.join(" ")
        ),
    )
}

fn dropout_statistics() -> Outcome {
    let pairs: Vec<ForgedPair> = (0..DROPOUT_OBSERVATIONS / 2)
        .map(|i| {
            let inst = common::instance(&format!("d{i:05}"), ToolDomain::Calculator, "What is 6*7?", "42", "41");
            common::pair_from(
                inst,
                vec![toolrm::ToolStep::new("Compute it.", "Calculator", "6*7").with_observation("42")],
                "ok",
            )
        })
        .collect();
    let cfg = EmitConfig {
        dropout_rate: DROPOUT_RATE,
        seed: 2024,
        ..EmitConfig::themis()
    };
    let (recs, _) = emit(&pairs, &cfg).expect("emit");
    let dropped: usize = recs.iter().map(|r| r.dropped_observations.len()).sum();
    let sentinel = recs
        .iter()
        .filter(|r| !r.dropped_observations.is_empty())
        .all(|r| r.text.contains(&format!("Observation: {DROPPED_OBSERVATION}\n")));
    outcome(
        (DROPOUT_RANGE.0..=DROPOUT_RANGE.1).contains(&dropped) && sentinel,
        format!("{dropped} of {DROPOUT_OBSERVATIONS} dropped, expected within {DROPOUT_RANGE:?}"),
    )
}

fn ranking_loss_checks() -> Outcome {
    let ln2 = std::f64::consts::LN_2;
    let mut worst_ln2: f64 = 0.0;
    for r in [0.0, 1.0, -4.7, 38.81, 1e6, -1e6] {
        let l = ranking_loss(r, r).expect("finite");
        worst_ln2 = worst_ln2.max((l - ln2).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut violations = 0;
    for _ in 0..RANDOM_LOSS_PAIRS {
        let a = rng.random_range(-50.0..50.0);
        let b = rng.random_range(-50.0..50.0);
        let s = ranking_loss(a, b).expect("finite") + ranking_loss(b, a).expect("finite");
        violations += usize::from(s < 2.0 * ln2 - BOUND_TOLERANCE);
    }
    outcome(
        worst_ln2 <= LN2_TOLERANCE && violations == 0,
        format!("max |loss(r,r) - ln 2| = {worst_ln2:.1e}, {violations} bound violations over {RANDOM_LOSS_PAIRS} pairs"),
    )
}

fn multiple_choice() -> (bool, String) {
    let question = "What did CERN do in 2012?";
    let choices: Vec<String> = [
        "CERN discovered the Higgs boson in 2012.",
        "CERN ended the world in 2012.",
        "CERN created a black hole in 2012.",
        "CERN triggered a doomsday scenario in 2012.",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let scores = [6.96, -25.03, -21.80, -21.47];
    let query = "Did CERN discover the Higgs boson in 2012?";
    let store = FixtureStore::in_memory(FixtureMode::Replay);
    store.insert(
        "Google Search",
        query,
        ToolResult::ok("The existence of this mass-giving field was confirmed in 2012, when the Higgs boson particle was discovered at CERN."),
    );
    let by_answer: BTreeMap<String, f64> = choices.iter().cloned().zip(scores).collect();
    let backend = MockBackend::from_fn(move |prefix, _| {
        Some(if prefix.contains("\nObservation: ") {
            "Rationale: The search result settles the claim.".to_string()
        } else {
            format!("Thought: I need to verify the claim.\nAction: Google Search\nAction Input: {query}")
        })
    })
    .with_score_fn(move |text| parse(text).ok().and_then(|(t, _)| by_answer.get(&t.answer).copied()));
    let bank = ToolBank::with_defaults();
    match mc_select(question, &choices, &backend, &bank, &store, &ScoreOptions::default()) {
        Ok(r) => (r.index == 0 && r.scores == scores, format!("index {} from {:?}", r.index, r.scores)),
        Err(e) => (false, e.to_string()),
    }
}

fn mock_pipeline() -> Outcome {
    let start = Instant::now();
    let world = common::pipeline_world();
    let bank = common::world_bank();
    let backend = common::world_backend(world.plans.clone());
    let scored = score_pairs(&world.instances, &backend, &bank, &world.store, &ScoreOptions::default());
    let errors: Vec<&String> = scored.iter().flat_map(|p| &p.errors).collect();
    let rows: Vec<EvalRow> = scored.iter().filter_map(EvalRow::from_scored).collect();
    let (table_ok, micro) = match pairwise_accuracy(&rows) {
        Ok(report) => {
            let got: BTreeMap<ToolDomain, (usize, usize)> =
                report.per_domain.iter().map(|(d, a)| (*d, (a.n, a.correct))).collect();
            let frozen: BTreeMap<ToolDomain, (usize, usize)> =
                PIPELINE_TABLE.iter().map(|(d, n, c)| (*d, (*n, *c))).collect();
            (got == frozen && got == world.expected, report.micro)
        }
        Err(_) => (false, f64::NAN),
    };
    let (mc_ok, mc_detail) = multiple_choice();
    let elapsed = start.elapsed();
    outcome(
        world.instances.len() == PIPELINE_PAIRS
            && errors.is_empty()
            && rows.len() == PIPELINE_PAIRS
            && table_ok
            && micro == PIPELINE_MICRO
            && mc_ok
            && elapsed < PIPELINE_BUDGET,
        format!(
            "micro {micro} over {} pairs, per-domain table {}, {} errors, mc {mc_detail}, {elapsed:.2?}",
            rows.len(),
            if table_ok { "matches" } else { "differs" },
            errors.len()
        ),
    )
}

fn perturbation() -> Outcome {
    let world = common::pipeline_world();
    let bank = common::world_bank();
    let backend = common::world_backend(world.plans.clone());
    let opts = ScoreOptions::default();
    let scored = score_pairs(&world.instances, &backend, &bank, &world.store, &opts);
    // Code observations are pass counts rather than answer text, so only the
    // other domains can have their labels flipped through the observation.
    let plan: BTreeMap<String, PerturbSpec> = world
        .instances
        .iter()
        .zip(&scored)
        .filter(|(inst, _)| inst.tool_domain != ToolDomain::Code)
        .filter_map(|(inst, sp)| {
            let steps = sp.pos.as_ref()?.trajectory.step_count();
            Some((
                inst.id.clone(),
                PerturbSpec {
                    step: steps.checked_sub(1)?,
                    replacement: inst.negative.clone(),
                    expected: Side::Neg,
                },
            ))
        })
        .collect();
    let planned = plan.len();
    let report = perturbation_probe(&scored, &plan, &backend, &bank, &world.store, &opts);
    outcome(
        report.probed == planned && report.skipped == 0 && planned > 0 && report.after == PROBE_AFTER,
        format!(
            "after {} (before {}) over {} probed, {} skipped",
            report.after, report.before, report.probed, report.skipped
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("grammar round trip (500 trajectories, < 5 s)", grammar_round_trip),
        ("calculator oracle equivalence + worked case", calculator_oracle),
        ("calendar oracle (1000 probes, < 2 s)", calendar_oracle),
        ("filter exactness {5,5,5,5} + conservation", filter_exactness),
        ("loss-mask audit over four presets", mask_correctness),
        ("observation dropout count in [50, 200]", dropout_statistics),
        ("ranking_loss ln 2 and symmetric bound", ranking_loss_checks),
        ("end-to-end mock pipeline + multiple choice", mock_pipeline),
        ("perturbation probe against flipped labels", perturbation),
    ];
    println!("acceptance criteria:");
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        failed += usize::from(!o.pass);
        println!("    {name:<48} {}  ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
