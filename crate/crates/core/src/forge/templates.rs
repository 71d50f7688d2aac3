//! Template-driven generators for the Weather, Calendar and multi-tool
//! domains.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{meta, ForgeError, ForgedPair, RewardInstance, Side, ToolDomain};
use crate::toolbank::calendar::{render_days, CalendarQuery, CivilDate, WEEKDAYS};
use crate::toolbank::weather::{perturbation_candidates, WeatherQuery, ASPECTS};
use crate::toolbank::{FixtureStore, ToolBank, ToolRequest, ToolResult, CALENDAR, WEATHER};
use crate::trajectory::{ToolStep, Trajectory};
use crate::util::sub_seed;

/// Cities, dates, aspects and question/answer templates for one generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub cities: Vec<String>,
    pub dates: Vec<CivilDate>,
    pub aspects: Vec<String>,
    /// Day offsets `{n}` used by the multi-tool generator.
    #[serde(default)]
    pub offsets: Vec<i64>,
    pub question_templates: Vec<String>,
    pub answer_templates: Vec<String>,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("placeholder regex"))
}

/// Names of the `{name}` placeholders in a template.
pub fn placeholders(template: &str) -> BTreeSet<String> {
    placeholder_re()
        .captures_iter(template)
        .map(|c| c[1].to_string())
        .collect()
}

fn fill(template: &str, values: &[(&str, &str)]) -> String {
    placeholder_re()
        .replace_all(template, |c: &regex::Captures<'_>| {
            values
                .iter()
                .find(|(k, _)| *k == &c[1])
                .map(|(_, v)| v.to_string())
                .unwrap_or_else(|| c[0].to_string())
        })
        .into_owned()
}

fn check_exact(templates: &[String], required: &[&str], what: &str) -> Result<(), ForgeError> {
    if templates.is_empty() {
        return Err(ForgeError::Template(format!("no {what} templates")));
    }
    let want: BTreeSet<String> = required.iter().map(|s| s.to_string()).collect();
    for t in templates {
        let got = placeholders(t);
        if got != want {
            return Err(ForgeError::Template(format!(
                "{what} template '{t}' has placeholders {got:?}, expected {want:?}"
            )));
        }
    }
    Ok(())
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl TemplateSet {
    /// Reference weather grid and templates.
    pub fn weather_default() -> Self {
        Self {
            cities: strings(&[
                "Mexico",
                "Saint Helier",
                "Bangalore",
                "Beijing",
                "New York",
                "Sydney",
                "Aleppo",
                "Homs",
                "Sanaa",
            ]),
            dates: ["2023-06-19", "2023-06-20", "2023-06-21", "2023-06-22", "2023-06-25", "2023-06-28"]
                .iter()
                .map(|d| d.parse().expect("static date"))
                .collect(),
            aspects: strings(&ASPECTS),
            offsets: Vec::new(),
            question_templates: strings(&[
                "What is the {weather} in {city} on {date}?",
                "Could you tell me the {weather} in {city} on {date}?",
                "What was the {weather} like in {city} on {date}?",
            ]),
            answer_templates: strings(&[
                "The {weather} in {city} on {date} is {answer}.",
                "{city}'s {weather} on {date} is {answer}.",
                "On {date}, {city}'s {weather} indicates {answer}.",
            ]),
        }
    }

    /// Reference multi-tool templates (Calendar offset chained into Weather).
    pub fn multitool_default() -> Self {
        Self {
            offsets: vec![1, 2, 3, 5, 7],
            question_templates: strings(&[
                "What is the {weather} like in {city} in the {n} days after {date}?",
                "What will the {weather} be in {city} {n} days after {date}?",
            ]),
            answer_templates: strings(&[
                "The {weather} in {city} {n} days after {date} is {answer}.",
                "{n} days after {date}, {city}'s {weather} is {answer}.",
            ]),
            ..Self::weather_default()
        }
    }

    fn check_grid(&self) -> Result<(), ForgeError> {
        if self.cities.is_empty() || self.dates.is_empty() || self.aspects.is_empty() {
            return Err(ForgeError::Template("empty city, date or aspect list".into()));
        }
        for a in &self.aspects {
            if crate::toolbank::weather::canonical_aspect(a).is_none() {
                return Err(ForgeError::Template(format!("unsupported aspect '{a}'")));
            }
        }
        Ok(())
    }

    pub fn validate_weather(&self) -> Result<(), ForgeError> {
        self.check_grid()?;
        check_exact(&self.question_templates, &["weather", "city", "date"], "question")?;
        check_exact(&self.answer_templates, &["weather", "city", "date", "answer"], "answer")
    }

    pub fn validate_multitool(&self) -> Result<(), ForgeError> {
        self.check_grid()?;
        if self.offsets.is_empty() {
            return Err(ForgeError::Template("no day offsets".into()));
        }
        check_exact(&self.question_templates, &["weather", "city", "date", "n"], "question")?;
        check_exact(&self.answer_templates, &["weather", "city", "date", "n", "answer"], "answer")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplatePair {
    pub questions: Vec<String>,
    pub answers: Vec<String>,
}

/// Calendar generator inputs: one template pair per function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalendarTemplates {
    pub dates: Vec<CivilDate>,
    pub offsets: Vec<i64>,
    pub weekday: TemplatePair,
    pub diff: TemplatePair,
    pub offset: TemplatePair,
}

impl CalendarTemplates {
    pub fn reference() -> Self {
        Self {
            dates: [
                "2023-06-19", "2023-06-20", "2023-06-21", "2023-06-22", "2023-06-24", "2023-06-25",
                "2023-06-28", "2023-07-04", "2023-12-25", "2024-02-29",
            ]
            .iter()
            .map(|d| d.parse().expect("static date"))
            .collect(),
            offsets: vec![1, 2, 3, 5, 7, 10, 30],
            weekday: TemplatePair {
                questions: strings(&[
                    "What day of the week is {date}?",
                    "Which weekday does {date} fall on?",
                ]),
                answers: strings(&["{date} is a {answer}.", "{date} falls on a {answer}."]),
            },
            diff: TemplatePair {
                questions: strings(&[
                    "How many days are there between {date} and {date2}?",
                    "What is the number of days from {date} to {date2}?",
                ]),
                answers: strings(&["There are {answer} between {date} and {date2}."]),
            },
            offset: TemplatePair {
                questions: strings(&[
                    "What is the date {n} days after {date}?",
                    "Which date comes {n} days after {date}?",
                ]),
                answers: strings(&["The date {n} days after {date} is {answer}."]),
            },
        }
    }

    pub fn validate(&self) -> Result<(), ForgeError> {
        if self.dates.is_empty() || self.offsets.is_empty() {
            return Err(ForgeError::Template("empty date or offset list".into()));
        }
        for (pair, keys) in [
            (&self.weekday, &["date"][..]),
            (&self.diff, &["date", "date2"][..]),
            (&self.offset, &["date", "n"][..]),
        ] {
            check_exact(&pair.questions, keys, "calendar question")?;
            let mut with_answer = keys.to_vec();
            with_answer.push("answer");
            check_exact(&pair.answers, &with_answer, "calendar answer")?;
        }
        Ok(())
    }
}

/// Generated pairs plus the count of grid points skipped per outcome kind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenOutput {
    pub pairs: Vec<ForgedPair>,
    pub skipped: BTreeMap<String, usize>,
}

impl GenOutput {
    fn collect(results: Vec<Result<ForgedPair, String>>) -> Self {
        let mut out = GenOutput::default();
        for r in results {
            match r {
                Ok(p) => out.pairs.push(p),
                Err(reason) => *out.skipped.entry(reason).or_default() += 1,
            }
        }
        out
    }

    pub fn skipped_total(&self) -> usize {
        self.skipped.values().sum()
    }
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

fn rationale(tool: &str, observed: &str, claimed: &str, correct: bool) -> String {
    if correct {
        format!(
            "The {tool} tool returned \"{observed}\", which agrees with the answer's value \"{claimed}\". The answer is correct."
        )
    } else {
        format!(
            "The {tool} tool returned \"{observed}\", but the answer states \"{claimed}\". The answer is incorrect."
        )
    }
}

struct PairParts<'a> {
    id: String,
    domain: ToolDomain,
    source: &'a str,
    question: String,
    positive: String,
    negative: String,
    steps: Vec<ToolStep>,
    outcomes: String,
    tool_label: &'a str,
    observed: String,
    neg_value: String,
}

fn assemble(p: PairParts<'_>) -> ForgedPair {
    let side = |s: Side, answer: &str, rat: String| {
        let mut t = Trajectory::new(p.question.clone(), answer.to_string()).with_rationale(rat);
        t.steps = p.steps.clone();
        t.with_meta(meta::PAIR_ID, p.id.clone())
            .with_meta(meta::SIDE, s.as_str())
            .with_meta(meta::DOMAIN, p.domain.as_str())
            .with_meta(meta::SOURCE, p.source)
            .with_meta(meta::TOOL_OUTCOMES, p.outcomes.clone())
    };
    let pos_rat = rationale(p.tool_label, &p.observed, &p.observed, true);
    let neg_rat = rationale(p.tool_label, &p.observed, &p.neg_value, false);
    ForgedPair {
        pos_trajectory: side(Side::Pos, &p.positive, pos_rat),
        neg_trajectory: side(Side::Neg, &p.negative, neg_rat),
        instance: RewardInstance {
            id: p.id,
            question: p.question,
            positive: p.positive,
            negative: p.negative,
            tool_domain: p.domain,
            source: p.source.to_string(),
            needs_negative: false,
            extras: BTreeMap::new(),
        },
    }
}

fn call(bank: &ToolBank, store: &FixtureStore, tool: &str, input: &str) -> Result<String, String> {
    match bank.dispatch(&ToolRequest::new(tool, input), store) {
        ToolResult::Ok { observation } => Ok(observation),
        err => Err(err.kind().to_string()),
    }
}

/// One pair per (city, date, aspect). Negatives substitute a different value
/// of the same aspect, drawn uniformly with a per-pair seed.
pub fn gen_weather(
    ts: &TemplateSet,
    bank: &ToolBank,
    store: &FixtureStore,
    seed: u64,
) -> Result<GenOutput, ForgeError> {
    ts.validate_weather()?;
    let mut grid = Vec::new();
    for city in &ts.cities {
        for date in &ts.dates {
            for aspect in &ts.aspects {
                grid.push((city, *date, aspect));
            }
        }
    }
    let results = grid
        .into_par_iter()
        .enumerate()
        .map(|(i, (city, date, aspect))| {
            let id = format!("weather-{i:05}");
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &id));
            let q = WeatherQuery::new(city, date, aspect).map_err(|_| "invalid_argument".to_string())?;
            let observed = call(bank, store, WEATHER, &q.to_input())?;
            let candidates = perturbation_candidates(&q.aspect, &observed);
            if candidates.is_empty() {
                return Err("no_candidates".to_string());
            }
            let neg_value = pick(&mut rng, &candidates).clone();
            let date_s = date.to_string();
            let vars = [("weather", q.aspect.as_str()), ("city", q.city.as_str()), ("date", date_s.as_str())];
            let question = fill(pick(&mut rng, &ts.question_templates), &vars);
            let at = pick(&mut rng, &ts.answer_templates);
            let answer_with = |v: &str| {
                let mut all = vars.to_vec();
                all.push(("answer", v));
                fill(at, &all)
            };
            let thought = format!(
                "I need to look up the {} in {} on {} with the Weather tool.",
                q.aspect, q.city, date_s
            );
            Ok(assemble(PairParts {
                id: id.clone(),
                domain: ToolDomain::Weather,
                source: "heuristic:weather",
                question,
                positive: answer_with(&observed),
                negative: answer_with(&neg_value),
                steps: vec![ToolStep::new(thought, WEATHER, q.to_input()).with_observation(observed.clone())],
                outcomes: "ok".into(),
                tool_label: WEATHER,
                observed,
                neg_value,
            }))
        })
        .collect();
    Ok(GenOutput::collect(results))
}

fn calendar_negative(rng: &mut ChaCha8Rng, query: &CalendarQuery, truth: &str) -> Option<String> {
    const SHIFTS: [i64; 8] = [-7, -3, -2, -1, 1, 2, 3, 7];
    let candidates: Vec<String> = match *query {
        CalendarQuery::Weekday(_) => WEEKDAYS.iter().filter(|w| **w != truth).map(|w| w.to_string()).collect(),
        CalendarQuery::Diff(a, b) => {
            let d = (b.to_days() - a.to_days()).abs();
            SHIFTS.iter().map(|k| d + k).filter(|v| *v >= 0).map(render_days).collect()
        }
        CalendarQuery::Offset(d, n) => SHIFTS
            .iter()
            .filter_map(|k| d.add_days(n + k))
            .map(|r| r.to_string())
            .collect(),
    };
    let candidates: Vec<String> = candidates.into_iter().filter(|c| c != truth).collect();
    (!candidates.is_empty()).then(|| pick(rng, &candidates).clone())
}

/// Builds the pair for one calendar query. Returns `None` when the query
/// cannot be evaluated.
pub fn calendar_pair(ct: &CalendarTemplates, query: CalendarQuery, seed: u64, id: &str) -> Option<ForgedPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, id));
    let truth = query.evaluate().ok()?;
    let neg_value = calendar_negative(&mut rng, &query, &truth)?;
    let (pair, vars, thought): (&TemplatePair, Vec<(&str, String)>, String) = match query {
        CalendarQuery::Weekday(d) => (
            &ct.weekday,
            vec![("date", d.to_string())],
            format!("I need to use the Calendar tool to find which weekday {d} is."),
        ),
        CalendarQuery::Diff(a, b) => (
            &ct.diff,
            vec![("date", a.to_string()), ("date2", b.to_string())],
            format!("I need to use the Calendar tool to count the days between {a} and {b}."),
        ),
        CalendarQuery::Offset(d, n) => (
            &ct.offset,
            vec![("date", d.to_string()), ("n", n.to_string())],
            format!("I need to use the Calendar tool to find the date {n} days after {d}."),
        ),
    };
    let vars_ref: Vec<(&str, &str)> = vars.iter().map(|(k, v)| (*k, v.as_str())).collect();
    let question = fill(pick(&mut rng, &pair.questions), &vars_ref);
    let at = pick(&mut rng, &pair.answers);
    let answer_with = |v: &str| {
        let mut all = vars_ref.clone();
        all.push(("answer", v));
        fill(at, &all)
    };
    Some(assemble(PairParts {
        id: id.to_string(),
        domain: ToolDomain::Calendar,
        source: "heuristic:calendar",
        question,
        positive: answer_with(&truth),
        negative: answer_with(&neg_value),
        steps: vec![ToolStep::new(thought, CALENDAR, query.to_input()).with_observation(truth.clone())],
        outcomes: "ok".into(),
        tool_label: CALENDAR,
        observed: truth,
        neg_value,
    }))
}

/// Three pairs per date: weekday, diff against another listed date, and
/// offset by a listed number of days.
pub fn gen_calendar(ct: &CalendarTemplates, seed: u64) -> Result<GenOutput, ForgeError> {
    ct.validate()?;
    let results = (0..ct.dates.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let d = ct.dates[i];
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &format!("calendar-{i}")));
            let other = *pick(&mut rng, &ct.dates);
            let n = *pick(&mut rng, &ct.offsets);
            [
                ("weekday", CalendarQuery::Weekday(d)),
                ("diff", CalendarQuery::Diff(d, other)),
                ("offset", CalendarQuery::Offset(d, n)),
            ]
            .into_iter()
            .map(move |(f, q)| {
                calendar_pair(ct, q, seed, &format!("calendar-{i:04}-{f}"))
                    .ok_or_else(|| "invalid_argument".to_string())
            })
        })
        .collect();
    Ok(GenOutput::collect(results))
}

/// One pair per (city, date, n): Calendar resolves `date + n`, then Weather
/// is queried at the resolved date for a seed-drawn aspect.
pub fn gen_multitool(
    ts: &TemplateSet,
    bank: &ToolBank,
    store: &FixtureStore,
    seed: u64,
) -> Result<GenOutput, ForgeError> {
    ts.validate_multitool()?;
    let mut grid = Vec::new();
    for city in &ts.cities {
        for date in &ts.dates {
            for n in &ts.offsets {
                grid.push((city, *date, *n));
            }
        }
    }
    let results = grid
        .into_par_iter()
        .enumerate()
        .map(|(i, (city, date, n))| {
            let id = format!("multi-{i:05}");
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &id));
            let aspect = pick(&mut rng, &ts.aspects).clone();
            let cal_input = CalendarQuery::Offset(date, n).to_input();
            let resolved_s = call(bank, store, CALENDAR, &cal_input)?;
            let resolved: CivilDate = resolved_s.parse().map_err(|_| "execution_error".to_string())?;
            let q = WeatherQuery::new(city, resolved, &aspect).map_err(|_| "invalid_argument".to_string())?;
            let observed = call(bank, store, WEATHER, &q.to_input())?;
            let candidates = perturbation_candidates(&q.aspect, &observed);
            if candidates.is_empty() {
                return Err("no_candidates".to_string());
            }
            let neg_value = pick(&mut rng, &candidates).clone();
            let (date_s, n_s) = (date.to_string(), n.to_string());
            let vars = [
                ("weather", q.aspect.as_str()),
                ("city", q.city.as_str()),
                ("date", date_s.as_str()),
                ("n", n_s.as_str()),
            ];
            let question = fill(pick(&mut rng, &ts.question_templates), &vars);
            let at = pick(&mut rng, &ts.answer_templates);
            let answer_with = |v: &str| {
                let mut all = vars.to_vec();
                all.push(("answer", v));
                fill(at, &all)
            };
            let steps = vec![
                ToolStep::new(
                    format!("I need to use the Calendar tool to find the date {n} days after {date_s}."),
                    CALENDAR,
                    cal_input,
                )
                .with_observation(resolved_s.clone()),
                ToolStep::new(
                    format!(
                        "Now I need to look up the {} in {} on {} with the Weather tool.",
                        q.aspect, q.city, resolved_s
                    ),
                    WEATHER,
                    q.to_input(),
                )
                .with_observation(observed.clone()),
            ];
            Ok(assemble(PairParts {
                id: id.clone(),
                domain: ToolDomain::Multi,
                source: "heuristic:multi",
                question,
                positive: answer_with(&observed),
                negative: answer_with(&neg_value),
                steps,
                outcomes: "ok,ok".into(),
                tool_label: WEATHER,
                observed,
                neg_value,
            }))
        })
        .collect();
    Ok(GenOutput::collect(results))
}
