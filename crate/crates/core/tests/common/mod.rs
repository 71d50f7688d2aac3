//! Shared helpers for the integration tests: independent oracles, the
//! fixture corpus and the planted pipeline world.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{Datelike, Duration as ChronoDuration, NaiveDate};
use num::{BigInt, BigRational, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use toolrm::forge::{meta, add_flag, ForgedPair, RewardInstance, ToolDomain, FLAG_INVALID_FORMAT};
use toolrm::scoring::MockBackend;
use toolrm::toolbank::code::CodeConfig;
use toolrm::toolbank::weather::WeatherQuery;
use toolrm::toolbank::{ToolBankConfig, ToolResult};
use toolrm::trajectory::{parse, split_stages, Marker};
use toolrm::{FixtureMode, FixtureStore, ToolBank, ToolStep, Trajectory};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn corpus() -> Vec<Trajectory> {
    toolrm::util::read_jsonl_file(fixture_path("trajectories.jsonl")).expect("fixture corpus")
}

pub fn python_runner() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../executors/python_runner.py")
}

pub fn code_config() -> CodeConfig {
    let mut executors = BTreeMap::new();
    executors.insert(
        "python".to_string(),
        vec!["python3".to_string(), python_runner().display().to_string()],
    );
    CodeConfig {
        executors,
        max_concurrent: Some(4),
        default_timeout_ms: Some(10_000),
    }
}

pub fn bank_with_python() -> ToolBank {
    ToolBank::from_config(&ToolBankConfig {
        code: code_config(),
        ..ToolBankConfig::default()
    })
    .expect("tool bank")
}

// ---------------------------------------------------------------------------
// Calculator oracle: exact rational arithmetic over a separate parser.

#[derive(Debug)]
pub enum OracleError {
    Syntax,
    DivisionByZero,
}

struct RatParser<'a> {
    b: &'a [u8],
    i: usize,
}

impl RatParser<'_> {
    fn ws(&mut self) {
        while self.i < self.b.len() && self.b[self.i] == b' ' {
            self.i += 1;
        }
    }

    fn sum(&mut self) -> Result<BigRational, OracleError> {
        let mut acc = self.product()?;
        loop {
            self.ws();
            match self.b.get(self.i) {
                Some(b'+') => {
                    self.i += 1;
                    acc += self.product()?;
                }
                Some(b'-') => {
                    self.i += 1;
                    acc -= self.product()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn product(&mut self) -> Result<BigRational, OracleError> {
        let mut acc = self.atom()?;
        loop {
            self.ws();
            match self.b.get(self.i) {
                Some(b'*') => {
                    self.i += 1;
                    acc *= self.atom()?;
                }
                Some(b'/') => {
                    self.i += 1;
                    let d = self.atom()?;
                    if d.is_zero() {
                        return Err(OracleError::DivisionByZero);
                    }
                    acc /= d;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn atom(&mut self) -> Result<BigRational, OracleError> {
        self.ws();
        match self.b.get(self.i) {
            Some(b'-') => {
                self.i += 1;
                Ok(-self.atom()?)
            }
            Some(b'(') => {
                self.i += 1;
                let v = self.sum()?;
                self.ws();
                if self.b.get(self.i) != Some(&b')') {
                    return Err(OracleError::Syntax);
                }
                self.i += 1;
                Ok(v)
            }
            Some(c) if c.is_ascii_digit() => {
                let start = self.i;
                while self.i < self.b.len() && (self.b[self.i].is_ascii_digit() || self.b[self.i] == b'.') {
                    self.i += 1;
                }
                let lit = std::str::from_utf8(&self.b[start..self.i]).map_err(|_| OracleError::Syntax)?;
                decimal(lit).ok_or(OracleError::Syntax)
            }
            _ => Err(OracleError::Syntax),
        }
    }
}

fn decimal(lit: &str) -> Option<BigRational> {
    let (int, frac) = lit.split_once('.').unwrap_or((lit, ""));
    let digits: BigInt = format!("{int}{frac}").parse().ok()?;
    let scale = num::pow(BigInt::from(10), frac.len());
    Some(BigRational::new(digits, scale))
}

/// Exact value of an ASCII arithmetic expression.
pub fn rational_eval(expr: &str) -> Result<BigRational, OracleError> {
    let mut p = RatParser { b: expr.as_bytes(), i: 0 };
    let v = p.sum()?;
    p.ws();
    if p.i != p.b.len() {
        return Err(OracleError::Syntax);
    }
    Ok(v)
}

/// Observation the calculator must produce for an annotated chain, derived
/// by exact comparison of each `<<expr=value>>` fragment.
pub fn oracle_calculator(input: &str) -> Result<String, OracleError> {
    let mut mismatches = Vec::new();
    let mut rest = input;
    while let Some(open) = rest.find("<<") {
        let after = &rest[open + 2..];
        let close = after.find(">>").ok_or(OracleError::Syntax)?;
        let body = &after[..close];
        let (e, v) = body.split_once('=').ok_or(OracleError::Syntax)?;
        let (e, v) = (e.trim(), v.trim());
        if rational_eval(e)? != rational_eval(v)? {
            mismatches.push(format!("{e} not equal to {v}"));
        }
        rest = &after[close + 2..];
    }
    Ok(if mismatches.is_empty() {
        "The calculations are correct.".to_string()
    } else {
        format!("The calculations are incorrect. Details: {}.", mismatches.join("; "))
    })
}

fn rational_text(r: &BigRational) -> String {
    if r.is_integer() {
        r.to_integer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

fn random_expr(rng: &mut ChaCha8Rng, depth: u32) -> String {
    if depth == 0 || rng.random_bool(0.3) {
        return rng.random_range(1..=12).to_string();
    }
    let op = ["+", "-", "*", "/"][rng.random_range(0..4)];
    let l = random_expr(rng, depth - 1);
    let r = random_expr(rng, depth - 1);
    let wrap = |s: String| if s.contains(' ') || s.contains(['+', '-', '*', '/']) { format!("({s})") } else { s };
    if rng.random_bool(0.5) {
        format!("{}{op}{}", wrap(l), wrap(r))
    } else {
        format!("{} {op} {}", wrap(l), wrap(r))
    }
}

/// A random annotated chain of 1..=6 fragments; roughly a third of the
/// fragments state a wrong value. Chains containing a division by zero are
/// redrawn.
pub fn random_chain(rng: &mut ChaCha8Rng) -> String {
    'draw: loop {
        let n = rng.random_range(1..=6);
        let mut parts = Vec::with_capacity(n);
        for _ in 0..n {
            let expr = random_expr(rng, 2);
            let Ok(exact) = rational_eval(&expr) else { continue 'draw };
            let stated = if rng.random_bool(0.33) {
                let k = BigRational::from_integer(BigInt::from(rng.random_range(1..=9)));
                if rng.random_bool(0.5) { &exact + k } else { &exact - k }
            } else {
                exact
            };
            let stated = rational_text(&stated);
            parts.push(format!("<<{expr}={stated}>>{stated}"));
        }
        let sep = if rng.random_bool(0.5) { ", " } else { " and then " };
        return parts.join(sep);
    }
}

/// Magnitude bound of every stated and exact value in a chain, used to check
/// that the float tolerance of the tool cannot hide a planted mismatch.
pub fn chain_max_magnitude(input: &str) -> f64 {
    let mut m: f64 = 0.0;
    let mut rest = input;
    while let Some(open) = rest.find("<<") {
        let after = &rest[open + 2..];
        let close = after.find(">>").expect("closed");
        let (e, v) = after[..close].split_once('=').expect("has =");
        for s in [e, v] {
            if let Ok(r) = rational_eval(s.trim()) {
                m = m.max(r.abs().to_f64().unwrap_or(f64::INFINITY));
            }
        }
        rest = &after[close + 2..];
    }
    m.max(1.0)
}

// ---------------------------------------------------------------------------
// Calendar oracle over chrono.

pub enum CalendarProbe {
    Weekday(NaiveDate),
    Diff(NaiveDate, NaiveDate),
    Offset(NaiveDate, i64),
}

fn random_date(rng: &mut ChaCha8Rng) -> NaiveDate {
    let base = NaiveDate::from_ymd_opt(1800, 1, 1).expect("date");
    base + ChronoDuration::days(rng.random_range(0..146_000))
}

pub fn random_probe(rng: &mut ChaCha8Rng, i: usize) -> CalendarProbe {
    match i % 3 {
        0 => CalendarProbe::Weekday(random_date(rng)),
        1 => CalendarProbe::Diff(random_date(rng), random_date(rng)),
        _ => CalendarProbe::Offset(random_date(rng), rng.random_range(-5000..=5000)),
    }
}

fn ymd(d: NaiveDate) -> String {
    d.format("%Y-%m-%d").to_string()
}

/// Action Input for the probe, in one of several accepted spellings.
pub fn probe_input(p: &CalendarProbe, variant: usize) -> String {
    match (p, variant % 2) {
        (CalendarProbe::Weekday(d), 0) => format!("weekday({})", ymd(*d)),
        (CalendarProbe::Weekday(d), _) => format!("Weekday {}", ymd(*d)),
        (CalendarProbe::Diff(a, b), 0) => format!("diff({}, {})", ymd(*a), ymd(*b)),
        (CalendarProbe::Diff(a, b), _) => format!("difference {} {}", ymd(*a), ymd(*b)),
        (CalendarProbe::Offset(d, n), 0) => format!("offset({}, {n:+})", ymd(*d)),
        (CalendarProbe::Offset(d, n), _) => format!("add {} {n} days", ymd(*d)),
    }
}

pub fn oracle_calendar(p: &CalendarProbe) -> String {
    match p {
        CalendarProbe::Weekday(d) => match d.weekday() {
            chrono::Weekday::Mon => "Monday",
            chrono::Weekday::Tue => "Tuesday",
            chrono::Weekday::Wed => "Wednesday",
            chrono::Weekday::Thu => "Thursday",
            chrono::Weekday::Fri => "Friday",
            chrono::Weekday::Sat => "Saturday",
            chrono::Weekday::Sun => "Sunday",
        }
        .to_string(),
        CalendarProbe::Diff(a, b) => {
            let n = (*b - *a).num_days().abs();
            if n == 1 {
                "1 day".to_string()
            } else {
                format!("{n} days")
            }
        }
        CalendarProbe::Offset(d, n) => ymd(*d + ChronoDuration::days(*n)),
    }
}

// ---------------------------------------------------------------------------
// Pairs.

pub fn instance(id: &str, domain: ToolDomain, q: &str, pos: &str, neg: &str) -> RewardInstance {
    RewardInstance {
        id: id.to_string(),
        question: q.to_string(),
        positive: pos.to_string(),
        negative: neg.to_string(),
        tool_domain: domain,
        source: "test".to_string(),
        needs_negative: false,
        extras: BTreeMap::new(),
    }
}

pub fn pair_from(inst: RewardInstance, steps: Vec<ToolStep>, outcomes: &str) -> ForgedPair {
    let side = |answer: &str, rationale: &str| {
        let mut t = Trajectory::new(inst.question.clone(), answer).with_rationale(rationale);
        t.steps = steps.clone();
        t.with_meta(meta::PAIR_ID, inst.id.clone())
            .with_meta(meta::TOOL_OUTCOMES, outcomes)
    };
    ForgedPair {
        pos_trajectory: side(&inst.positive, "The tool output supports the answer."),
        neg_trajectory: side(&inst.negative, "The tool output contradicts the answer."),
        instance: inst,
    }
}

fn clean_pair(i: usize) -> ForgedPair {
    let (a, b) = (i + 2, i + 3);
    let inst = instance(
        &format!("plant-{i:03}"),
        ToolDomain::Calculator,
        &format!("What is {a}*{b}?"),
        &format!("{a}*{b} = {}.", a * b),
        &format!("{a}*{b} = {}.", a * b + 1),
    );
    let step = ToolStep::new("I should compute the product.", "Calculator", format!("{a}*{b}"))
        .with_observation((a * b).to_string());
    pair_from(inst, vec![step], "ok")
}

/// 5 violations of each drop reason plus `clean` clean pairs, interleaved.
/// Every planted pair trips exactly its own reason and none before it.
pub fn planted_filter_corpus(clean: usize) -> Vec<ForgedPair> {
    let mut out = Vec::new();
    for i in 0..5 {
        // invalid_format: alternately a flag and an unexecuted middle step.
        let mut p = clean_pair(100 + i);
        if i % 2 == 0 {
            add_flag(&mut p.neg_trajectory, FLAG_INVALID_FORMAT);
        } else {
            p.pos_trajectory.steps[0].observation = None;
            p.pos_trajectory.steps.push(ToolStep::new("Again.", "Calculator", "1+1").with_observation("2"));
        }
        out.push(p);

        // too_many_steps: four executed steps.
        let mut p = clean_pair(200 + i);
        for side in [&mut p.pos_trajectory, &mut p.neg_trajectory] {
            let s = side.steps[0].clone();
            side.steps = vec![s; 4];
            side.meta.insert(meta::TOOL_OUTCOMES.into(), "ok,ok,ok,ok".into());
        }
        out.push(p);

        // irrelevant_call: a tool the bank does not know.
        let mut p = clean_pair(300 + i);
        p.neg_trajectory.steps[0].action = "Horoscope".into();
        out.push(p);

        // result_parse_error: a failed execution recorded in the outcomes.
        let mut p = clean_pair(400 + i);
        p.pos_trajectory.meta.insert(meta::TOOL_OUTCOMES.into(), "execution_error".into());
        out.push(p);
    }
    for i in 0..clean {
        out.push(clean_pair(i));
    }
    out
}

// ---------------------------------------------------------------------------
// Pipeline world: 40 instances, a replay store, and a judge that rewards an
// answer by how well it agrees with the observations of its trajectory.

/// How the scripted model calls tools for one question.
#[derive(Clone)]
pub enum Plan {
    Calls(Vec<(String, String)>),
    /// Runs the answer's code against these tests.
    Code(Vec<String>),
}

pub struct World {
    pub instances: Vec<RewardInstance>,
    pub plans: HashMap<String, Plan>,
    pub store: FixtureStore,
    /// Pre-registered per-domain correct counts.
    pub expected: BTreeMap<ToolDomain, (usize, usize)>,
}

fn tokens(s: &str) -> std::collections::BTreeSet<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Reward of a full trajectory text under the observation-tracking judge.
/// Code reports give the pass fraction; otherwise the reward is the number of
/// distinct answer tokens that also occur in the observations.
pub fn judge(text: &str) -> Option<f64> {
    let (t, _) = parse(text).ok()?;
    let obs: Vec<&str> = t.steps.iter().filter_map(|s| s.observation.as_deref()).collect();
    if let Some(last) = obs.last() {
        if let Some(rest) = last.strip_prefix("Passed ") {
            let (k, rest) = rest.split_once('/')?;
            let n: f64 = rest.split_whitespace().next()?.parse().ok()?;
            let k: f64 = k.parse().ok()?;
            return Some(k / n);
        }
    }
    let seen = tokens(&obs.join(" "));
    Some(tokens(&t.answer).iter().filter(|tok| seen.contains(*tok)).count() as f64)
}

fn stage_payload(prefix: &str, marker: Marker) -> Option<String> {
    split_stages(prefix)
        .ok()?
        .into_iter()
        .find(|s| s.marker == marker)
        .map(|s| s.payload)
}

/// Continuation model for the world: emits the planned tool blocks in
/// order, then a rationale.
pub fn world_backend(plans: HashMap<String, Plan>) -> MockBackend {
    MockBackend::from_fn(move |prefix, stop| {
        if stop == ["Score:"] {
            return Some("The evidence has been reviewed.".to_string());
        }
        let question = stage_payload(prefix, Marker::Question)?;
        let done = split_stages(prefix)
            .ok()?
            .iter()
            .filter(|s| s.marker == Marker::Observation)
            .count();
        let calls: Vec<(String, String)> = match plans.get(&question)? {
            Plan::Calls(c) => c.clone(),
            Plan::Code(tests) => {
                let answer = stage_payload(prefix, Marker::Answer)?;
                let input = serde_json::json!({"lang_tag": "python", "snippet": answer, "tests": tests});
                vec![("Code".to_string(), input.to_string())]
            }
        };
        Some(match calls.get(done) {
            Some((tool, input)) => format!(
                "Thought: I need to check the answer with the {tool} tool.\nAction: {tool}\nAction Input: {input}\n"
            ),
            None => "Rationale: The observations have been compared with the answer.".to_string(),
        })
    })
    .with_score_fn(judge)
}

/// Stores `observation` under the key the tool itself derives from `input`.
pub fn seed_fixture(store: &FixtureStore, tool: &str, input: &str, observation: &str) {
    let bank = ToolBank::with_defaults();
    let key = bank
        .get(tool)
        .expect("known tool")
        .fixture_key(input)
        .unwrap_or_else(|_| panic!("valid {tool} input"));
    store.insert(tool, &key, ToolResult::ok(observation));
}

pub fn weather_fixture(store: &FixtureStore, city: &str, date: &str, aspect: &str, value: &str) -> String {
    let q = WeatherQuery::new(city, date.parse().expect("date"), aspect).expect("query");
    seed_fixture(store, "Weather", &q.to_input(), value);
    q.to_input()
}

/// Builds the 40-pair world. Per domain, the listed number of pairs is
/// planted correct; the rest are reversed or tied.
pub fn pipeline_world() -> World {
    let store = FixtureStore::in_memory(FixtureMode::Replay);
    let mut instances = Vec::new();
    let mut plans = HashMap::new();
    let mut expected: BTreeMap<ToolDomain, (usize, usize)> = BTreeMap::new();
    let mut add = |domain: ToolDomain, q: String, pos: String, neg: String, plan: Plan, correct: bool| {
        let id = format!("{}-{:02}", domain.as_str().to_lowercase(), instances.len());
        plans.insert(q.clone(), plan);
        instances.push(instance(&id, domain, &q, &pos, &neg));
        let e = expected.entry(domain).or_default();
        e.0 += 1;
        e.1 += usize::from(correct);
    };

    // Calculator: 5/5.
    for i in 0..5 {
        let (a, b) = (13 + i, 7 + 2 * i);
        let q = format!("A crate holds {a} rows of {b} bottles. How many bottles are there?");
        let plan = Plan::Calls(vec![("Calculator".into(), format!("{a}*{b}"))]);
        add(ToolDomain::Calculator, q, format!("There are {} bottles.", a * b), format!("There are {} bottles.", a * b + 10), plan, true);
    }

    // Calendar: 5/5.
    for i in 0..5 {
        let d = NaiveDate::from_ymd_opt(2023, 6, 10 + i).expect("date");
        let wd = oracle_calendar(&CalendarProbe::Weekday(d));
        let other = oracle_calendar(&CalendarProbe::Weekday(d + ChronoDuration::days(3)));
        let q = format!("What day of the week is {}?", ymd(d));
        let plan = Plan::Calls(vec![("Calendar".into(), format!("weekday({})", ymd(d)))]);
        add(ToolDomain::Calendar, q, format!("It is a {wd}."), format!("It is a {other}."), plan, true);
    }

    // Weather: 4/5; the last positive is mislabeled.
    let conditions = ["Sunny", "Cloudy", "Overcast", "Light rain", "Partly cloudy"];
    for (i, city) in ["New York", "London", "Tokyo", "Paris", "Sydney"].iter().enumerate() {
        let date = format!("2023-06-{:02}", 20 + i);
        let observed = conditions[i];
        let input = weather_fixture(&store, city, &date, "overall weather", observed);
        let q = format!("What is the overall weather in {city} on {date}?");
        let wrong = if observed == "Sunny" { "Thunderstorm" } else { "Snow" };
        let correct = i < 4;
        let (pos, neg) = if correct { (observed, wrong) } else { (wrong, observed) };
        let plan = Plan::Calls(vec![("Weather".into(), input)]);
        add(
            ToolDomain::Weather,
            q,
            format!("The overall weather in {city} on {date} is {pos}."),
            format!("The overall weather in {city} on {date} is {neg}."),
            plan,
            correct,
        );
    }

    // Code: 4/5; the last positive fails its tests.
    for i in 0..5 {
        let k = i + 2;
        let q = format!("Write a function times_{k}(x) that multiplies x by {k}.");
        let good = format!("def times_{k}(x):\n    return x * {k}");
        let bad = format!("def times_{k}(x):\n    return x + {k}");
        let tests = vec![format!("assert times_{k}(3) == {}", 3 * k), format!("assert times_{k}(0) == 0")];
        let correct = i < 4;
        let (pos, neg) = if correct { (good, bad) } else { (bad, good) };
        add(ToolDomain::Code, q, pos, neg, Plan::Code(tests), correct);
    }

    // Translator: 3/5; one reversed, one tied.
    let phrases = [
        ("de", "Guten Morgen", "Good morning", "Good night"),
        ("fr", "Merci beaucoup", "Thank you very much", "See you soon"),
        ("es", "Buenas tardes", "Good afternoon", "Good luck"),
        ("it", "Buon appetito", "Enjoy your meal", "Happy birthday"),
        ("ja", "ありがとう", "Thank you", "Excuse me"),
    ];
    for (i, (src, text, good, bad)) in phrases.iter().enumerate() {
        let input = format!("{src}->en: {text}");
        seed_fixture(&store, "Translator", &input, good);
        let q = format!("What does \"{text}\" mean in English?");
        let (pos, neg, correct) = match i {
            3 => (bad.to_string(), good.to_string(), false),
            4 => ("Something polite".to_string(), "Something rude".to_string(), false),
            _ => (good.to_string(), bad.to_string(), true),
        };
        let plan = Plan::Calls(vec![("Translator".into(), input)]);
        add(ToolDomain::Translator, q, format!("It means \"{pos}\"."), format!("It means \"{neg}\"."), plan, correct);
    }

    // Wiki and Google search: 3/5 each.
    let facts = [
        ("Mount Everest", "Mount Everest | Mount Everest is Earth's highest mountain, with an elevation of 8849 metres.", "8849", "7500"),
        ("Danube", "Danube | The Danube flows through ten countries and empties into the Black Sea.", "Black", "Baltic"),
        ("Ada Lovelace", "Ada Lovelace | Ada Lovelace wrote the first published algorithm for the Analytical Engine.", "Analytical", "Difference"),
        ("Kilimanjaro", "Kilimanjaro | Kilimanjaro is a dormant volcano located in Tanzania.", "Tanzania", "Kenya"),
        ("Sahara", "Sahara | The Sahara is the largest hot desert in the world.", "hot", "cold"),
    ];
    for (domain, tool) in [(ToolDomain::Wiki, "WikiSearch"), (ToolDomain::Google, "Google Search")] {
        for (i, (topic, obs, good, bad)) in facts.iter().enumerate() {
            let query = format!("{topic} facts ({tool})");
            seed_fixture(&store, tool, &query, obs);
            let q = format!("Tell me one fact about {topic}, as found by {tool}.");
            let (pos, neg, correct) = match i {
                3 => (bad.to_string(), good.to_string(), false),
                4 => ("tepid".to_string(), "lukewarm".to_string(), false),
                _ => (good.to_string(), bad.to_string(), true),
            };
            let plan = Plan::Calls(vec![(tool.to_string(), query)]);
            add(domain, q, format!("The key word is {pos}."), format!("The key word is {neg}."), plan, correct);
        }
    }

    // Multi: Calendar then Weather; 3/5.
    for i in 0..5i64 {
        let start = NaiveDate::from_ymd_opt(2023, 6, 1).expect("date") + ChronoDuration::days(i);
        let n = 2 + i;
        let resolved = ymd(start + ChronoDuration::days(n));
        let city = ["Berlin", "Madrid", "Rome", "Vienna", "Oslo"][i as usize];
        let observed = ["Sunny", "Clear", "Patchy rain", "Mist", "Overcast"][i as usize];
        let winput = weather_fixture(&store, city, &resolved, "overall weather", observed);
        let q = format!("What will the overall weather be in {city} {n} days after {}?", ymd(start));
        let correct = i < 3;
        let (pos, neg) = match i {
            3 => ("Hail".to_string(), observed.to_string()),
            4 => ("Hail".to_string(), "Sleet".to_string()),
            _ => (observed.to_string(), "Hail".to_string()),
        };
        let plan = Plan::Calls(vec![
            ("Calendar".into(), format!("offset({}, {n:+})", ymd(start))),
            ("Weather".into(), winput),
        ]);
        add(
            ToolDomain::Multi,
            q,
            format!("The overall weather in {city} on {resolved} will be {pos}."),
            format!("The overall weather in {city} on {resolved} will be {neg}."),
            plan,
            correct,
        );
    }

    World {
        instances,
        plans,
        store,
        expected,
    }
}

pub fn world_bank() -> Arc<ToolBank> {
    Arc::new(bank_with_python())
}
