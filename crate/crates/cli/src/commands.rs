//! Command implementations. Each returns a one-line JSON summary for
//! stdout; artifacts are staged and committed only on success.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use serde::Deserialize;
use serde_json::{json, Value};

use toolrm::emit::{emit, EmitConfig, PRESETS};
use toolrm::eval::{mc_select, pairwise_accuracy, perturbation_probe, reward_trace, EvalRow, PerturbSpec, ToolStats};
use toolrm::forge::{
    adapt_source, filter_corpus, forge_with_agents, gen_calendar, gen_multitool, gen_weather, read_corpus,
    split_corpus, AgentClient, AgentRole, AgentSet, CalendarTemplates, FilterPolicy, ForgedPair, GenOutput,
    HttpChat, RewardInstance, Source, TemplateSet,
};
use toolrm::scoring::{score_pairs, HttpBackend, ScoredPair};
use toolrm::toolbank::{FixtureMode, FixtureStore, ToolBank, ToolRequest};

use crate::config::RunConfig;
use crate::output::Outputs;
use crate::{Cli, Command, ForgeCommand, ToolsCommand, UsageError};

/// Per-invocation context shared by the commands.
pub struct Ctx {
    pub cfg: RunConfig,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub dry_run: bool,
    pub mode: FixtureMode,
}

impl Ctx {
    fn corpus_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| self.cfg.paths.corpus_dir.clone())
    }

    fn reports_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| self.cfg.paths.reports_dir.clone())
    }

    pub fn bank(&self) -> anyhow::Result<ToolBank> {
        ToolBank::from_config(&self.cfg.tools).map_err(|e| UsageError::new(e.to_string()).into())
    }

    /// Fixture store for the selected mode. Replay and record use the
    /// configured fixtures directory; live mode keeps nothing. Replay
    /// without a fixtures directory replays nothing, so only local tools
    /// succeed.
    pub fn store(&self) -> anyhow::Result<FixtureStore> {
        match self.mode {
            FixtureMode::Passthrough => Ok(FixtureStore::in_memory(FixtureMode::Passthrough)),
            FixtureMode::Replay if !self.cfg.paths.fixtures_dir.exists() => {
                Ok(FixtureStore::in_memory(FixtureMode::Replay))
            }
            mode => FixtureStore::open(&self.cfg.paths.fixtures_dir, mode)
                .map_err(|e| UsageError::new(format!("fixtures: {e}")).into()),
        }
    }

    /// Generators over network tools need recorded fixtures in replay mode.
    fn check_store(&self) -> anyhow::Result<()> {
        if self.mode == FixtureMode::Replay && !self.cfg.paths.fixtures_dir.is_dir() {
            return Err(UsageError::new(format!(
                "fixtures directory {} does not exist",
                self.cfg.paths.fixtures_dir.display()
            ))
            .into());
        }
        Ok(())
    }

    pub fn backend(&self) -> anyhow::Result<HttpBackend> {
        let url = self
            .cfg
            .backend
            .url
            .clone()
            .ok_or_else(|| UsageError::new("no backend URL: set backend.url or BACKEND_URL"))?;
        let b = &self.cfg.backend;
        Ok(HttpBackend::new(url, Duration::from_millis(b.timeout_ms), b.in_flight)?)
    }

    fn mode_name(&self) -> &'static str {
        match self.mode {
            FixtureMode::Replay => "replay",
            FixtureMode::Record => "record",
            FixtureMode::Passthrough => "live",
        }
    }

    /// Prints the plan in dry-run mode, or commits the outputs.
    fn finish(&self, outputs: Outputs, mut summary: Value) -> anyhow::Result<Value> {
        summary["outputs"] = json!(outputs.paths());
        if self.dry_run {
            summary["dry_run"] = json!(true);
        } else {
            outputs.commit()?;
        }
        Ok(summary)
    }
}

fn require_file(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        return Err(UsageError::new(format!("input {} does not exist", path.display())).into());
    }
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<Value> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(n) = cfg.workers {
        // Fails only if a global pool exists already, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let ctx = Ctx {
        seed: cli.seed.unwrap_or(cfg.seed),
        cfg,
        out: cli.out,
        dry_run: cli.dry_run,
        mode: cli.mode.mode(),
    };
    match cli.command {
        Command::Forge(f) => forge(&ctx, f),
        Command::Filter {
            input,
            strict_filter,
            split,
        } => filter(&ctx, &input, strict_filter, split),
        Command::Emit { input, preset } => emit_cmd(&ctx, &input, preset.as_deref()),
        Command::Score { input } => score(&ctx, &input),
        Command::Eval { inputs, mc, perturb } => eval(
            &ctx,
            EvalArgs {
                inputs: &inputs,
                mc: mc.as_deref(),
                perturb: perturb.as_deref(),
            },
        ),
        Command::Tools(t) => tools(&ctx, t),
        Command::Config => Ok(Value::String(ctx.cfg.redacted().to_toml()?)),
        Command::Serve { addr } => crate::serve::serve(&ctx, addr),
    }
}

fn gen_summary(name: &str, out: &GenOutput) -> Value {
    json!({"command": "forge", "generator": name, "pairs": out.pairs.len(), "skipped": out.skipped})
}

fn forge(ctx: &Ctx, cmd: ForgeCommand) -> anyhow::Result<Value> {
    let templates = &ctx.cfg.templates;
    let (name, gen): (&str, GenOutput) = match cmd {
        ForgeCommand::Calendar => {
            let ct = templates.calendar.clone().unwrap_or_else(CalendarTemplates::reference);
            ct.validate().map_err(|e| UsageError::new(e.to_string()))?;
            if ctx.dry_run {
                return plan(ctx, "calendar", json!({"grid": 3 * ct.dates.len()}));
            }
            ("calendar", gen_calendar(&ct, ctx.seed)?)
        }
        ForgeCommand::Weather => {
            let ts = templates.weather.clone().unwrap_or_else(TemplateSet::weather_default);
            ts.validate_weather().map_err(|e| UsageError::new(e.to_string()))?;
            ctx.check_store()?;
            if ctx.dry_run {
                let grid = ts.cities.len() * ts.dates.len() * ts.aspects.len();
                return plan(ctx, "weather", json!({"grid": grid}));
            }
            ("weather", gen_weather(&ts, &ctx.bank()?, &ctx.store()?, ctx.seed)?)
        }
        ForgeCommand::Multitool => {
            let ts = templates.multitool.clone().unwrap_or_else(TemplateSet::multitool_default);
            ts.validate_multitool().map_err(|e| UsageError::new(e.to_string()))?;
            ctx.check_store()?;
            if ctx.dry_run {
                let grid = ts.cities.len() * ts.dates.len() * ts.offsets.len();
                return plan(ctx, "multitool", json!({"grid": grid}));
            }
            ("multitool", gen_multitool(&ts, &ctx.bank()?, &ctx.store()?, ctx.seed)?)
        }
        ForgeCommand::Agents { source, input } => return forge_agents(ctx, &source, &input),
    };
    let mut outputs = Outputs::default();
    outputs.jsonl(ctx.corpus_dir().join(format!("{name}.jsonl")), &gen.pairs)?;
    ctx.finish(outputs, gen_summary(name, &gen))
}

fn plan(ctx: &Ctx, generator: &str, extra: Value) -> anyhow::Result<Value> {
    let mut v = json!({
        "command": "forge",
        "generator": generator,
        "mode": ctx.mode_name(),
        "seed": ctx.seed,
        "dry_run": true,
        "outputs": [ctx.corpus_dir().join(format!("{generator}.jsonl")).display().to_string()],
    });
    if let (Some(m), Some(e)) = (v.as_object_mut(), extra.as_object()) {
        m.extend(e.clone());
    }
    Ok(v)
}

fn forge_agents(ctx: &Ctx, source: &str, input: &Path) -> anyhow::Result<Value> {
    let source: Source = source.parse().map_err(UsageError::new)?;
    require_file(input)?;
    let adapted = adapt_source(source, BufReader::new(File::open(input)?));
    ctx.check_store()?;
    let agents_cfg = &ctx.cfg.agents;
    let endpoint = agents_cfg
        .endpoint
        .clone()
        .ok_or_else(|| UsageError::new("no agent endpoint: set agents.endpoint"))?;
    let out_path = ctx.corpus_dir().join(format!("{source}.jsonl"));
    if ctx.dry_run {
        return Ok(json!({
            "command": "forge",
            "generator": "agents",
            "source": source.as_str(),
            "instances": adapted.instances.len(),
            "skipped_lines": adapted.skipped,
            "dry_run": true,
            "outputs": [out_path.display().to_string()],
        }));
    }
    let transport = Arc::new(HttpChat::new(
        endpoint,
        agents_cfg.api_key.clone(),
        Duration::from_millis(agents_cfg.timeout_ms),
    )?);
    let client = |role| AgentClient::new(role, transport.clone()).with_max_in_flight(agents_cfg.max_in_flight);
    let agents = AgentSet {
        negative: client(AgentRole::NegativeGeneration),
        tool: client(AgentRole::ToolAgent),
        rationale: client(AgentRole::RationaleAgent),
    };
    let (pairs, dropped) = forge_with_agents(&adapted.instances, &agents, &ctx.bank()?, &ctx.store()?);
    let mut outputs = Outputs::default();
    outputs.jsonl(out_path, &pairs)?;
    let summary = json!({
        "command": "forge",
        "generator": "agents",
        "source": source.as_str(),
        "pairs": pairs.len(),
        "dropped": dropped.iter().map(|e| e.to_string()).collect::<Vec<_>>(),
        "skipped_lines": adapted.skipped,
    });
    ctx.finish(outputs, summary)
}

fn load_corpus(path: &Path) -> anyhow::Result<Vec<ForgedPair>> {
    require_file(path)?;
    read_corpus(path).with_context(|| format!("reading corpus {}", path.display()))
}

fn filter(ctx: &Ctx, input: &Path, strict: bool, split: bool) -> anyhow::Result<Value> {
    let pairs = load_corpus(input)?;
    let policy = FilterPolicy {
        strict: strict || ctx.cfg.filter.strict,
        ..ctx.cfg.filter
    };
    let (kept, report) = filter_corpus(pairs, &ctx.bank()?, policy);
    let dir = ctx.corpus_dir();
    let mut outputs = Outputs::default();
    let mut summary = json!({"command": "filter", "policy": policy, "report": report});
    if split {
        let (train, test) = split_corpus(kept.clone(), ctx.seed);
        summary["train"] = json!(train.len());
        summary["test"] = json!(test.len());
        outputs.jsonl(dir.join("train.jsonl"), &train)?;
        outputs.jsonl(dir.join("test.jsonl"), &test)?;
    }
    outputs.jsonl(dir.join("kept.jsonl"), &kept)?;
    outputs.json(dir.join("filter_report.json"), &report)?;
    ctx.finish(outputs, summary)
}

fn emit_cmd(ctx: &Ctx, input: &Path, preset: Option<&str>) -> anyhow::Result<Value> {
    let mut cfg: EmitConfig = ctx.cfg.emit;
    if let Some(name) = preset {
        let p = EmitConfig::preset(name).ok_or_else(|| {
            UsageError::new(format!("unknown preset '{name}'; expected one of {}", PRESETS.join(", ")))
        })?;
        cfg.alpha = p.alpha;
        cfg.beta = p.beta;
        cfg.omega = p.omega;
    }
    cfg.seed = ctx.seed;
    let pairs = load_corpus(input)?;
    let (records, manifest) = emit(&pairs, &cfg)?;
    let dir = ctx.corpus_dir();
    let mut outputs = Outputs::default();
    outputs.jsonl(dir.join("records.jsonl"), &records)?;
    outputs.jsonl(dir.join("manifest.jsonl"), &manifest)?;
    let fingerprint = cfg.fingerprint();
    outputs.json(dir.join("emit_config.json"), &json!({"config": cfg, "cfg_fingerprint": fingerprint}))?;
    let summary = json!({
        "command": "emit",
        "preset": preset,
        "config": cfg,
        "cfg_fingerprint": fingerprint,
        "pairs": manifest.len(),
        "records": records.len(),
    });
    ctx.finish(outputs, summary)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScoreInput {
    Pair(Box<ForgedPair>),
    Instance(RewardInstance),
}

fn score(ctx: &Ctx, input: &Path) -> anyhow::Result<Value> {
    require_file(input)?;
    let lines: Vec<ScoreInput> =
        toolrm::util::read_jsonl_file(input).with_context(|| format!("reading {}", input.display()))?;
    let instances: Vec<RewardInstance> = lines
        .into_iter()
        .map(|l| match l {
            ScoreInput::Pair(p) => p.instance,
            ScoreInput::Instance(i) => i,
        })
        .collect();
    if let Some(bad) = instances.iter().find(|i| !i.is_complete()) {
        return Err(UsageError::new(format!("instance {} has no usable negative", bad.id)).into());
    }
    let backend = ctx.backend()?;
    let dir = ctx.reports_dir();
    if ctx.dry_run {
        return Ok(json!({
            "command": "score",
            "instances": instances.len(),
            "mode": ctx.mode_name(),
            "dry_run": true,
            "outputs": [dir.join("scored.jsonl").display().to_string(), dir.join("rows.jsonl").display().to_string()],
        }));
    }
    let scored = score_pairs(&instances, &backend, &ctx.bank()?, &ctx.store()?, &ctx.cfg.score);
    let rows: Vec<EvalRow> = scored.iter().filter_map(EvalRow::from_scored).collect();
    if rows.is_empty() && !scored.is_empty() {
        let first = scored.iter().flat_map(|p| &p.errors).next().cloned().unwrap_or_default();
        bail!("no pair could be scored; first error: {first}");
    }
    let mut outputs = Outputs::default();
    outputs.jsonl(dir.join("scored.jsonl"), &scored)?;
    outputs.jsonl(dir.join("rows.jsonl"), &rows)?;
    let summary = json!({
        "command": "score",
        "instances": instances.len(),
        "scored": rows.len(),
        "unscored": scored.len() - rows.len(),
    });
    ctx.finish(outputs, summary)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum EvalInput {
    Pair(Box<ScoredPair>),
    Row(EvalRow),
}

/// One multiple-choice item; `answer` is the index of the correct choice
/// when known.
#[derive(Deserialize)]
struct McItem {
    #[serde(default)]
    id: Option<String>,
    question: String,
    choices: Vec<String>,
    #[serde(default)]
    answer: Option<usize>,
}

#[derive(Deserialize)]
struct PerturbLine {
    pair_id: String,
    #[serde(flatten)]
    spec: PerturbSpec,
}

pub struct EvalArgs<'a> {
    pub inputs: &'a [String],
    pub mc: Option<&'a Path>,
    pub perturb: Option<&'a Path>,
}

fn eval(ctx: &Ctx, args: EvalArgs<'_>) -> anyhow::Result<Value> {
    let mut series: Vec<(String, Vec<EvalRow>)> = Vec::new();
    let mut stats = ToolStats::default();
    let mut last_pairs: Vec<ScoredPair> = Vec::new();
    for (i, spec) in args.inputs.iter().enumerate() {
        let (label, path) = match spec.split_once('=') {
            Some((l, p)) if !l.is_empty() => (l.to_string(), PathBuf::from(p)),
            _ => (i.to_string(), PathBuf::from(spec)),
        };
        require_file(&path)?;
        let lines: Vec<EvalInput> =
            toolrm::util::read_jsonl_file(&path).with_context(|| format!("reading {}", path.display()))?;
        let mut rows = Vec::new();
        let mut trajectories = Vec::new();
        last_pairs.clear();
        for line in lines {
            match line {
                EvalInput::Pair(p) => {
                    rows.extend(EvalRow::from_scored(&p));
                    trajectories.extend(p.pos.clone());
                    trajectories.extend(p.neg.clone());
                    last_pairs.push(*p);
                }
                EvalInput::Row(r) => rows.push(r),
            }
        }
        stats.record(&trajectories, &label);
        series.push((label, rows));
    }
    let mc_items: Option<Vec<McItem>> = match args.mc {
        Some(path) => {
            require_file(path)?;
            Some(toolrm::util::read_jsonl_file(path).with_context(|| format!("reading {}", path.display()))?)
        }
        None => None,
    };
    let plan: Option<BTreeMap<String, PerturbSpec>> = match args.perturb {
        Some(path) => {
            require_file(path)?;
            let lines: Vec<PerturbLine> =
                toolrm::util::read_jsonl_file(path).with_context(|| format!("reading {}", path.display()))?;
            if last_pairs.is_empty() {
                return Err(UsageError::new("--perturb needs scored pairs as the last --input").into());
            }
            Some(lines.into_iter().map(|l| (l.pair_id, l.spec)).collect())
        }
        None => None,
    };
    let backend = if mc_items.is_some() || plan.is_some() {
        Some(ctx.backend()?)
    } else {
        None
    };

    let (label, last) = series.last().expect("clap requires one input");
    let report = pairwise_accuracy(last).with_context(|| format!("evaluating {label}"))?;
    let trace = reward_trace(&series);
    let dir = ctx.reports_dir();
    let mut outputs = Outputs::default();
    outputs.json(dir.join("accuracy.json"), &report.to_json())?;
    outputs.json(dir.join("accuracy_detail.json"), &report)?;
    outputs.json(dir.join("tool_stats.json"), &stats)?;
    outputs.text(dir.join("reward_trace.tsv"), toolrm::eval::trace_tsv(&trace));
    let mut summary = json!({
        "command": "eval",
        "epoch": label,
        "n": report.n,
        "micro": report.micro,
        "accuracy": report.to_json(),
        "tool_calls": stats.total_calls(),
    });
    if ctx.dry_run {
        if let Some(items) = &mc_items {
            outputs.text(dir.join("mc_results.json"), String::new());
            summary["mc_items"] = json!(items.len());
        }
        if let Some(plan) = &plan {
            outputs.text(dir.join("perturbation.json"), String::new());
            summary["perturb_pairs"] = json!(plan.len());
        }
        return ctx.finish(outputs, summary);
    }
    let (bank, store) = (ctx.bank()?, ctx.store()?);
    if let (Some(items), Some(backend)) = (&mc_items, &backend) {
        let (results, mc_summary) = run_mc(items, backend, &bank, &store, &ctx.cfg.score);
        outputs.json(dir.join("mc_results.json"), &json!({"summary": mc_summary, "items": results}))?;
        summary["mc"] = mc_summary;
    }
    if let (Some(plan), Some(backend)) = (&plan, &backend) {
        let probe = perturbation_probe(&last_pairs, plan, backend, &bank, &store, &ctx.cfg.score);
        outputs.json(dir.join("perturbation.json"), &probe)?;
        summary["perturbation"] = json!(probe);
    }
    ctx.finish(outputs, summary)
}

/// Scores every item; unscorable items are reported with their error and
/// left out of the accuracy.
fn run_mc(
    items: &[McItem],
    backend: &HttpBackend,
    bank: &ToolBank,
    store: &FixtureStore,
    opts: &toolrm::scoring::ScoreOptions,
) -> (Vec<Value>, Value) {
    let (mut labelled, mut correct, mut failed) = (0usize, 0usize, 0usize);
    let results = items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let id = item.id.clone().unwrap_or_else(|| i.to_string());
            match mc_select(&item.question, &item.choices, backend, bank, store, opts) {
                Ok(r) => {
                    let hit = item.answer.map(|a| a == r.index);
                    labelled += usize::from(hit.is_some());
                    correct += usize::from(hit == Some(true));
                    json!({"id": id, "result": r, "answer": item.answer, "correct": hit})
                }
                Err(e) => {
                    failed += 1;
                    json!({"id": id, "error": e.to_string()})
                }
            }
        })
        .collect();
    let accuracy = (labelled > 0).then(|| correct as f64 / labelled as f64);
    (results, json!({"items": items.len(), "failed": failed, "labelled": labelled, "accuracy": accuracy}))
}

#[derive(Deserialize)]
struct RecordRequest {
    tool: String,
    #[serde(alias = "raw_input")]
    input: String,
}

fn tools(ctx: &Ctx, cmd: ToolsCommand) -> anyhow::Result<Value> {
    match cmd {
        ToolsCommand::List => Ok(json!({"command": "tools list", "tools": ctx.bank()?.specs()})),
        ToolsCommand::Probe { tool, input } => {
            let bank = ctx.bank()?;
            if bank.resolve(&tool).is_none() {
                return Err(UsageError::new(format!("unknown tool '{tool}'; known: {}", bank.names().join(", "))).into());
            }
            if ctx.dry_run {
                return Ok(json!({"command": "tools probe", "tool": tool, "mode": ctx.mode_name(), "dry_run": true}));
            }
            let result = bank.dispatch(&ToolRequest::new(tool.clone(), input.clone()), &ctx.store()?);
            Ok(json!({"command": "tools probe", "tool": tool, "input": input, "result": result}))
        }
        ToolsCommand::Record { input } => {
            require_file(&input)?;
            let requests: Vec<RecordRequest> =
                toolrm::util::read_jsonl_file(&input).with_context(|| format!("reading {}", input.display()))?;
            let dir = ctx.cfg.paths.fixtures_dir.display().to_string();
            if ctx.dry_run {
                return Ok(json!({"command": "tools record", "requests": requests.len(), "fixtures_dir": dir, "dry_run": true}));
            }
            let bank = ctx.bank()?;
            let store = FixtureStore::open(&ctx.cfg.paths.fixtures_dir, FixtureMode::Record)
                .with_context(|| format!("opening fixtures {dir}"))?;
            let mut by_kind: BTreeMap<String, usize> = BTreeMap::new();
            for r in &requests {
                let result = bank.dispatch(&ToolRequest::new(r.tool.clone(), r.input.clone()), &store);
                *by_kind.entry(result.kind().to_string()).or_default() += 1;
            }
            Ok(json!({"command": "tools record", "requests": requests.len(), "outcomes": by_kind, "fixtures": store.len(), "fixtures_dir": dir}))
        }
    }
}
