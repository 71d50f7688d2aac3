//! Helpers for driving the `toolrm` binary and a scripted model backend.

#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use toolrm::forge::{add_flag, meta, read_corpus, write_corpus, ForgedPair, FLAG_INVALID_FORMAT};

pub const BIN: &str = env!("CARGO_BIN_EXE_toolrm");

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    /// The one-line JSON summary printed on success.
    pub fn summary(&self) -> Value {
        assert_eq!(self.code, 0, "stderr: {}", self.stderr);
        serde_json::from_str(self.stdout.trim()).expect("summary is JSON")
    }

    /// The JSON error object on the last stderr line.
    pub fn error(&self) -> Value {
        let last = self.stderr.trim().lines().last().expect("stderr is not empty");
        serde_json::from_str(last).expect("error is JSON")
    }
}

fn finish(out: Output) -> Run {
    Run {
        code: out.status.code().expect("exited normally"),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

/// Runs the binary in `cwd` with a clean credential environment.
pub fn toolrm_env(cwd: &Path, args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(BIN);
    cmd.current_dir(cwd).args(args);
    for var in ["WEATHER_API_KEY", "SEARCH_API_KEY", "TRANSLATE_API_KEY", "AGENT_API_KEY", "BACKEND_URL"] {
        cmd.env_remove(var);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    finish(cmd.output().expect("spawn toolrm"))
}

pub fn toolrm(cwd: &Path, args: &[&str]) -> Run {
    toolrm_env(cwd, args, &[])
}

/// Every file under `dir`, relative, sorted.
pub fn listing(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut pending = vec![dir.to_path_buf()];
    while let Some(d) = pending.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                pending.push(p.clone());
            }
            out.push(p.strip_prefix(dir).unwrap().to_path_buf());
        }
    }
    out.sort();
    out
}

/// Forges the calendar corpus (30 pairs) into `dir/calendar.jsonl`.
pub fn calendar_corpus(dir: &Path) -> PathBuf {
    let s = toolrm(dir, &["forge", "calendar", "--out", "."]).summary();
    assert_eq!(s["pairs"], 30);
    dir.join("calendar.jsonl")
}

/// The calendar corpus with two plants per drop reason in its first eight
/// pairs. The two `execution_error` plants are dropped only when strict.
pub fn planted_corpus(dir: &Path) -> PathBuf {
    let clean = calendar_corpus(dir);
    let mut pairs: Vec<ForgedPair> = read_corpus(&clean).unwrap();
    for (i, p) in pairs.iter_mut().take(8).enumerate() {
        match i / 2 {
            0 => add_flag(&mut p.neg_trajectory, FLAG_INVALID_FORMAT),
            1 => {
                let step = p.pos_trajectory.steps[0].clone();
                p.pos_trajectory.steps = vec![step; 4];
            }
            2 => p.neg_trajectory.steps[0].action = "Horoscope".into(),
            _ => {
                p.pos_trajectory
                    .meta
                    .insert(meta::TOOL_OUTCOMES.into(), "execution_error".into());
            }
        }
    }
    let path = dir.join("planted.jsonl");
    write_corpus(&path, &pairs).unwrap();
    path
}

fn line_payload<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    text.lines().rev().find_map(|l| l.trim().strip_prefix(label)).map(str::trim)
}

/// Scripted model for "What is <expr>?" questions: one Calculator call,
/// then a rationale. The score is 2 when the answer states the observed
/// value and -1 otherwise.
fn continue_reply(prefix: &str) -> String {
    if prefix.contains("Observation:") {
        return "Rationale: Checked against the calculator.\nScore:".into();
    }
    let question = line_payload(prefix, "Question:").unwrap_or_default();
    let expr = question.trim_start_matches("What is ").trim_end_matches('?');
    format!("Thought: I should compute it.\nAction: Calculator\nAction Input: {expr}\n")
}

fn score_reply(text: &str) -> f64 {
    let observed = line_payload(text, "Observation:").unwrap_or_default();
    let answer = line_payload(text, "Answer:").unwrap_or_default();
    if answer.ends_with(&format!("= {observed}.")) {
        2.0
    } else {
        -1.0
    }
}

/// Starts the scripted backend on an ephemeral port. It lives until the
/// test process exits.
pub fn fake_backend() -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let app = Router::new()
                .route(
                    "/continue",
                    post(|Json(body): Json<Value>| async move {
                        Json(json!({"text": continue_reply(body["prefix"].as_str().unwrap_or_default())}))
                    }),
                )
                .route(
                    "/score",
                    post(|Json(body): Json<Value>| async move {
                        Json(json!({"score": score_reply(body["text"].as_str().unwrap_or_default())}))
                    }),
                );
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

/// Calculator instances `What is a*b?`; the last one has its answers
/// swapped so the model should reverse it.
pub fn calculator_instances(dir: &Path, n: usize) -> PathBuf {
    let mut lines = String::new();
    for i in 0..n {
        let (a, b) = (i + 2, i + 5);
        let right = format!("{a}*{b} = {}.", a * b);
        let wrong = format!("{a}*{b} = {}.", a * b + 3);
        let (positive, negative) = if i + 1 == n { (wrong, right) } else { (right, wrong) };
        let inst = json!({
            "id": format!("calc-{i:02}"),
            "question": format!("What is {a}*{b}?"),
            "positive": positive,
            "negative": negative,
            "tool_domain": "Calculator",
            "source": "test",
        });
        lines.push_str(&inst.to_string());
        lines.push('\n');
    }
    let path = dir.join("instances.jsonl");
    std::fs::write(&path, lines).unwrap();
    path
}
