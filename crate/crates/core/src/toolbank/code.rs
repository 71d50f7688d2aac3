//! Runs a code snippet against a list of test assertions in an external
//! executor process.
//!
//! Executor contract: the process receives `{"snippet": ..., "tests": [...]}`
//! on stdin and prints `{"passed": [bool, ...], "stderr": "..."}` on stdout.
//! It is killed when the wall-clock budget runs out.
//!
//! Action Input is a JSON object:
//! `{"lang_tag": "python", "snippet": "...", "tests": ["assert ..."], "timeout_ms": 5000}`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::util::Permits;

use super::{sanitize_observation, ErrorKind, Tool, ToolResult, ToolSpec, CODE, DEFAULT_OBSERVATION_CAP};

pub const DEFAULT_TIMEOUT_MS: u64 = 10_000;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct CodeConfig {
    /// lang_tag -> command line (program followed by its arguments).
    pub executors: BTreeMap<String, Vec<String>>,
    /// Maximum number of executor processes alive at once (default 4).
    pub max_concurrent: Option<usize>,
    pub default_timeout_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeRequest {
    #[serde(alias = "lang", alias = "language")]
    pub lang_tag: String,
    #[serde(alias = "code")]
    pub snippet: String,
    #[serde(default, alias = "test_list")]
    pub tests: Vec<String>,
    #[serde(default)]
    pub timeout_ms: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct ExecutorReport {
    passed: Vec<bool>,
    #[serde(default)]
    stderr: String,
}

#[derive(Debug)]
pub struct CodeTool {
    spec: ToolSpec,
    cfg: CodeConfig,
    permits: Permits,
}

impl CodeTool {
    pub fn new(cfg: CodeConfig) -> Self {
        let permits = Permits::new(cfg.max_concurrent.unwrap_or(4));
        Self {
            spec: ToolSpec {
                name: CODE.to_string(),
                arg_grammar: r#"JSON {"lang_tag", "snippet", "tests": [..], "timeout_ms"?}"#.to_string(),
                requires_network: false,
            },
            cfg,
            permits,
        }
    }

    pub fn code_run_tests(
        &self,
        snippet: &str,
        lang_tag: &str,
        tests: &[String],
        timeout_ms: u64,
    ) -> ToolResult {
        let Some(cmd) = self.cfg.executors.get(lang_tag).filter(|c| !c.is_empty()) else {
            return ToolResult::invalid(format!("No executor registered for '{lang_tag}'."));
        };
        let payload = serde_json::json!({"snippet": snippet, "tests": tests}).to_string();
        let _permit = self.permits.acquire();

        let mut child = match Command::new(&cmd[0])
            .args(&cmd[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
        {
            Ok(c) => c,
            Err(e) => {
                return ToolResult::error(
                    ErrorKind::ExecutionError,
                    format!("Failed to start the {lang_tag} executor: {e}."),
                )
            }
        };
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = thread::spawn(move || {
            let _ = stdin.write_all(payload.as_bytes());
        });
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        let mut stderr = child.stderr.take().expect("piped stderr");
        let err_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });

        let status = match child.wait_timeout(Duration::from_millis(timeout_ms)) {
            Ok(Some(status)) => status,
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                return ToolResult::error(
                    ErrorKind::Timeout,
                    format!("Code execution exceeded {timeout_ms} ms and was stopped."),
                );
            }
            Err(e) => {
                let _ = child.kill();
                return ToolResult::error(ErrorKind::ExecutionError, format!("Executor wait failed: {e}."));
            }
        };
        let _ = writer.join();
        let out = reader.join().unwrap_or_default();
        let proc_err = err_reader.join().unwrap_or_default();

        let report: ExecutorReport = match serde_json::from_str(out.trim()) {
            Ok(r) => r,
            Err(_) => {
                return ToolResult::error(
                    ErrorKind::ExecutionError,
                    sanitize_observation(
                        &format!("The executor exited ({status}) before reporting. {}", proc_err.trim()),
                        DEFAULT_OBSERVATION_CAP,
                    ),
                )
            }
        };
        if report.passed.len() != tests.len() {
            return ToolResult::error(
                ErrorKind::ExecutionError,
                format!(
                    "The executor reported {} results for {} tests.",
                    report.passed.len(),
                    tests.len()
                ),
            );
        }
        ToolResult::ok(render_report(tests, &report.passed, &report.stderr))
    }
}

fn render_report(tests: &[String], passed: &[bool], stderr: &str) -> String {
    let k = passed.iter().filter(|p| **p).count();
    let mut out = format!("Passed {k}/{} tests.", tests.len());
    let failed: Vec<&str> = tests
        .iter()
        .zip(passed)
        .filter(|(_, p)| !**p)
        .map(|(t, _)| t.as_str())
        .collect();
    if !failed.is_empty() {
        out.push_str(" Failed: ");
        out.push_str(&failed.join(" | "));
        out.push('.');
    }
    if !stderr.trim().is_empty() && k < tests.len() {
        out.push_str(" Diagnostic: ");
        out.push_str(stderr.trim());
    }
    sanitize_observation(&out, DEFAULT_OBSERVATION_CAP)
}

impl Tool for CodeTool {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn execute(&self, raw_input: &str) -> ToolResult {
        let req: CodeRequest = match serde_json::from_str(raw_input.trim()) {
            Ok(r) => r,
            Err(e) => return ToolResult::invalid(format!("Malformed code request: {e}.")),
        };
        if req.tests.is_empty() {
            return ToolResult::invalid("A code request needs at least one test.");
        }
        let timeout = req
            .timeout_ms
            .or(self.cfg.default_timeout_ms)
            .unwrap_or(DEFAULT_TIMEOUT_MS);
        self.code_run_tests(&req.snippet, &req.lang_tag, &req.tests, timeout)
    }
}
