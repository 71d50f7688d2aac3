//! WikiSearch and Google Search.
//!
//! Wiki uses the MediaWiki `api.php` search+extracts query and returns
//! `Title | extract`. Web search expects a SerpAPI-style JSON body and joins
//! the organic result snippets. Both cap the observation length.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    normalize_input, sanitize_observation, ErrorKind, Tool, ToolResult, ToolSpec,
    DEFAULT_OBSERVATION_CAP, GOOGLE_SEARCH, TOOL_FAILURE_MESSAGE, WIKI_SEARCH,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchSource {
    Wiki,
    Web,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    /// Observation cap in characters; defaults to 1024.
    pub max_chars: Option<usize>,
}

pub struct SearchTool {
    source: SearchSource,
    spec: ToolSpec,
    cfg: SearchConfig,
    http: reqwest::blocking::Client,
}

impl SearchTool {
    pub fn new(source: SearchSource, cfg: SearchConfig, http: reqwest::blocking::Client) -> Self {
        let name = match source {
            SearchSource::Wiki => WIKI_SEARCH,
            SearchSource::Web => GOOGLE_SEARCH,
        };
        Self {
            source,
            spec: ToolSpec {
                name: name.to_string(),
                arg_grammar: "a free-text search query".to_string(),
                requires_network: true,
            },
            cfg,
            http,
        }
    }

    fn cap(&self) -> usize {
        self.cfg.max_chars.unwrap_or(DEFAULT_OBSERVATION_CAP)
    }

    pub fn search_query(&self, query: &str) -> ToolResult {
        let query = normalize_input(query);
        if query.is_empty() {
            return ToolResult::invalid("Empty search query.");
        }
        let Some(endpoint) = &self.cfg.endpoint else {
            return ToolResult::error(ErrorKind::NetworkError, TOOL_FAILURE_MESSAGE);
        };
        let request = match self.source {
            SearchSource::Wiki => self.http.get(endpoint).query(&[
                ("action", "query"),
                ("format", "json"),
                ("prop", "extracts"),
                ("exintro", "1"),
                ("explaintext", "1"),
                ("redirects", "1"),
                ("generator", "search"),
                ("gsrlimit", "1"),
                ("gsrsearch", query.as_str()),
            ]),
            SearchSource::Web => {
                let mut params = vec![("q", query.as_str())];
                if let Some(key) = &self.cfg.api_key {
                    params.push(("api_key", key.as_str()));
                }
                self.http.get(endpoint).query(&params)
            }
        };
        let resp = match request.send() {
            Ok(r) if r.status().is_success() => r,
            Err(e) if e.is_timeout() => {
                return ToolResult::error(ErrorKind::Timeout, TOOL_FAILURE_MESSAGE)
            }
            _ => return ToolResult::error(ErrorKind::NetworkError, TOOL_FAILURE_MESSAGE),
        };
        let body: Value = match resp.json() {
            Ok(v) => v,
            Err(_) => {
                return ToolResult::error(
                    ErrorKind::ExecutionError,
                    "The search service returned an unreadable response.",
                )
            }
        };
        let text = match self.source {
            SearchSource::Wiki => wiki_passage(&body),
            SearchSource::Web => web_snippets(&body),
        };
        match text {
            Some(t) if !t.trim().is_empty() => ToolResult::ok(sanitize_observation(&t, self.cap())),
            _ => ToolResult::ok("No results were found for the query."),
        }
    }
}

fn wiki_passage(body: &Value) -> Option<String> {
    let pages = body.pointer("/query/pages")?.as_object()?;
    // generator=search carries an `index` giving rank; keep the best one.
    let page = pages
        .values()
        .min_by_key(|p| p.get("index").and_then(Value::as_i64).unwrap_or(i64::MAX))?;
    let title = page.get("title")?.as_str()?;
    let extract = page.get("extract").and_then(Value::as_str).unwrap_or("");
    Some(format!("{title} | {extract}"))
}

fn web_snippets(body: &Value) -> Option<String> {
    let results = body.get("organic_results")?.as_array()?;
    let snippets: Vec<&str> = results
        .iter()
        .filter_map(|r| r.get("snippet").and_then(Value::as_str))
        .collect();
    Some(snippets.join(" "))
}

impl Tool for SearchTool {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn fixture_key(&self, raw_input: &str) -> Result<String, ToolResult> {
        let q = normalize_input(raw_input);
        if q.is_empty() {
            Err(ToolResult::invalid("Empty search query."))
        } else {
            Ok(q.to_lowercase())
        }
    }

    fn execute(&self, raw_input: &str) -> ToolResult {
        self.search_query(raw_input)
    }
}
