//! Translation tool.
//!
//! Action Input: `src->tgt: text`, e.g. `de->en: Guten Morgen`. Live mode
//! posts `{q, source, target, api_key}` to a LibreTranslate-compatible
//! endpoint and reads `translatedText`.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    sanitize_observation, ErrorKind, Tool, ToolResult, ToolSpec, DEFAULT_OBSERVATION_CAP,
    TOOL_FAILURE_MESSAGE, TRANSLATOR,
};

/// Default language registry: the MLQA languages plus a few common ones.
pub const DEFAULT_LANGUAGES: [&str; 13] = [
    "en", "ar", "de", "es", "hi", "vi", "zh", "fr", "it", "ja", "ko", "pt", "ru",
];

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TranslatorConfig {
    pub endpoint: Option<String>,
    pub api_key: Option<String>,
    /// Accepted language codes; empty means [`DEFAULT_LANGUAGES`].
    pub languages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslateRequest {
    pub text: String,
    pub src: String,
    pub tgt: String,
}

fn input_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?s)^\s*([A-Za-z][A-Za-z-]{1,9})\s*->\s*([A-Za-z][A-Za-z-]{1,9})\s*:\s*(.*?)\s*$")
            .expect("translator regex")
    })
}

impl TranslateRequest {
    pub fn parse(input: &str) -> Result<Self, String> {
        let caps = input_re()
            .captures(input)
            .ok_or_else(|| "Expected 'src->tgt: text'.".to_string())?;
        let text = caps[3].to_string();
        if text.is_empty() {
            return Err("Nothing to translate.".to_string());
        }
        Ok(Self {
            src: caps[1].to_ascii_lowercase(),
            tgt: caps[2].to_ascii_lowercase(),
            text,
        })
    }

    pub fn to_input(&self) -> String {
        format!("{}->{}: {}", self.src, self.tgt, self.text)
    }
}

pub struct TranslatorTool {
    spec: ToolSpec,
    cfg: TranslatorConfig,
    http: reqwest::blocking::Client,
}

impl TranslatorTool {
    pub fn new(cfg: TranslatorConfig, http: reqwest::blocking::Client) -> Self {
        Self {
            spec: ToolSpec {
                name: TRANSLATOR.to_string(),
                arg_grammar: "src->tgt: text (language codes from the configured registry)".to_string(),
                requires_network: true,
            },
            cfg,
            http,
        }
    }

    pub fn is_known(&self, code: &str) -> bool {
        if self.cfg.languages.is_empty() {
            DEFAULT_LANGUAGES.contains(&code)
        } else {
            self.cfg.languages.iter().any(|l| l.eq_ignore_ascii_case(code))
        }
    }

    fn validate(&self, input: &str) -> Result<TranslateRequest, String> {
        let req = TranslateRequest::parse(input)?;
        for code in [&req.src, &req.tgt] {
            if !self.is_known(code) {
                return Err(format!("Unknown language code '{code}'."));
            }
        }
        Ok(req)
    }

    pub fn translate_text(&self, req: &TranslateRequest) -> ToolResult {
        if req.src == req.tgt {
            return ToolResult::ok(req.text.clone());
        }
        let Some(endpoint) = &self.cfg.endpoint else {
            return ToolResult::error(ErrorKind::NetworkError, TOOL_FAILURE_MESSAGE);
        };
        let mut body = json!({"q": req.text, "source": req.src, "target": req.tgt, "format": "text"});
        if let Some(key) = &self.cfg.api_key {
            body["api_key"] = json!(key);
        }
        let resp = match self.http.post(endpoint).json(&body).send() {
            Ok(r) if r.status().is_success() => r,
            Err(e) if e.is_timeout() => {
                return ToolResult::error(ErrorKind::Timeout, TOOL_FAILURE_MESSAGE)
            }
            _ => return ToolResult::error(ErrorKind::NetworkError, TOOL_FAILURE_MESSAGE),
        };
        match resp.json::<Value>().ok().and_then(|v| {
            v.get("translatedText")
                .and_then(Value::as_str)
                .map(str::to_string)
        }) {
            Some(t) if !t.trim().is_empty() => {
                ToolResult::ok(sanitize_observation(&t, DEFAULT_OBSERVATION_CAP))
            }
            _ => ToolResult::error(
                ErrorKind::ExecutionError,
                "The translation service returned an unreadable response.",
            ),
        }
    }
}

impl Tool for TranslatorTool {
    fn spec(&self) -> &ToolSpec {
        &self.spec
    }

    fn fixture_key(&self, raw_input: &str) -> Result<String, ToolResult> {
        self.validate(raw_input)
            .map(|r| r.to_input())
            .map_err(ToolResult::invalid)
    }

    fn execute(&self, raw_input: &str) -> ToolResult {
        match self.validate(raw_input) {
            Ok(req) => self.translate_text(&req),
            Err(msg) => ToolResult::invalid(msg),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toolbank::OutcomeKind;

    fn tool() -> TranslatorTool {
        TranslatorTool::new(TranslatorConfig::default(), reqwest::blocking::Client::new())
    }

    #[test]
    fn identity_translation() {
        assert_eq!(tool().execute("en->en: Good morning"), ToolResult::ok("Good morning"));
    }

    #[test]
    fn unknown_code() {
        assert_eq!(tool().execute("xx->en: hola").kind(), OutcomeKind::InvalidArgument);
        assert_eq!(tool().execute("hola").kind(), OutcomeKind::InvalidArgument);
        assert_eq!(tool().execute("es->en:   ").kind(), OutcomeKind::InvalidArgument);
    }

    #[test]
    fn parse_keeps_multiline_text() {
        let r = TranslateRequest::parse(" DE -> en : Guten\nMorgen ").unwrap();
        assert_eq!(r.src, "de");
        assert_eq!(r.text, "Guten\nMorgen");
    }
}
