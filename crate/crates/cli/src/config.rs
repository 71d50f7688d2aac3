//! Run configuration: a TOML file plus credential and endpoint overrides
//! read from the environment.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use toolrm::emit::EmitConfig;
use toolrm::forge::{CalendarTemplates, FilterPolicy, TemplateSet};
use toolrm::scoring::ScoreOptions;
use toolrm::toolbank::ToolBankConfig;

use crate::UsageError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed for generation, splitting and emission.
    pub seed: u64,
    /// Worker threads for corpus-level parallelism; defaults to the CPU count.
    pub workers: Option<usize>,
    pub paths: Paths,
    /// `seed` here is replaced by the run seed.
    pub emit: EmitConfig,
    pub filter: FilterPolicy,
    pub score: ScoreOptions,
    pub backend: BackendConfig,
    pub agents: AgentsConfig,
    pub tools: ToolBankConfig,
    pub templates: Templates,
    pub credentials: Credentials,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: None,
            paths: Paths::default(),
            emit: EmitConfig::themis(),
            filter: FilterPolicy::default(),
            score: ScoreOptions::default(),
            backend: BackendConfig::default(),
            agents: AgentsConfig::default(),
            tools: ToolBankConfig::default(),
            templates: Templates::default(),
            credentials: Credentials::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus_dir: PathBuf,
    pub fixtures_dir: PathBuf,
    pub reports_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            corpus_dir: PathBuf::from("out/corpus"),
            fixtures_dir: PathBuf::from("fixtures"),
            reports_dir: PathBuf::from("out/reports"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub url: Option<String>,
    pub timeout_ms: u64,
    pub in_flight: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            url: None,
            timeout_ms: 120_000,
            in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentsConfig {
    pub endpoint: Option<String>,
    /// Read from the environment only; never written back to a file.
    #[serde(skip)]
    pub api_key: Option<String>,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for AgentsConfig {
    fn default() -> Self {
        Self {
            endpoint: None,
            api_key: None,
            timeout_ms: 120_000,
            max_in_flight: 4,
        }
    }
}

/// Template overrides; absent entries use the built-in reference sets.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Templates {
    pub weather: Option<TemplateSet>,
    pub multitool: Option<TemplateSet>,
    pub calendar: Option<CalendarTemplates>,
}

/// Names of the environment variables holding credentials and endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Credentials {
    pub weather_api_key: String,
    pub search_api_key: String,
    pub translate_api_key: String,
    pub agent_api_key: String,
    pub backend_url: String,
}

impl Default for Credentials {
    fn default() -> Self {
        Self {
            weather_api_key: "WEATHER_API_KEY".into(),
            search_api_key: "SEARCH_API_KEY".into(),
            translate_api_key: "TRANSLATE_API_KEY".into(),
            agent_api_key: "AGENT_API_KEY".into(),
            backend_url: "BACKEND_URL".into(),
        }
    }
}

fn env_value(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.trim().is_empty())
}

impl RunConfig {
    /// Reads `path` (or the defaults) and applies environment overrides.
    /// Relative paths in the file resolve against the file's directory.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| UsageError::new(format!("cannot read config {}: {e}", p.display())))?;
                let mut cfg: RunConfig = toml::from_str(&text)
                    .map_err(|e| UsageError::new(format!("invalid config {}: {e}", p.display())))?;
                let base = p.parent().unwrap_or(Path::new(""));
                for dir in [
                    &mut cfg.paths.corpus_dir,
                    &mut cfg.paths.fixtures_dir,
                    &mut cfg.paths.reports_dir,
                ] {
                    if dir.is_relative() {
                        *dir = base.join(&*dir);
                    }
                }
                cfg
            }
        };
        cfg.apply_env();
        cfg.emit
            .validate()
            .map_err(|e| UsageError::new(e.to_string()))?;
        if cfg.workers == Some(0) {
            return Err(UsageError::new("workers must be at least 1").into());
        }
        Ok(cfg)
    }

    fn apply_env(&mut self) {
        let c = self.credentials.clone();
        if let Some(v) = env_value(&c.weather_api_key) {
            self.tools.weather.api_key = Some(v);
        }
        if let Some(v) = env_value(&c.search_api_key) {
            self.tools.google.api_key = Some(v);
        }
        if let Some(v) = env_value(&c.translate_api_key) {
            self.tools.translator.api_key = Some(v);
        }
        if let Some(v) = env_value(&c.agent_api_key) {
            self.agents.api_key = Some(v);
        }
        if let Some(v) = env_value(&c.backend_url) {
            self.backend.url = Some(v);
        }
    }

    /// A copy with every credential removed.
    pub fn redacted(&self) -> Self {
        let mut cfg = self.clone();
        cfg.tools.weather.api_key = None;
        cfg.tools.wiki.api_key = None;
        cfg.tools.google.api_key = None;
        cfg.tools.translator.api_key = None;
        cfg.agents.api_key = None;
        cfg
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        toml::to_string(self).context("serializing config")
    }
}
