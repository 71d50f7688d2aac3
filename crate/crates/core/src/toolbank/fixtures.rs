use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ToolResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureMode {
    /// Call live endpoints and persist every result.
    Record,
    /// Serve recorded results only; never touches the network.
    Replay,
    /// Call live endpoints without persisting.
    Passthrough,
}

/// Trims and collapses whitespace runs to single spaces.
pub fn normalize_input(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Serialize, Deserialize)]
struct FixtureFile {
    tool: String,
    input: String,
    result: ToolResult,
}

/// Recorded tool results keyed by (tool, normalised input). When backed by a
/// directory, each entry is one JSON file at `<dir>/<tool>/<hash>.json`.
#[derive(Debug)]
pub struct FixtureStore {
    mode: FixtureMode,
    dir: Option<PathBuf>,
    entries: RwLock<HashMap<(String, String), ToolResult>>,
    writes: Mutex<()>,
}

impl FixtureStore {
    pub fn in_memory(mode: FixtureMode) -> Self {
        Self {
            mode,
            dir: None,
            entries: RwLock::new(HashMap::new()),
            writes: Mutex::new(()),
        }
    }

    /// Loads every fixture under `dir`. The directory is created in record
    /// mode if it does not exist yet.
    pub fn open(dir: impl AsRef<Path>, mode: FixtureMode) -> io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        if !dir.exists() {
            if mode == FixtureMode::Record {
                fs::create_dir_all(&dir)?;
            } else {
                return Err(io::Error::new(
                    io::ErrorKind::NotFound,
                    format!("fixtures directory {} does not exist", dir.display()),
                ));
            }
        }
        let mut entries = HashMap::new();
        let mut pending = vec![dir.clone()];
        while let Some(d) = pending.pop() {
            for entry in fs::read_dir(&d)? {
                let path = entry?.path();
                if path.is_dir() {
                    pending.push(path);
                } else if path.extension().is_some_and(|e| e == "json") {
                    let text = fs::read_to_string(&path)?;
                    let f: FixtureFile = serde_json::from_str(&text).map_err(|e| {
                        io::Error::new(
                            io::ErrorKind::InvalidData,
                            format!("{}: {e}", path.display()),
                        )
                    })?;
                    entries.insert((f.tool, normalize_input(&f.input)), f.result);
                }
            }
        }
        Ok(Self {
            mode,
            dir: Some(dir),
            entries: RwLock::new(entries),
            writes: Mutex::new(()),
        })
    }

    pub fn mode(&self) -> FixtureMode {
        self.mode
    }

    pub fn with_mode(self, mode: FixtureMode) -> Self {
        Self { mode, ..self }
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("fixture lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, tool: &str, input: &str) -> Option<ToolResult> {
        self.entries
            .read()
            .expect("fixture lock")
            .get(&(tool.to_string(), normalize_input(input)))
            .cloned()
    }

    /// Inserts without touching disk (test setup, preloading).
    pub fn insert(&self, tool: &str, input: &str, result: ToolResult) {
        self.entries
            .write()
            .expect("fixture lock")
            .insert((tool.to_string(), normalize_input(input)), result);
    }

    /// Inserts and, for directory-backed stores, writes the fixture file.
    pub fn record(&self, tool: &str, input: &str, result: &ToolResult) {
        let _guard = self.writes.lock().expect("fixture write lock");
        self.insert(tool, input, result.clone());
        if let Some(dir) = &self.dir {
            if let Err(e) = self.write_file(dir, tool, input, result) {
                log_write_failure(tool, &e);
            }
        }
    }

    pub fn fixture_path(dir: &Path, tool: &str, input: &str) -> PathBuf {
        let key = normalize_input(input);
        let mut h = Sha256::new();
        h.update(tool.as_bytes());
        h.update(b"\n");
        h.update(key.as_bytes());
        let digest = hex::encode(h.finalize());
        dir.join(tool_slug(tool)).join(format!("{}.json", &digest[..32]))
    }

    fn write_file(&self, dir: &Path, tool: &str, input: &str, result: &ToolResult) -> io::Result<()> {
        let path = Self::fixture_path(dir, tool, input);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let doc = FixtureFile {
            tool: tool.to_string(),
            input: normalize_input(input),
            result: result.clone(),
        };
        let body = serde_json::to_string_pretty(&doc).map_err(io::Error::other)?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, body + "\n")?;
        fs::rename(tmp, path)
    }
}

fn log_write_failure(tool: &str, e: &io::Error) {
    eprintln!("warning: failed to persist {tool} fixture: {e}");
}

fn tool_slug(tool: &str) -> String {
    tool.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}
