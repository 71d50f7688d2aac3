//! Staged command outputs. Files are buffered in memory and committed
//! together: each is written to a `.partial` sibling and renamed into
//! place only after every write succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

fn partial_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".partial");
    path.with_file_name(name)
}

impl Outputs {
    pub fn jsonl<T: Serialize>(&mut self, path: PathBuf, items: &[T]) -> anyhow::Result<()> {
        let mut buf = Vec::new();
        toolrm::util::write_jsonl(&mut buf, items)?;
        self.files.push((path, buf));
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, path: PathBuf, value: &T) -> anyhow::Result<()> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.files.push((path, buf));
        Ok(())
    }

    pub fn text(&mut self, path: PathBuf, text: String) {
        self.files.push((path, text.into_bytes()));
    }

    pub fn paths(&self) -> Vec<String> {
        self.files.iter().map(|(p, _)| p.display().to_string()).collect()
    }

    pub fn commit(self) -> anyhow::Result<()> {
        let mut written = Vec::new();
        let result = (|| -> anyhow::Result<()> {
            for (path, bytes) in &self.files {
                if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
                }
                let tmp = partial_path(path);
                written.push(tmp.clone());
                fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
            }
            Ok(())
        })();
        if let Err(e) = result {
            for tmp in &written {
                let _ = fs::remove_file(tmp);
            }
            return Err(e);
        }
        for (path, _) in &self.files {
            let tmp = partial_path(path);
            fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
        }
        Ok(())
    }
}
