//! Small shared helpers: JSON Lines I/O, seed derivation, a counting
//! semaphore.

use std::fs;
use std::io::{self, BufRead, BufWriter, Write};
use std::path::Path;
use std::sync::{Condvar, Mutex};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Derives an independent sub-seed from a root seed and a stable key, so
/// per-item randomness does not depend on processing order.
pub fn sub_seed(seed: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead) -> io::Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_jsonl_file<T: DeserializeOwned>(path: impl AsRef<Path>) -> io::Result<Vec<T>> {
    let path = path.as_ref();
    let f = fs::File::open(path)
        .map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    read_jsonl(io::BufReader::new(f))
}

pub fn write_jsonl<T: Serialize>(mut w: impl Write, items: &[T]) -> io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes via a temporary sibling file and renames, so readers never see a
/// half-written file.
pub fn write_jsonl_file<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> io::Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("partial");
    {
        let f = fs::File::create(&tmp)?;
        write_jsonl(BufWriter::new(f), items)?;
    }
    fs::rename(&tmp, path)
}

/// Counting semaphore.
#[derive(Debug)]
pub struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    pub fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().expect("permit lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("permit lock");
        }
        *free -= 1;
        PermitGuard(self)
    }
}

pub struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("permit lock") += 1;
        self.0.cv.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    #[test]
    fn sub_seeds_differ_by_key() {
        assert_ne!(sub_seed(7, "a"), sub_seed(7, "b"));
        assert_eq!(sub_seed(7, "a"), sub_seed(7, "a"));
        assert_ne!(sub_seed(7, "a"), sub_seed(8, "a"));
    }

    #[test]
    fn jsonl_round_trip_skips_blank_lines() {
        let items = vec![serde_json::json!({"a": 1}), serde_json::json!({"b": [2]})];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &items).unwrap();
        buf.extend_from_slice(b"\n\n");
        let back: Vec<serde_json::Value> = read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, items);
        assert!(read_jsonl::<serde_json::Value>(&b"{bad"[..]).is_err());
    }

    #[test]
    fn permits_bound_concurrency() {
        let permits = Arc::new(Permits::new(2));
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (permits, live, peak) = (permits.clone(), live.clone(), peak.clone());
                std::thread::spawn(move || {
                    let _g = permits.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(std::time::Duration::from_millis(10));
                    live.fetch_sub(1, Ordering::SeqCst);
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }
}
