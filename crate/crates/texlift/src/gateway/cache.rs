//! Content-addressed call cache, persisted as append-only JSONL.
//!
//! Every provider call is keyed by a digest of its full request (prompt,
//! target, model settings). Re-running a stage with an unchanged cache file
//! replays responses byte-for-byte and never touches the network.

use super::GatewayError;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    key_hash: String,
    kind: String,
    request_digest: String,
    response_payload: Value,
    timestamp: u64,
}

struct Inner {
    map: HashMap<String, Value>,
    file: Option<File>,
}

/// Thread-safe lookup table over an optional backing JSONL file.
pub struct CallCache {
    inner: Mutex<Inner>,
}

impl CallCache {
    /// A cache that lives only for this process (tests, dry runs).
    pub fn in_memory() -> Self {
        Self {
            inner: Mutex::new(Inner { map: HashMap::new(), file: None }),
        }
    }

    /// Open (or create) a persistent cache file and load existing records.
    ///
    /// Lines that fail to parse are skipped with a warning rather than
    /// aborting the run: a truncated final line after a crash is expected.
    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        let mut map = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(
                File::open(path).map_err(|e| GatewayError::Cache(e.to_string()))?,
            );
            for (lineno, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| GatewayError::Cache(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord>(&line) {
                    Ok(rec) => {
                        map.insert(rec.key_hash, rec.response_payload);
                    }
                    Err(e) => {
                        log::warn!(
                            "{}:{}: skipping unreadable cache line: {e}",
                            path.display(),
                            lineno + 1
                        );
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GatewayError::Cache(e.to_string()))?;
        Ok(Self {
            inner: Mutex::new(Inner { map, file: Some(file) }),
        })
    }

    pub fn get(&self, key_hash: &str) -> Option<Value> {
        self.inner.lock().expect("cache lock").map.get(key_hash).cloned()
    }

    /// Insert a response and append it to the backing file, if any.
    pub fn put(
        &self,
        key_hash: &str,
        kind: &str,
        request_digest: &str,
        response_payload: Value,
    ) -> Result<(), GatewayError> {
        let mut inner = self.inner.lock().expect("cache lock");
        let record = CacheRecord {
            key_hash: key_hash.to_string(),
            kind: kind.to_string(),
            request_digest: request_digest.to_string(),
            response_payload,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        if let Some(file) = inner.file.as_mut() {
            let mut line =
                serde_json::to_string(&record).map_err(|e| GatewayError::Cache(e.to_string()))?;
            line.push('\n');
            file.write_all(line.as_bytes())
                .map_err(|e| GatewayError::Cache(e.to_string()))?;
        }
        inner.map.insert(record.key_hash, record.response_payload);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
