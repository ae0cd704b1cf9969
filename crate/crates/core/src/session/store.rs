use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use thiserror::Error;

use super::LogEntry;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("invalid session id: {0:?}")]
    InvalidId(String),
    #[error("line {line} of the log for {session} is not a valid entry: {source}")]
    Parse {
        session: String,
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Append-only persistence of session event logs.
pub trait SessionStore: Send + Sync {
    fn append(&self, session_id: &str, entries: &[LogEntry]) -> Result<(), StoreError>;
    /// `None` when the session has never been written.
    fn load(&self, session_id: &str) -> Result<Option<Vec<LogEntry>>, StoreError>;
    fn session_ids(&self) -> Result<Vec<String>, StoreError>;
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    logs: Mutex<BTreeMap<String, Vec<LogEntry>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl SessionStore for MemoryStore {
    fn append(&self, session_id: &str, entries: &[LogEntry]) -> Result<(), StoreError> {
        let mut logs = self.logs.lock().expect("store lock poisoned");
        logs.entry(session_id.to_string()).or_default().extend_from_slice(entries);
        Ok(())
    }

    fn load(&self, session_id: &str) -> Result<Option<Vec<LogEntry>>, StoreError> {
        Ok(self.logs.lock().expect("store lock poisoned").get(session_id).cloned())
    }

    fn session_ids(&self) -> Result<Vec<String>, StoreError> {
        Ok(self.logs.lock().expect("store lock poisoned").keys().cloned().collect())
    }
}

/// One `<session_id>.jsonl` file per session under a directory.
#[derive(Debug)]
pub struct JsonlStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl JsonlStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_path_buf(),
            write_lock: Mutex::new(()),
        })
    }

    pub fn path_for(&self, session_id: &str) -> Result<PathBuf, StoreError> {
        let valid = !session_id.is_empty()
            && session_id.len() <= 128
            && session_id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        if !valid {
            return Err(StoreError::InvalidId(session_id.to_string()));
        }
        Ok(self.dir.join(format!("{session_id}.jsonl")))
    }
}

impl SessionStore for JsonlStore {
    fn append(&self, session_id: &str, entries: &[LogEntry]) -> Result<(), StoreError> {
        let path = self.path_for(session_id)?;
        let mut buf = Vec::new();
        for entry in entries {
            serde_json::to_writer(&mut buf, entry)?;
            buf.push(b'\n');
        }
        let _guard = self.write_lock.lock().expect("store lock poisoned");
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        file.write_all(&buf)?;
        file.sync_data()?;
        Ok(())
    }

    fn load(&self, session_id: &str) -> Result<Option<Vec<LogEntry>>, StoreError> {
        let path = self.path_for(session_id)?;
        let file = match File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line).map_err(|source| StoreError::Parse {
                session: session_id.to_string(),
                line: i + 1,
                source,
            })?;
            entries.push(entry);
        }
        Ok(Some(entries))
    }

    fn session_ids(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "jsonl") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}
