//! Embedded, file-backed document store for corpus records.
//!
//! Records live in an append-only JSON-lines log (`records.jsonl`) whose
//! first line is a format header. Opening the store replays the log, later
//! entries for a key replacing earlier ones, and rebuilds three in-memory
//! indexes: by key, by normalized DOI and by normalized title.
//!
//! Writes take `&mut self`; lookups take `&self`, so a loaded store can be
//! shared across matcher threads.

use std::collections::{BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DblpRecord;
use crate::normalize::{normalize_doi, normalize_title};

pub const STORE_FORMAT: &str = "nodoi-store";
pub const STORE_VERSION: u32 = 1;
const LOG_FILE: &str = "records.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("record key must not be empty")]
    EmptyKey,
    #[error("{path}: unsupported store header {found:?}")]
    Version { path: PathBuf, found: String },
    #[error("{path}:{line}: {source}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
struct Header {
    format: String,
    version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreStats {
    pub record_count: usize,
    pub doi_keys: usize,
    pub title_keys: usize,
}

pub struct MetadataStore {
    location: PathBuf,
    log: BufWriter<File>,
    by_key: HashMap<String, DblpRecord>,
    by_doi: HashMap<String, BTreeSet<String>>,
    by_norm_title: HashMap<String, BTreeSet<String>>,
}

fn index_doi(record: &DblpRecord) -> Option<String> {
    record
        .doi
        .as_deref()
        .map(normalize_doi)
        .filter(|d| !d.is_empty())
}

fn index_title(record: &DblpRecord) -> Option<String> {
    Some(normalize_title(&record.title)).filter(|t| !t.is_empty())
}

fn remove_from(index: &mut HashMap<String, BTreeSet<String>>, term: &str, key: &str) {
    if let Some(set) = index.get_mut(term) {
        set.remove(key);
        if set.is_empty() {
            index.remove(term);
        }
    }
}

impl MetadataStore {
    /// Opens the store in `location`, creating it when absent.
    pub fn open(location: impl AsRef<Path>) -> Result<Self, StoreError> {
        let location = location.as_ref().to_path_buf();
        fs::create_dir_all(&location)?;
        let log_path = location.join(LOG_FILE);
        let mut store = MetadataStore {
            log: BufWriter::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&log_path)?,
            ),
            location,
            by_key: HashMap::new(),
            by_doi: HashMap::new(),
            by_norm_title: HashMap::new(),
        };
        store.replay(&log_path)?;
        Ok(store)
    }

    fn replay(&mut self, log_path: &Path) -> Result<(), StoreError> {
        let mut lines = BufReader::new(File::open(log_path)?).lines();
        match lines.next() {
            None => {
                let header = Header {
                    format: STORE_FORMAT.into(),
                    version: STORE_VERSION,
                };
                serde_json::to_writer(&mut self.log, &header)?;
                self.log.write_all(b"\n")?;
                self.log.flush()?;
                return Ok(());
            }
            Some(first) => {
                let first = first?;
                let ok = serde_json::from_str::<Header>(&first)
                    .map(|h| h.format == STORE_FORMAT && h.version == STORE_VERSION)
                    .unwrap_or(false);
                if !ok {
                    return Err(StoreError::Version {
                        path: log_path.to_path_buf(),
                        found: first,
                    });
                }
            }
        }
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let record: DblpRecord =
                serde_json::from_str(&line).map_err(|source| StoreError::Corrupt {
                    path: log_path.to_path_buf(),
                    line: n + 2,
                    source,
                })?;
            self.index(record);
        }
        Ok(())
    }

    fn index(&mut self, record: DblpRecord) {
        if let Some(old) = self.by_key.remove(&record.key) {
            if let Some(d) = index_doi(&old) {
                remove_from(&mut self.by_doi, &d, &old.key);
            }
            if let Some(t) = index_title(&old) {
                remove_from(&mut self.by_norm_title, &t, &old.key);
            }
        }
        if let Some(d) = index_doi(&record) {
            self.by_doi.entry(d).or_default().insert(record.key.clone());
        }
        if let Some(t) = index_title(&record) {
            self.by_norm_title
                .entry(t)
                .or_default()
                .insert(record.key.clone());
        }
        self.by_key.insert(record.key.clone(), record);
    }

    /// Inserts or replaces the record stored under `record.key`.
    pub fn upsert(&mut self, record: DblpRecord) -> Result<(), StoreError> {
        if record.key.is_empty() {
            return Err(StoreError::EmptyKey);
        }
        serde_json::to_writer(&mut self.log, &record)?;
        self.log.write_all(b"\n")?;
        self.index(record);
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), StoreError> {
        self.log.flush()?;
        Ok(())
    }

    /// Rewrites the log with one line per live record, ordered by key.
    pub fn compact(&mut self) -> Result<(), StoreError> {
        self.log.flush()?;
        let log_path = self.location.join(LOG_FILE);
        let tmp = self.location.join(format!("{LOG_FILE}.tmp"));
        {
            let mut out = BufWriter::new(File::create(&tmp)?);
            let header = Header {
                format: STORE_FORMAT.into(),
                version: STORE_VERSION,
            };
            serde_json::to_writer(&mut out, &header)?;
            out.write_all(b"\n")?;
            let mut keys: Vec<&String> = self.by_key.keys().collect();
            keys.sort();
            for key in keys {
                serde_json::to_writer(&mut out, &self.by_key[key])?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
        fs::rename(&tmp, &log_path)?;
        self.log = BufWriter::new(OpenOptions::new().append(true).open(&log_path)?);
        Ok(())
    }

    /// Flushes pending writes and releases the log.
    pub fn close(mut self) -> Result<(), StoreError> {
        self.log.flush()?;
        Ok(())
    }

    pub fn location(&self) -> &Path {
        &self.location
    }

    pub fn len(&self) -> usize {
        self.by_key.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }

    pub fn stats(&self) -> StoreStats {
        StoreStats {
            record_count: self.by_key.len(),
            doi_keys: self.by_doi.len(),
            title_keys: self.by_norm_title.len(),
        }
    }

    /// Exact, case-sensitive key lookup.
    pub fn get_by_key(&self, key: &str) -> Option<&DblpRecord> {
        self.by_key.get(key)
    }

    /// Records whose DOI normalizes to the same value as `doi`, ordered by key.
    pub fn get_by_doi(&self, doi: &str) -> Vec<&DblpRecord> {
        self.candidates(&self.by_doi, &normalize_doi(doi))
    }

    /// Records whose title normalizes to the same value as `title`, ordered by key.
    pub fn get_by_title(&self, title: &str) -> Vec<&DblpRecord> {
        self.candidates(&self.by_norm_title, &normalize_title(title))
    }

    fn candidates(&self, index: &HashMap<String, BTreeSet<String>>, term: &str) -> Vec<&DblpRecord> {
        if term.is_empty() {
            return Vec::new();
        }
        index
            .get(term)
            .map(|keys| keys.iter().filter_map(|k| self.by_key.get(k)).collect())
            .unwrap_or_default()
    }

    pub fn records(&self) -> impl Iterator<Item = &DblpRecord> {
        self.by_key.values()
    }
}
