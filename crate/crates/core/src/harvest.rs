//! Polite PDF downloader for open-access links.
//!
//! Each record's open links are tried in order until one yields a PDF.
//! Downloads are bounded by a global cap and a per-host cap; transient
//! failures (5xx, 429, timeouts, connection errors) are retried with
//! exponential backoff.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::backoff;
use crate::ingest::{Access, DblpRecord};
use crate::sanitize_key;

pub const PDF_MAGIC: &[u8] = b"%PDF-";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

pub fn is_pdf(bytes: &[u8]) -> bool {
    bytes.starts_with(PDF_MAGIC)
}

/// True when `path` exists, is non-empty and starts with the PDF magic.
pub fn is_pdf_file(path: &Path) -> bool {
    use std::io::Read;
    let Ok(mut f) = fs::File::open(path) else {
        return false;
    };
    let mut head = [0u8; 5];
    f.read_exact(&mut head).is_ok() && is_pdf(&head)
}

#[derive(Debug, Error)]
pub enum HarvestError {
    #[error("cannot build HTTP client: {0}")]
    Client(#[from] reqwest::Error),
    #[error("manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestPolicy {
    pub max_concurrency: usize,
    /// Upper bound on simultaneous requests to one host.
    pub per_host_concurrency: usize,
    /// Additional attempts after the first.
    pub retries: u32,
    #[serde(with = "duration_ms")]
    pub timeout: Duration,
    #[serde(with = "duration_ms")]
    pub backoff_base: Duration,
    pub user_agent: String,
    /// Optional HTTP proxy every request is routed through.
    pub proxy: Option<String>,
}

impl Default for HarvestPolicy {
    fn default() -> Self {
        HarvestPolicy {
            max_concurrency: 8,
            per_host_concurrency: 2,
            retries: 3,
            timeout: Duration::from_secs(30),
            backoff_base: Duration::from_millis(500),
            user_agent: concat!("nodoi/", env!("CARGO_PKG_VERSION")).to_string(),
            proxy: None,
        }
    }
}

pub(crate) mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarvestStatus {
    Ok,
    HttpError,
    NotPdf,
    Timeout,
    SkippedExisting,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestManifestEntry {
    pub key: String,
    pub source_url: String,
    pub local_path: PathBuf,
    pub status: HarvestStatus,
    pub bytes: u64,
    pub fetched_at: DateTime<Utc>,
}

impl HarvestManifestEntry {
    pub fn has_pdf(&self) -> bool {
        matches!(self.status, HarvestStatus::Ok | HarvestStatus::SkippedExisting)
    }
}

pub fn pdf_file_name(key: &str) -> String {
    format!("{}.pdf", sanitize_key(key))
}

pub(crate) fn build_client(
    timeout: Duration,
    user_agent: &str,
    proxy: Option<&str>,
) -> Result<reqwest::Client, reqwest::Error> {
    let builder = reqwest::Client::builder()
        .timeout(timeout)
        .redirect(reqwest::redirect::Policy::limited(5))
        .user_agent(user_agent);
    let builder = match proxy {
        Some(p) => builder.proxy(reqwest::Proxy::all(p)?),
        None => builder.no_proxy(),
    };
    builder.build()
}

#[derive(Default)]
struct HostGates {
    gates: Mutex<HashMap<String, Arc<Semaphore>>>,
}

impl HostGates {
    fn gate(&self, host: &str, permits: usize) -> Arc<Semaphore> {
        let mut gates = self.gates.lock().unwrap();
        gates
            .entry(host.to_string())
            .or_insert_with(|| Arc::new(Semaphore::new(permits.max(1))))
            .clone()
    }
}

enum Attempt {
    Pdf(Vec<u8>),
    NotPdf,
    Fatal,
    Retryable(HarvestStatus),
}

struct Harvester {
    client: reqwest::Client,
    policy: HarvestPolicy,
    global: Semaphore,
    hosts: HostGates,
}

impl Harvester {
    async fn attempt(&self, url: &str) -> Attempt {
        let host = url::Url::parse(url)
            .ok()
            .and_then(|u| u.host_str().map(|h| format!("{h}:{}", u.port_or_known_default().unwrap_or(0))))
            .unwrap_or_default();
        let gate = self.hosts.gate(&host, self.policy.per_host_concurrency);
        let _global = self.global.acquire().await.expect("semaphore closed");
        let _host = gate.acquire().await.expect("semaphore closed");

        let response = match self.client.get(url).send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retryable(HarvestStatus::Timeout),
            Err(e) if e.is_builder() => return Attempt::Fatal,
            Err(_) => return Attempt::Retryable(HarvestStatus::HttpError),
        };
        let status = response.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Attempt::Retryable(HarvestStatus::HttpError);
        }
        if !status.is_success() {
            return Attempt::Fatal;
        }
        match response.bytes().await {
            Ok(body) if is_pdf(&body) => Attempt::Pdf(body.to_vec()),
            Ok(_) => Attempt::NotPdf,
            Err(e) if e.is_timeout() => Attempt::Retryable(HarvestStatus::Timeout),
            Err(_) => Attempt::Retryable(HarvestStatus::HttpError),
        }
    }

    async fn fetch(&self, key: &str, url: &str, target: &Path) -> HarvestManifestEntry {
        let mut entry = HarvestManifestEntry {
            key: key.to_string(),
            source_url: url.to_string(),
            local_path: target.to_path_buf(),
            status: HarvestStatus::HttpError,
            bytes: 0,
            fetched_at: Utc::now(),
        };
        for attempt in 0..=self.policy.retries {
            if attempt > 0 {
                tokio::time::sleep(backoff::delay(self.policy.backoff_base, attempt - 1)).await;
            }
            match self.attempt(url).await {
                Attempt::Pdf(body) => {
                    let tmp = target.with_extension("pdf.part");
                    let written = fs::write(&tmp, &body).and_then(|_| fs::rename(&tmp, target));
                    entry.fetched_at = Utc::now();
                    match written {
                        Ok(()) => {
                            entry.status = HarvestStatus::Ok;
                            entry.bytes = body.len() as u64;
                        }
                        Err(e) => {
                            log::warn!("{key}: cannot store {}: {e}", target.display());
                            entry.status = HarvestStatus::HttpError;
                        }
                    }
                    return entry;
                }
                Attempt::NotPdf => {
                    entry.status = HarvestStatus::NotPdf;
                    break;
                }
                Attempt::Fatal => {
                    entry.status = HarvestStatus::HttpError;
                    break;
                }
                Attempt::Retryable(status) => entry.status = status,
            }
        }
        entry.fetched_at = Utc::now();
        entry
    }

    async fn harvest_record(
        &self,
        record: &DblpRecord,
        out_dir: &Path,
        previous: &HashMap<String, Vec<HarvestManifestEntry>>,
    ) -> Vec<HarvestManifestEntry> {
        let target = out_dir.join(pdf_file_name(&record.key));
        let links: Vec<&str> = record
            .ee_links
            .iter()
            .filter(|l| l.access == Access::Open)
            .map(|l| l.url.as_str())
            .collect();
        if links.is_empty() {
            return Vec::new();
        }

        if is_pdf_file(&target) {
            return skipped_entries(record, &links, &target, previous.get(&record.key));
        }

        let mut entries = Vec::new();
        for url in links {
            let entry = self.fetch(&record.key, url, &target).await;
            let done = entry.status == HarvestStatus::Ok;
            entries.push(entry);
            if done {
                break;
            }
        }
        entries
    }
}

fn skipped_entries(
    record: &DblpRecord,
    links: &[&str],
    target: &Path,
    previous: Option<&Vec<HarvestManifestEntry>>,
) -> Vec<HarvestManifestEntry> {
    let bytes = fs::metadata(target).map(|m| m.len()).unwrap_or(0);
    if let Some(prev) = previous.filter(|p| p.iter().any(|e| e.has_pdf())) {
        return prev
            .iter()
            .map(|e| {
                let mut e = e.clone();
                if e.status == HarvestStatus::Ok {
                    e.status = HarvestStatus::SkippedExisting;
                }
                e
            })
            .collect();
    }
    let fetched_at = fs::metadata(target)
        .and_then(|m| m.modified())
        .map(DateTime::<Utc>::from)
        .unwrap_or_else(|_| Utc::now());
    vec![HarvestManifestEntry {
        key: record.key.clone(),
        source_url: links[0].to_string(),
        local_path: target.to_path_buf(),
        status: HarvestStatus::SkippedExisting,
        bytes,
        fetched_at,
    }]
}

/// Downloads one PDF per record into `out_dir` and writes the manifest
/// next to them. Per-link failures are recorded, never raised.
pub async fn harvest(
    records: Vec<DblpRecord>,
    out_dir: &Path,
    policy: &HarvestPolicy,
) -> Result<Vec<HarvestManifestEntry>, HarvestError> {
    fs::create_dir_all(out_dir)?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let mut previous: HashMap<String, Vec<HarvestManifestEntry>> = HashMap::new();
    if manifest_path.exists() {
        for entry in read_manifest(&manifest_path)? {
            previous.entry(entry.key.clone()).or_default().push(entry);
        }
    }

    let harvester = Arc::new(Harvester {
        client: build_client(policy.timeout, &policy.user_agent, policy.proxy.as_deref())?,
        policy: policy.clone(),
        global: Semaphore::new(policy.max_concurrency.max(1)),
        hosts: HostGates::default(),
    });
    let previous = Arc::new(previous);
    let out_dir = Arc::new(out_dir.to_path_buf());

    let mut tasks = Vec::with_capacity(records.len());
    for record in records {
        let harvester = Arc::clone(&harvester);
        let previous = Arc::clone(&previous);
        let out_dir = Arc::clone(&out_dir);
        tasks.push(tokio::spawn(async move {
            harvester.harvest_record(&record, &out_dir, &previous).await
        }));
    }
    let mut entries = Vec::new();
    for task in tasks {
        entries.extend(task.await.expect("harvest task panicked"));
    }
    entries.sort_by(|a, b| a.key.cmp(&b.key));
    write_manifest(&manifest_path, &entries)?;
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[HarvestManifestEntry]) -> Result<(), HarvestError> {
    let wrap = |source| HarvestError::Manifest {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(fs::File::create(path).map_err(wrap)?);
    for e in entries {
        serde_json::to_writer(&mut out, e).map_err(|e| wrap(e.into()))?;
        out.write_all(b"\n").map_err(wrap)?;
    }
    out.flush().map_err(wrap)
}

pub fn read_manifest(path: &Path) -> Result<Vec<HarvestManifestEntry>, HarvestError> {
    let wrap = |source| HarvestError::Manifest {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::open(path).map_err(wrap)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(wrap)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| wrap(e.into()))?);
    }
    Ok(out)
}
