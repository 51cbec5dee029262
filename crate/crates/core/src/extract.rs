//! Client for the external PDF-to-TEI extraction service.
//!
//! PDFs are uploaded as multipart form data to the service's full-text
//! route. Citation consolidation is a flag forwarded to the service; this
//! client only ever talks to the configured endpoint.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use reqwest::multipart::{Form, Part};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Semaphore;
use url::Url;

use crate::backoff;
use crate::harvest::{build_client, duration_ms, is_pdf_file};
use crate::mock::{ALIVE_ROUTE, FULLTEXT_ROUTE};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("invalid endpoint {0:?}: {1}")]
    Endpoint(String, url::ParseError),
    #[error("cannot build HTTP client: {0}")]
    Client(#[from] reqwest::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRequest {
    pub key: String,
    pub pdf_path: PathBuf,
    pub consolidate_citations: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceStatus {
    Ok,
    ServiceError,
    UnparseablePdf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub key: String,
    #[serde(skip)]
    pub tei_xml: String,
    pub service_status: ServiceStatus,
    pub duration_ms: u64,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServicePolicy {
    /// Requests in flight at once.
    pub max_in_flight: usize,
    /// Additional attempts after a 5xx or timeout.
    pub retries: u32,
    #[serde(with = "duration_ms")]
    pub timeout: Duration,
    #[serde(with = "duration_ms")]
    pub backoff_base: Duration,
    pub proxy: Option<String>,
}

impl Default for ServicePolicy {
    fn default() -> Self {
        ServicePolicy {
            max_in_flight: 4,
            retries: 3,
            timeout: Duration::from_secs(120),
            backoff_base: Duration::from_millis(500),
            proxy: None,
        }
    }
}

/// A TEI body is accepted only if it parses and has a bibliography list.
pub fn is_usable_tei(tei: &str) -> bool {
    roxmltree::Document::parse(tei)
        .map(|doc| {
            doc.descendants()
                .any(|n| n.is_element() && n.tag_name().name() == "listBibl")
        })
        .unwrap_or(false)
}

fn base_url(endpoint: &str) -> Result<Url, ExtractError> {
    let mut s = endpoint.trim().to_string();
    if !s.ends_with('/') {
        s.push('/');
    }
    Url::parse(&s).map_err(|e| ExtractError::Endpoint(endpoint.to_string(), e))
}

fn route(base: &Url, route: &str) -> Url {
    base.join(route.trim_start_matches('/')).expect("static route")
}

#[derive(Clone)]
pub struct ExtractionClient {
    base: Url,
    http: reqwest::Client,
    policy: ServicePolicy,
}

enum Outcome {
    Tei(String),
    Retry,
    Reject,
    Invalid,
}

impl ExtractionClient {
    pub fn new(endpoint: &str, policy: ServicePolicy) -> Result<Self, ExtractError> {
        let http = build_client(
            policy.timeout,
            concat!("nodoi/", env!("CARGO_PKG_VERSION")),
            policy.proxy.as_deref(),
        )?;
        Ok(ExtractionClient {
            base: base_url(endpoint)?,
            http,
            policy,
        })
    }

    pub fn endpoint(&self) -> &Url {
        &self.base
    }

    /// True iff the liveness route answers with a success status.
    pub async fn health_check(&self) -> bool {
        let url = route(&self.base, ALIVE_ROUTE);
        match self.http.get(url).send().await {
            Ok(resp) => resp.status().is_success(),
            Err(_) => false,
        }
    }

    async fn attempt(&self, request: &ExtractionRequest, pdf: &[u8]) -> Outcome {
        let file_name = format!("{}.pdf", crate::sanitize_key(&request.key));
        let part = match Part::bytes(pdf.to_vec())
            .file_name(file_name)
            .mime_str("application/pdf")
        {
            Ok(p) => p,
            Err(_) => return Outcome::Reject,
        };
        let flag = if request.consolidate_citations { "1" } else { "0" };
        let form = Form::new()
            .part("input", part)
            .text("consolidateCitations", flag)
            .text("includeRawCitations", "1");
        let url = route(&self.base, FULLTEXT_ROUTE);
        let resp = match self.http.post(url).multipart(form).send().await {
            Ok(r) => r,
            Err(_) => return Outcome::Retry,
        };
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Outcome::Retry;
        }
        if status.is_client_error() || status.as_u16() == 204 {
            return Outcome::Reject;
        }
        match resp.text().await {
            Ok(body) if is_usable_tei(&body) => Outcome::Tei(body),
            Ok(_) => Outcome::Invalid,
            Err(_) => Outcome::Retry,
        }
    }

    /// Uploads one PDF and returns the service's TEI verbatim on success.
    pub async fn submit_pdf(&self, request: &ExtractionRequest) -> ExtractionResult {
        let started = Instant::now();
        let mut result = ExtractionResult {
            key: request.key.clone(),
            tei_xml: String::new(),
            service_status: ServiceStatus::UnparseablePdf,
            duration_ms: 0,
            attempts: 0,
        };
        let pdf = match fs::read(&request.pdf_path) {
            Ok(bytes) if is_pdf_file(&request.pdf_path) => bytes,
            _ => return result,
        };
        result.service_status = ServiceStatus::ServiceError;
        for attempt in 0..=self.policy.retries {
            if attempt > 0 {
                tokio::time::sleep(backoff::delay(self.policy.backoff_base, attempt - 1)).await;
            }
            result.attempts += 1;
            match self.attempt(request, &pdf).await {
                Outcome::Tei(tei) => {
                    result.tei_xml = tei;
                    result.service_status = ServiceStatus::Ok;
                    break;
                }
                Outcome::Reject => {
                    result.service_status = ServiceStatus::UnparseablePdf;
                    break;
                }
                Outcome::Invalid => {
                    result.service_status = ServiceStatus::ServiceError;
                    break;
                }
                Outcome::Retry => result.service_status = ServiceStatus::ServiceError,
            }
        }
        result.duration_ms = started.elapsed().as_millis() as u64;
        result
    }

    /// Submits every request with at most `max_in_flight` running at once;
    /// results come back sorted by key.
    pub async fn submit_batch(&self, requests: Vec<ExtractionRequest>) -> Vec<ExtractionResult> {
        let gate = Arc::new(Semaphore::new(self.policy.max_in_flight.max(1)));
        let mut tasks = Vec::with_capacity(requests.len());
        for request in requests {
            let client = self.clone();
            let gate = Arc::clone(&gate);
            tasks.push(tokio::spawn(async move {
                let _permit = gate.acquire().await.expect("semaphore closed");
                client.submit_pdf(&request).await
            }));
        }
        let mut results = Vec::with_capacity(tasks.len());
        for task in tasks {
            results.push(task.await.expect("extraction task panicked"));
        }
        results.sort_by(|a, b| a.key.cmp(&b.key));
        results
    }
}

/// Liveness probe for `endpoint` with the given timeout.
pub async fn health_check(endpoint: &str, timeout: Duration) -> bool {
    let policy = ServicePolicy {
        timeout,
        ..ServicePolicy::default()
    };
    match ExtractionClient::new(endpoint, policy) {
        Ok(client) => client.health_check().await,
        Err(_) => false,
    }
}

/// Stores a TEI body as `<sanitized-key>.tei.xml` under `dir`.
pub fn tei_file_name(key: &str) -> String {
    format!("{}.tei.xml", crate::sanitize_key(key))
}

pub fn write_tei(dir: &Path, result: &ExtractionResult) -> std::io::Result<PathBuf> {
    let path = dir.join(tei_file_name(&result.key));
    fs::write(&path, &result.tei_xml)?;
    Ok(path)
}
