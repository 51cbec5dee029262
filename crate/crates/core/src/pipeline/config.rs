use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::ServicePolicy;
use crate::harvest::HarvestPolicy;
use crate::ingest::PubType;

pub const ENV_PREFIX: &str = "NODOI_";
pub const DEFAULT_ENDPOINT: &str = "http://localhost:8070";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("invalid setting {key}: {message}")]
    Invalid { key: &'static str, message: String },
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub corpus_path: Option<PathBuf>,
    pub workdir: PathBuf,
    pub extraction_endpoint: String,
    pub consolidate_citations: bool,
    /// Worker threads for convert and match, and extraction requests in flight.
    pub concurrency: usize,
    pub strict: bool,
    /// Publication types whose open-access, DOI-less records are harvested.
    pub harvest_types: Vec<PubType>,
    pub harvest: HarvestPolicy,
    pub extraction: ServicePolicy,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus_path: None,
            workdir: PathBuf::from("work"),
            extraction_endpoint: DEFAULT_ENDPOINT.to_string(),
            consolidate_citations: true,
            concurrency: 4,
            strict: false,
            harvest_types: vec![PubType::Inproceedings],
            harvest: HarvestPolicy::default(),
            extraction: ServicePolicy::default(),
        }
    }
}

/// One layer of optional overrides. The config file, the environment and
/// command-line flags each produce one; later layers win.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub corpus_path: Option<PathBuf>,
    pub workdir: Option<PathBuf>,
    pub extraction_endpoint: Option<String>,
    pub consolidate_citations: Option<bool>,
    pub concurrency: Option<usize>,
    pub strict: Option<bool>,
    pub harvest_types: Option<Vec<PubType>>,
    pub harvest_max_concurrency: Option<usize>,
    pub harvest_per_host_concurrency: Option<usize>,
    pub harvest_retries: Option<u32>,
    pub harvest_timeout_ms: Option<u64>,
    pub harvest_backoff_ms: Option<u64>,
    pub user_agent: Option<String>,
    pub extraction_retries: Option<u32>,
    pub extraction_timeout_ms: Option<u64>,
    pub extraction_backoff_ms: Option<u64>,
    pub http_proxy: Option<String>,
}

const KEYS: &[&str] = &[
    "corpus_path",
    "workdir",
    "extraction_endpoint",
    "consolidate_citations",
    "concurrency",
    "strict",
    "harvest_types",
    "harvest_max_concurrency",
    "harvest_per_host_concurrency",
    "harvest_retries",
    "harvest_timeout_ms",
    "harvest_backoff_ms",
    "user_agent",
    "extraction_retries",
    "extraction_timeout_ms",
    "extraction_backoff_ms",
    "http_proxy",
];

const STRING_KEYS: &[&str] = &[
    "corpus_path",
    "workdir",
    "extraction_endpoint",
    "user_agent",
    "http_proxy",
];

impl ConfigLayer {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            origin: origin.to_string(),
            message: e.to_string(),
        })
    }

    /// Reads a file of `key = value` lines. Relative paths inside are
    /// resolved against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut layer = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut layer.corpus_path, &mut layer.workdir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(layer)
    }

    /// Picks up `NODOI_<KEY>` variables, e.g. `NODOI_CONCURRENCY=8`.
    /// Unrelated variables are ignored.
    pub fn from_env<I>(vars: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = toml::Table::new();
        for (name, value) in vars {
            let Some(suffix) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = suffix.to_ascii_lowercase();
            let Some(&key) = KEYS.iter().find(|k| **k == key) else {
                continue;
            };
            let parsed = if STRING_KEYS.contains(&key) {
                toml::Value::String(value)
            } else if key == "harvest_types" {
                toml::Value::Array(
                    value
                        .split(',')
                        .map(|s| toml::Value::String(s.trim().to_string()))
                        .filter(|v| v.as_str() != Some(""))
                        .collect(),
                )
            } else {
                format!("v = {value}")
                    .parse::<toml::Table>()
                    .ok()
                    .and_then(|mut t| t.remove("v"))
                    .unwrap_or(toml::Value::String(value))
            };
            table.insert(key.to_string(), parsed);
        }
        table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
            origin: "environment".to_string(),
            message: e.to_string(),
        })
    }

    pub fn apply(&self, cfg: &mut PipelineConfig) {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        if self.corpus_path.is_some() {
            cfg.corpus_path = self.corpus_path.clone();
        }
        set(&mut cfg.workdir, &self.workdir);
        set(&mut cfg.extraction_endpoint, &self.extraction_endpoint);
        set(&mut cfg.consolidate_citations, &self.consolidate_citations);
        set(&mut cfg.concurrency, &self.concurrency);
        set(&mut cfg.strict, &self.strict);
        set(&mut cfg.harvest_types, &self.harvest_types);
        set(&mut cfg.harvest.max_concurrency, &self.harvest_max_concurrency);
        set(&mut cfg.harvest.per_host_concurrency, &self.harvest_per_host_concurrency);
        set(&mut cfg.harvest.retries, &self.harvest_retries);
        set(&mut cfg.harvest.user_agent, &self.user_agent);
        set(&mut cfg.extraction.retries, &self.extraction_retries);
        let ms = |v: &Option<u64>| v.map(Duration::from_millis);
        set(&mut cfg.harvest.timeout, &ms(&self.harvest_timeout_ms));
        set(&mut cfg.harvest.backoff_base, &ms(&self.harvest_backoff_ms));
        set(&mut cfg.extraction.timeout, &ms(&self.extraction_timeout_ms));
        set(&mut cfg.extraction.backoff_base, &ms(&self.extraction_backoff_ms));
        if let Some(proxy) = &self.http_proxy {
            let proxy = (!proxy.is_empty()).then(|| proxy.clone());
            cfg.harvest.proxy = proxy.clone();
            cfg.extraction.proxy = proxy;
        }
    }
}

impl PipelineConfig {
    /// Defaults, then each layer in order.
    pub fn resolve<'a, I>(layers: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = &'a ConfigLayer>,
    {
        let mut cfg = PipelineConfig::default();
        for layer in layers {
            layer.apply(&mut cfg);
        }
        cfg.validate()?;
        cfg.extraction.max_in_flight = cfg.concurrency;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key, message: &str| ConfigError::Invalid {
            key,
            message: message.to_string(),
        };
        if self.concurrency == 0 {
            return Err(invalid("concurrency", "must be at least 1"));
        }
        if self.harvest.max_concurrency == 0 {
            return Err(invalid("harvest_max_concurrency", "must be at least 1"));
        }
        if self.harvest.per_host_concurrency == 0 {
            return Err(invalid("harvest_per_host_concurrency", "must be at least 1"));
        }
        if url::Url::parse(&self.extraction_endpoint).is_err() {
            return Err(invalid("extraction_endpoint", "not a URL"));
        }
        Ok(())
    }
}
