//! Stage orchestration over a work directory.
//!
//! Each stage reads the previous stage's directory and writes its own,
//! finishing with a `.done.json` stamp that records fingerprints of its
//! inputs and outputs. A stage whose stamp still matches is skipped.
//!
//! ```text
//! <workdir>/
//!   ingest/    <type>.csv, manifest.json
//!   store/     records.jsonl
//!   harvest/   <key>.pdf, manifest.jsonl, index.json
//!   extract/   <key>.tei.xml, manifest.jsonl, index.json
//!   convert/   <key>.json, manifest.json
//!   match/     matches.jsonl
//!   export/    dataset.jsonl, stats.json, stats.txt
//!   run-manifest.json
//! ```

mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{ConfigError, ConfigLayer, PipelineConfig, DEFAULT_ENDPOINT, ENV_PREFIX};

use crate::convert::{self, ExtractedDocument};
use crate::exec::{map_ordered, Execution};
use crate::export::{export_jsonl, PipelineStats};
use crate::extract::{self, ExtractionClient, ExtractionRequest, ExtractionResult, ServiceStatus};
use crate::harvest::{self, HarvestManifestEntry, HarvestStatus, MANIFEST_FILE};
use crate::ingest::{self, DblpReader, PubType};
use crate::matcher::{build_citation_record, match_documents, DocumentMatches};
use crate::store::MetadataStore;

pub const EXIT_OK: i32 = 0;
pub const EXIT_STAGE_FAILED: i32 = 1;
pub const EXIT_MISSING_PREREQUISITE: i32 = 2;
pub const EXIT_INVARIANT: i32 = 3;

pub const STAMP_FILE: &str = ".done.json";
pub const RUN_MANIFEST: &str = "run-manifest.json";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const MATCHES_FILE: &str = "matches.jsonl";
/// Per-item outcomes without timings, so they can be fingerprinted.
pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    LoadStore,
    Harvest,
    Extract,
    Convert,
    Match,
    Export,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::LoadStore,
        Stage::Harvest,
        Stage::Extract,
        Stage::Convert,
        Stage::Match,
        Stage::Export,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::LoadStore => "load-store",
            Stage::Harvest => "harvest",
            Stage::Extract => "extract",
            Stage::Convert => "convert",
            Stage::Match => "match",
            Stage::Export => "export",
        }
    }

    /// Directory under the workdir holding this stage's outputs.
    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::LoadStore => "store",
            other => other.as_str(),
        }
    }

    /// `all` expands to every stage in order.
    pub fn parse_selection(s: &str) -> Option<Vec<Stage>> {
        if s == "all" {
            return Some(Stage::ALL.to_vec());
        }
        s.parse().ok().map(|stage| vec![stage])
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|stage| stage.as_str() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: missing prerequisite: {message}")]
    MissingPrerequisite { stage: Stage, message: String },
    #[error("{stage}: invariant violated: {message}")]
    Invariant { stage: Stage, message: String },
    #[error("{stage} failed: {message}")]
    Failed { stage: Stage, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::MissingPrerequisite { .. } | PipelineError::Config(_) => {
                EXIT_MISSING_PREREQUISITE
            }
            PipelineError::Invariant { .. } => EXIT_INVARIANT,
            PipelineError::Failed { .. } => EXIT_STAGE_FAILED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOutcome {
    Completed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub outcome: StageOutcome,
    pub summary: Value,
    pub warnings: Vec<String>,
}

impl fmt::Display for StageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let outcome = match self.outcome {
            StageOutcome::Completed => "completed",
            StageOutcome::Skipped => "skipped (up to date)",
        };
        write!(f, "{:<10} {outcome}  {}", self.stage.as_str(), self.summary)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Stamp {
    stage: Stage,
    input: String,
    output: String,
    completed_at: DateTime<Utc>,
    summary: Value,
}

struct Done {
    summary: Value,
    warnings: Vec<String>,
}

type StageResult = Result<Done, PipelineError>;

fn failed(stage: Stage) -> impl Fn(&dyn fmt::Display) -> PipelineError {
    move |e| PipelineError::Failed {
        stage,
        message: e.to_string(),
    }
}

pub struct Pipeline {
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        Pipeline { config }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.config.workdir.join(stage.dir_name())
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.stage_dir(Stage::Export).join(DATASET_FILE)
    }

    /// Runs `stages` in order, stopping at the first error.
    pub fn run(&self, stages: &[Stage]) -> Result<Vec<StageReport>, PipelineError> {
        let mut reports = Vec::with_capacity(stages.len());
        for &stage in stages {
            let report = self.run_stage(stage)?;
            log::info!("{report}");
            reports.push(report);
        }
        Ok(reports)
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageReport, PipelineError> {
        let input = self.input_fingerprint(stage)?;
        let dir = self.stage_dir(stage);
        let stamp_path = dir.join(STAMP_FILE);
        if let Some(stamp) = read_stamp(&stamp_path) {
            if stamp.input == input && fingerprint_dir(&dir).ok().as_ref() == Some(&stamp.output) {
                return Ok(StageReport {
                    stage,
                    outcome: StageOutcome::Skipped,
                    summary: stamp.summary,
                    warnings: Vec::new(),
                });
            }
        }
        let _ = fs::remove_file(&stamp_path);
        fs::create_dir_all(&dir).map_err(|e| failed(stage)(&e))?;

        let done = match stage {
            Stage::Ingest => self.ingest(),
            Stage::LoadStore => self.load_store(),
            Stage::Harvest => self.harvest(),
            Stage::Extract => self.extract(),
            Stage::Convert => self.convert(),
            Stage::Match => self.match_stage(),
            Stage::Export => self.export(),
        }?;

        let stamp = Stamp {
            stage,
            input,
            output: fingerprint_dir(&dir).map_err(|e| failed(stage)(&e))?,
            completed_at: Utc::now(),
            summary: done.summary.clone(),
        };
        write_json(&stamp_path, &stamp).map_err(|e| failed(stage)(&e))?;
        self.write_run_manifest().map_err(|e| failed(stage)(&e))?;
        Ok(StageReport {
            stage,
            outcome: StageOutcome::Completed,
            summary: done.summary,
            warnings: done.warnings,
        })
    }

    fn prerequisite(&self, stage: Stage, needs: Stage) -> Result<String, PipelineError> {
        read_stamp(&self.stage_dir(needs).join(STAMP_FILE))
            .map(|s| s.output)
            .ok_or_else(|| PipelineError::MissingPrerequisite {
                stage,
                message: format!("stage {needs} has not completed; run it first"),
            })
    }

    fn input_fingerprint(&self, stage: Stage) -> Result<String, PipelineError> {
        let mut h = Sha256::new();
        h.update(concat!("nodoi ", env!("CARGO_PKG_VERSION"), "\n"));
        match stage {
            Stage::Ingest => {
                let path = self.corpus_path()?;
                let file = File::open(path).map_err(|e| failed(stage)(&e))?;
                hash_reader(&mut h, file).map_err(|e| failed(stage)(&e))?;
            }
            Stage::LoadStore => h.update(self.prerequisite(stage, Stage::Ingest)?),
            Stage::Harvest => {
                h.update(self.prerequisite(stage, Stage::Ingest)?);
                for t in &self.config.harvest_types {
                    h.update(t.as_str());
                }
            }
            Stage::Extract => {
                h.update(self.prerequisite(stage, Stage::Harvest)?);
                h.update(if self.config.consolidate_citations { "c1" } else { "c0" });
            }
            Stage::Convert => h.update(self.prerequisite(stage, Stage::Extract)?),
            Stage::Match => {
                h.update(self.prerequisite(stage, Stage::Convert)?);
                h.update(self.prerequisite(stage, Stage::LoadStore)?);
            }
            Stage::Export => h.update(self.prerequisite(stage, Stage::Match)?),
        }
        Ok(hex(&h.finalize()))
    }

    fn corpus_path(&self) -> Result<&Path, PipelineError> {
        let missing = |message: String| PipelineError::MissingPrerequisite {
            stage: Stage::Ingest,
            message,
        };
        let path = self
            .config
            .corpus_path
            .as_deref()
            .ok_or_else(|| missing("no corpus_path configured".into()))?;
        if !path.is_file() {
            return Err(missing(format!("corpus file {} not found", path.display())));
        }
        Ok(path)
    }

    /// Runs `f` with the configured degree of data parallelism.
    fn data_parallel<R: Send>(&self, f: impl FnOnce(Execution) -> R + Send) -> R {
        #[cfg(feature = "parallel")]
        if self.config.concurrency > 1 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new()
                .num_threads(self.config.concurrency)
                .build()
            {
                return pool.install(|| f(Execution::Parallel));
            }
        }
        f(Execution::Sequential)
    }

    fn runtime(&self, stage: Stage) -> Result<tokio::runtime::Runtime, PipelineError> {
        tokio::runtime::Builder::new_multi_thread()
            .worker_threads(self.config.concurrency.clamp(1, 8))
            .enable_all()
            .build()
            .map_err(|e| failed(stage)(&e))
    }

    fn violation(&self, stage: Stage, warnings: &mut Vec<String>, message: String) -> Result<(), PipelineError> {
        if self.config.strict {
            return Err(PipelineError::Invariant { stage, message });
        }
        log::warn!("{stage}: {message}");
        warnings.push(message);
        Ok(())
    }

    fn ingest(&self) -> StageResult {
        let stage = Stage::Ingest;
        let fail = failed(stage);
        let dir = self.stage_dir(stage);
        clear_files(&dir, |name| name.ends_with(".csv") || name.ends_with(".partial"))
            .map_err(|e| fail(&e))?;
        let file = File::open(self.corpus_path()?).map_err(|e| fail(&e))?;
        let mut reader = DblpReader::new(BufReader::with_capacity(1 << 16, file));
        let mut warnings = Vec::new();
        let mut warning_count = 0u64;
        let records = std::iter::from_fn(|| {
            let next = reader.next();
            for w in reader.drain_warnings() {
                warning_count += 1;
                log::warn!("ingest {}: {}", w.key, w.message);
                if warnings.len() < 100 {
                    warnings.push(format!("{}: {}", w.key, w.message));
                }
            }
            next
        });
        let manifest = ingest::split_by_type(records, &dir).map_err(|e| fail(&e))?;

        let types: BTreeMap<&str, Value> = manifest
            .iter()
            .map(|(t, f)| {
                let file = f.path.file_name().map(|n| n.to_string_lossy().into_owned());
                (t.as_str(), json!({ "file": file, "rows": f.rows }))
            })
            .collect();
        let records: u64 = manifest.values().map(|f| f.rows).sum();
        write_json(&dir.join("manifest.json"), &json!({ "records": records, "types": types }))
            .map_err(|e| fail(&e))?;
        Ok(Done {
            summary: json!({ "records": records, "types": manifest.len(), "warnings": warning_count }),
            warnings,
        })
    }

    fn type_files(&self) -> io::Result<Vec<(PubType, PathBuf)>> {
        let dir = self.stage_dir(Stage::Ingest);
        Ok(PubType::ALL
            .into_iter()
            .map(|t| (t, dir.join(ingest::type_file_name(t))))
            .filter(|(_, p)| p.is_file())
            .collect())
    }

    fn load_store(&self) -> StageResult {
        let fail = failed(Stage::LoadStore);
        let dir = self.stage_dir(Stage::LoadStore);
        clear_files(&dir, |_| true).map_err(|e| fail(&e))?;
        let mut store = MetadataStore::open(&dir).map_err(|e| fail(&e))?;
        for (_, path) in self.type_files().map_err(|e| fail(&e))? {
            for record in ingest::read_type_file(&path).map_err(|e| fail(&e))? {
                store.upsert(record.map_err(|e| fail(&e))?).map_err(|e| fail(&e))?;
            }
        }
        store.compact().map_err(|e| fail(&e))?;
        let stats = store.stats();
        store.close().map_err(|e| fail(&e))?;
        Ok(Done {
            summary: serde_json::to_value(stats).map_err(|e| fail(&e))?,
            warnings: Vec::new(),
        })
    }

    fn harvest(&self) -> StageResult {
        let stage = Stage::Harvest;
        let fail = failed(stage);
        let mut candidates = Vec::new();
        for (t, path) in self.type_files().map_err(|e| fail(&e))? {
            if !self.config.harvest_types.contains(&t) {
                continue;
            }
            for record in ingest::read_type_file(&path).map_err(|e| fail(&e))? {
                let record = record.map_err(|e| fail(&e))?;
                if ingest::is_oa_nodoi(&record) {
                    candidates.push(record);
                }
            }
        }
        let candidate_count = candidates.len();
        let dir = self.stage_dir(stage);
        let entries = self
            .runtime(stage)?
            .block_on(harvest::harvest(candidates, &dir, &self.config.harvest))
            .map_err(|e| fail(&e))?;
        let mut by_status: BTreeMap<String, u64> = BTreeMap::new();
        for e in &entries {
            *by_status.entry(status_name(&e.status)).or_default() += 1;
        }
        let with_pdf = entries.iter().filter(|e| e.has_pdf()).count();
        let index: Vec<Value> = entries
            .iter()
            .map(|e| {
                let status = if e.has_pdf() { HarvestStatus::Ok } else { e.status };
                json!({ "key": e.key, "status": status, "bytes": e.bytes })
            })
            .collect();
        write_json(&dir.join(INDEX_FILE), &index).map_err(|e| fail(&e))?;
        Ok(Done {
            summary: json!({ "candidates": candidate_count, "pdfs": with_pdf, "status": by_status }),
            warnings: Vec::new(),
        })
    }

    fn extract(&self) -> StageResult {
        let stage = Stage::Extract;
        let fail = failed(stage);
        let harvested = harvest::read_manifest(&self.stage_dir(Stage::Harvest).join(MANIFEST_FILE))
            .map_err(|e| fail(&e))?;
        let mut requests: BTreeMap<String, ExtractionRequest> = BTreeMap::new();
        for entry in harvested.into_iter().filter(HarvestManifestEntry::has_pdf) {
            requests.entry(entry.key.clone()).or_insert(ExtractionRequest {
                key: entry.key,
                pdf_path: entry.local_path,
                consolidate_citations: self.config.consolidate_citations,
            });
        }

        let dir = self.stage_dir(stage);
        clear_files(&dir, |name| name.ends_with(".tei.xml") || name == MANIFEST_FILE)
            .map_err(|e| fail(&e))?;
        let client = ExtractionClient::new(&self.config.extraction_endpoint, self.config.extraction.clone())
            .map_err(|e| fail(&e))?;
        let rt = self.runtime(stage)?;
        if !rt.block_on(client.health_check()) {
            return Err(PipelineError::Failed {
                stage,
                message: format!(
                    "extraction service at {} is not reachable",
                    self.config.extraction_endpoint
                ),
            });
        }
        let results = rt.block_on(client.submit_batch(requests.into_values().collect()));

        let mut by_status: BTreeMap<String, u64> = BTreeMap::new();
        let mut out = BufWriter::new(File::create(dir.join(MANIFEST_FILE)).map_err(|e| fail(&e))?);
        for r in &results {
            if r.service_status == ServiceStatus::Ok {
                extract::write_tei(&dir, r).map_err(|e| fail(&e))?;
            }
            *by_status.entry(status_name(&r.service_status)).or_default() += 1;
            serde_json::to_writer(&mut out, r).map_err(|e| fail(&e))?;
            out.write_all(b"\n").map_err(|e| fail(&e))?;
        }
        out.flush().map_err(|e| fail(&e))?;
        let index: Vec<Value> = results
            .iter()
            .map(|r| json!({ "key": r.key, "status": r.service_status }))
            .collect();
        write_json(&dir.join(INDEX_FILE), &index).map_err(|e| fail(&e))?;
        Ok(Done {
            summary: json!({ "submitted": results.len(), "status": by_status }),
            warnings: Vec::new(),
        })
    }

    fn convert(&self) -> StageResult {
        let stage = Stage::Convert;
        let fail = failed(stage);
        let tei_dir = self.stage_dir(Stage::Extract);
        let keys: Vec<String> = read_jsonl::<ExtractionResult>(&tei_dir.join(MANIFEST_FILE))
            .map_err(|e| fail(&e))?
            .into_iter()
            .filter(|r| r.service_status == ServiceStatus::Ok)
            .map(|r| r.key)
            .collect();

        let dir = self.stage_dir(stage);
        clear_files(&dir, |name| name.ends_with(".json")).map_err(|e| fail(&e))?;
        let converted = self.data_parallel(|exec| {
            map_ordered(&keys, exec, |key| {
                let tei = fs::read_to_string(tei_dir.join(extract::tei_file_name(key)))
                    .map_err(|e| e.to_string())?;
                let doc = convert::convert(key, &tei).map_err(|e| e.to_string())?;
                convert::write_document(&dir, &doc).map_err(|e| e.to_string())?;
                Ok::<usize, String>(doc.references.len())
            })
        });

        let mut warnings = Vec::new();
        let mut failures = BTreeMap::new();
        let mut references = 0;
        for (key, outcome) in keys.iter().zip(converted) {
            match outcome {
                Ok(n) => references += n,
                Err(message) => {
                    log::warn!("convert {key}: {message}");
                    warnings.push(format!("{key}: {message}"));
                    failures.insert(key.clone(), message);
                }
            }
        }
        let documents = keys.len() - failures.len();
        write_json(
            &dir.join("manifest.json"),
            &json!({ "documents": documents, "references": references, "failures": failures }),
        )
        .map_err(|e| fail(&e))?;
        Ok(Done {
            summary: json!({ "documents": documents, "references": references, "failures": failures.len() }),
            warnings,
        })
    }

    fn match_stage(&self) -> StageResult {
        let stage = Stage::Match;
        let fail = failed(stage);
        let store = MetadataStore::open(self.stage_dir(Stage::LoadStore)).map_err(|e| fail(&e))?;
        let docs = read_documents(&self.stage_dir(Stage::Convert)).map_err(|e| fail(&e))?;
        let matched = self.data_parallel(|exec| match_documents(&docs, &store, exec));

        let mut warnings = Vec::new();
        for doc in &matched {
            if store.get_by_key(&doc.key).is_none() {
                self.violation(stage, &mut warnings, format!("citing key {} is not in the store", doc.key))?;
            }
            for (i, r) in doc.results.iter().enumerate() {
                if !r.is_consistent() {
                    self.violation(
                        stage,
                        &mut warnings,
                        format!("{}: reference {} has an inconsistent match result", doc.key, r.reference.ordinal),
                    )?;
                }
                if r.reference.ordinal as usize != i {
                    self.violation(
                        stage,
                        &mut warnings,
                        format!("{}: reference ordinals are not contiguous at {i}", doc.key),
                    )?;
                }
            }
        }

        let dir = self.stage_dir(stage);
        let mut out = BufWriter::new(File::create(dir.join(MATCHES_FILE)).map_err(|e| fail(&e))?);
        let mut matched_refs = 0usize;
        for doc in &matched {
            matched_refs += doc.results.iter().filter(|r| r.is_matched()).count();
            serde_json::to_writer(&mut out, doc).map_err(|e| fail(&e))?;
            out.write_all(b"\n").map_err(|e| fail(&e))?;
        }
        out.flush().map_err(|e| fail(&e))?;
        Ok(Done {
            summary: json!({ "documents": matched.len(), "matched_references": matched_refs }),
            warnings,
        })
    }

    fn export(&self) -> StageResult {
        let stage = Stage::Export;
        let fail = failed(stage);
        let dir = self.stage_dir(stage);
        let matches = File::open(self.stage_dir(Stage::Match).join(MATCHES_FILE)).map_err(|e| fail(&e))?;

        let mut stats = PipelineStats::default();
        let mut invalid: Option<PipelineError> = None;
        let mut read_error: Option<PipelineError> = None;
        let records = BufReader::new(matches).lines().map_while(|line| {
            let doc: DocumentMatches = match line
                .map_err(|e| e.to_string())
                .and_then(|l| serde_json::from_str(&l).map_err(|e| e.to_string()))
            {
                Ok(doc) => doc,
                Err(message) => {
                    read_error = Some(PipelineError::Failed { stage, message });
                    return None;
                }
            };
            stats.add_document(&doc.results);
            Some(build_citation_record(&doc.key, &doc.results))
        });
        let records = records.flatten().map_while(|record| match record.validate() {
            Ok(()) => Some(record),
            Err(e) => {
                invalid = Some(PipelineError::Invariant {
                    stage,
                    message: format!("record for {}: {e}", record.citing_paper.dblp_id),
                });
                None
            }
        });

        let partial = dir.join(format!("{DATASET_FILE}.partial"));
        let sink = BufWriter::new(File::create(&partial).map_err(|e| fail(&e))?);
        let written = export_jsonl(records, sink).map_err(|e| fail(&e))?;
        if let Some(e) = read_error.or(invalid) {
            return Err(e);
        }
        if !stats.is_consistent() {
            return Err(PipelineError::Invariant {
                stage,
                message: format!("statistics are inconsistent: {stats:?}"),
            });
        }
        fs::rename(&partial, dir.join(DATASET_FILE)).map_err(|e| fail(&e))?;
        stats.write_files(&dir).map_err(|e| fail(&e))?;
        let mut summary = serde_json::to_value(stats).map_err(|e| fail(&e))?;
        summary["records_written"] = json!(written);
        Ok(Done {
            summary,
            warnings: Vec::new(),
        })
    }

    fn write_run_manifest(&self) -> io::Result<()> {
        let stages: serde_json::Map<String, Value> = Stage::ALL
            .into_iter()
            .filter_map(|s| {
                read_stamp(&self.stage_dir(s).join(STAMP_FILE)).map(|stamp| {
                    (
                        s.as_str().to_string(),
                        json!({
                            "input": stamp.input,
                            "output": stamp.output,
                            "completed_at": stamp.completed_at,
                            "summary": stamp.summary,
                        }),
                    )
                })
            })
            .collect();
        write_json(
            &self.config.workdir.join(RUN_MANIFEST),
            &json!({
                "tool": concat!("nodoi ", env!("CARGO_PKG_VERSION")),
                "config": self.config,
                "stages": stages,
            }),
        )
    }
}

fn status_name<T: Serialize>(status: &T) -> String {
    serde_json::to_value(status)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn hash_reader(h: &mut Sha256, mut r: impl Read) -> io::Result<()> {
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            return Ok(());
        }
        h.update(&buf[..n]);
    }
}

/// Content hash of a stage directory. Hidden files and the per-item
/// manifests, which carry timings, are left out.
pub fn fingerprint_dir(dir: &Path) -> io::Result<String> {
    let mut names: Vec<(String, PathBuf)> = fs::read_dir(dir)?
        .filter_map(Result::ok)
        .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .filter(|(name, _)| !name.starts_with('.') && name != MANIFEST_FILE)
        .collect();
    names.sort();
    let mut h = Sha256::new();
    for (name, path) in names {
        h.update(name.as_bytes());
        h.update([0]);
        hash_reader(&mut h, File::open(path)?)?;
        h.update([0]);
    }
    Ok(hex(&h.finalize()))
}

fn read_stamp(path: &Path) -> Option<Stamp> {
    serde_json::from_slice(&fs::read(path).ok()?).ok()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)
}

fn clear_files(dir: &Path, pred: impl Fn(&str) -> bool) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if entry.file_type()?.is_file() && !name.starts_with('.') && pred(&name) {
            fs::remove_file(entry.path())?;
        }
    }
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> io::Result<Vec<T>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn read_documents(dir: &Path) -> Result<Vec<ExtractedDocument>, convert::ConvertError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n != "manifest.json" && !n.starts_with('.'))
        })
        .collect();
    paths.sort();
    paths.iter().map(|p| convert::read_document(p)).collect()
}

/// Reads a dataset file back into its records.
pub fn read_dataset(path: &Path) -> io::Result<Vec<crate::matcher::CitationRecord>> {
    read_jsonl(path)
}
