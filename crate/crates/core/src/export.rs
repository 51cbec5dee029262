//! JSONL dataset writer and run statistics.

use std::borrow::Borrow;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcher::{CitationRecord, MatchKind, MatchResult};

#[derive(Debug, Error)]
#[error("export aborted after {written} lines: {source}")]
pub struct ExportError {
    pub written: u64,
    #[source]
    pub source: std::io::Error,
}

/// Writes one compact JSON object per line. Field order is fixed by the
/// record types, so identical records always produce identical bytes.
pub fn export_jsonl<I, W>(records: I, mut sink: W) -> Result<u64, ExportError>
where
    I: IntoIterator,
    I::Item: Borrow<CitationRecord>,
    W: Write,
{
    let mut written = 0;
    for record in records {
        let line = serde_json::to_string(record.borrow()).map_err(|e| ExportError {
            written,
            source: e.into(),
        })?;
        sink.write_all(line.as_bytes())
            .and_then(|_| sink.write_all(b"\n"))
            .map_err(|source| ExportError { written, source })?;
        written += 1;
    }
    sink.flush().map_err(|source| ExportError { written, source })?;
    Ok(written)
}

/// Run counters. `dois_matched_with_dblp_key` counts references, not
/// distinct DOIs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub files_parsed: u64,
    pub references_evaluated: u64,
    pub dblp_keys_matched: u64,
    pub dois_matched_with_dblp_key: u64,
    pub dois_without_dblp_key: u64,
}

impl PipelineStats {
    /// The two ordering constraints every run must satisfy.
    pub fn is_consistent(&self) -> bool {
        self.dois_matched_with_dblp_key <= self.dblp_keys_matched
            && self.dblp_keys_matched + self.dois_without_dblp_key <= self.references_evaluated
    }

    pub fn add_document(&mut self, results: &[MatchResult]) {
        self.files_parsed += 1;
        for r in results {
            self.references_evaluated += 1;
            match r.kind {
                MatchKind::MatchedByDoi | MatchKind::MatchedByTitle => {
                    self.dblp_keys_matched += 1;
                    if r.doi.is_some() {
                        self.dois_matched_with_dblp_key += 1;
                    }
                }
                MatchKind::UnmatchedWithDoi => self.dois_without_dblp_key += 1,
                MatchKind::Dropped => {}
            }
        }
    }

    pub fn write_files(&self, dir: &Path) -> std::io::Result<()> {
        fs::write(
            dir.join("stats.json"),
            serde_json::to_string_pretty(self)? + "\n",
        )?;
        fs::write(dir.join("stats.txt"), self.to_string())
    }
}

impl fmt::Display for PipelineStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("Total Files Parsed", self.files_parsed),
            ("Total References Evaluated", self.references_evaluated),
            ("DBLP Keys Matched", self.dblp_keys_matched),
            ("DOIs Matched with DBLP Key", self.dois_matched_with_dblp_key),
            ("DOIs without DBLP Key", self.dois_without_dblp_key),
        ];
        writeln!(f, "{:<28} {:>12}", "Statistic", "#")?;
        writeln!(f, "{}", "-".repeat(41))?;
        for (label, value) in rows {
            writeln!(f, "{label:<28} {value:>12}")?;
        }
        Ok(())
    }
}

/// One entry per parsed document, each with its match results.
pub fn compute_stats<'a, I>(documents: I) -> PipelineStats
where
    I: IntoIterator<Item = &'a [MatchResult]>,
{
    let mut stats = PipelineStats::default();
    for results in documents {
        stats.add_document(results);
    }
    stats
}
