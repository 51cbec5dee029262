//! Builds a JSONL citation dataset for open-access computer science papers
//! that have no DOI.
//!
//! Stages, in order: [`ingest`] the corpus XML, load records into the
//! [`store`], [`harvest`] PDFs, [`extract`] TEI through an external
//! service, [`convert`] TEI to JSON, [`matcher`] references against the
//! store, and [`export`] the dataset with its statistics. [`pipeline`]
//! drives them from a shared config.

mod backoff;
pub mod convert;
pub mod exec;
pub mod export;
pub mod extract;
pub mod harvest;
pub mod ingest;
pub mod matcher;
pub mod mock;
pub mod normalize;
pub mod pipeline;
pub mod store;

pub use convert::{convert, ExtractedDocument, ExtractedReference};
pub use exec::Execution;
pub use export::{compute_stats, export_jsonl, PipelineStats};
pub use ingest::{DblpRecord, PubType};
pub use matcher::{build_citation_record, match_reference, CitationRecord, MatchKind, MatchResult};
pub use normalize::{normalize_doi, normalize_title};
pub use pipeline::{Pipeline, PipelineConfig, Stage};
pub use store::MetadataStore;

/// File-name-safe form of a corpus key. Injective: `%` and path
/// separators are percent-escaped.
pub fn sanitize_key(key: &str) -> String {
    let mut out = String::with_capacity(key.len() + 8);
    for c in key.chars() {
        match c {
            '%' => out.push_str("%25"),
            '/' => out.push_str("%2F"),
            '\\' => out.push_str("%5C"),
            ':' => out.push_str("%3A"),
            c => out.push(c),
        }
    }
    out
}
