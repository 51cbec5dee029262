//! Corpus ingestion: streaming parse of the single-file XML corpus,
//! per-type CSV splitting and the open-access/no-DOI selection.

mod entities;
mod parser;
mod record;
mod select;
mod split;

use thiserror::Error;

pub use entities::expand as expand_entities;
pub use parser::{parse_dblp_stream, DblpReader, IngestWarning};
pub use record::{Access, DblpRecord, EeLink, PubType};
pub use select::{doi_from_url, extract_doi, is_oa_nodoi, select_oa_nodoi};
pub use split::{read_type_file, split_by_type, type_file_name, SplitManifest, TypeFile};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
    #[error("bad row: {0}")]
    Row(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
