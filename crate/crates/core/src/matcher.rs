//! Reference matching: DOI lookup first, title lookup second, then
//! assembly of one citation record per citing paper.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::convert::{ExtractedDocument, ExtractedReference};
use crate::exec::{map_ordered, Execution};
use crate::ingest::DblpRecord;
use crate::normalize::normalize_doi;
use crate::store::MetadataStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    MatchedByDoi,
    MatchedByTitle,
    UnmatchedWithDoi,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchResult {
    pub kind: MatchKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dblp_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
    pub reference: ExtractedReference,
}

impl MatchResult {
    pub fn is_matched(&self) -> bool {
        matches!(self.kind, MatchKind::MatchedByDoi | MatchKind::MatchedByTitle)
    }

    /// Checks that the identifier fields agree with the kind.
    pub fn is_consistent(&self) -> bool {
        match self.kind {
            MatchKind::MatchedByDoi => self.dblp_id.is_some() && self.doi.is_some(),
            MatchKind::MatchedByTitle => self.dblp_id.is_some(),
            MatchKind::UnmatchedWithDoi => self.doi.is_some() && self.dblp_id.is_none(),
            MatchKind::Dropped => self.doi.is_none() && self.dblp_id.is_none(),
        }
    }
}

/// Picks one record out of a lookup's candidates: a singleton wins outright,
/// otherwise the unique candidate published in the reference's year.
pub fn disambiguate<'a>(
    candidates: &[&'a DblpRecord],
    reference: &ExtractedReference,
) -> Option<&'a DblpRecord> {
    match candidates {
        [] => None,
        [only] => Some(*only),
        _ => {
            let year = reference.year?;
            let mut same_year = candidates.iter().filter(|r| r.year == Some(year));
            let first = same_year.next()?;
            same_year.next().is_none().then_some(*first)
        }
    }
}

pub fn match_reference(reference: &ExtractedReference, store: &MetadataStore) -> MatchResult {
    let doi = reference
        .doi
        .as_deref()
        .map(normalize_doi)
        .filter(|d| !d.is_empty());

    if let Some(doi) = &doi {
        if let Some(hit) = disambiguate(&store.get_by_doi(doi), reference) {
            return MatchResult {
                kind: MatchKind::MatchedByDoi,
                dblp_id: Some(hit.key.clone()),
                doi: Some(doi.clone()),
                reference: reference.clone(),
            };
        }
    }
    if let Some(title) = &reference.title {
        if let Some(hit) = disambiguate(&store.get_by_title(title), reference) {
            // the record's own DOI, not the unverified one from the reference
            return MatchResult {
                kind: MatchKind::MatchedByTitle,
                dblp_id: Some(hit.key.clone()),
                doi: hit.doi.as_deref().map(normalize_doi).filter(|d| !d.is_empty()),
                reference: reference.clone(),
            };
        }
    }
    match doi {
        Some(doi) => MatchResult {
            kind: MatchKind::UnmatchedWithDoi,
            dblp_id: None,
            doi: Some(doi),
            reference: reference.clone(),
        },
        None => MatchResult {
            kind: MatchKind::Dropped,
            dblp_id: None,
            doi: None,
            reference: reference.clone(),
        },
    }
}

/// Match results for one citing paper, in reference order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMatches {
    pub key: String,
    pub results: Vec<MatchResult>,
}

pub fn match_document(doc: &ExtractedDocument, store: &MetadataStore) -> DocumentMatches {
    let mut refs: Vec<&ExtractedReference> = doc.references.iter().collect();
    refs.sort_by_key(|r| r.ordinal);
    DocumentMatches {
        key: doc.key.clone(),
        results: refs.into_iter().map(|r| match_reference(r, store)).collect(),
    }
}

/// Matches every document and returns the results sorted by citing key.
pub fn match_documents(
    docs: &[ExtractedDocument],
    store: &MetadataStore,
    exec: Execution,
) -> Vec<DocumentMatches> {
    let mut out = map_ordered(docs, exec, |d| match_document(d, store));
    out.sort_by(|a, b| a.key.cmp(&b.key));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectId {
    #[serde(rename = "$oid")]
    pub oid: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitingPaper {
    pub dblp_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitedPaper {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dblp_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
    pub bibliographic_reference: String,
}

/// One line of the exported dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationRecord {
    #[serde(rename = "_id")]
    pub id: ObjectId,
    pub citing_paper: CitingPaper,
    pub cited_papers: Vec<CitedPaper>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidityError {
    #[error("{citing}: cited paper #{index} has neither dblp_id nor doi")]
    MissingIdentifier { citing: String, index: usize },
    #[error("{citing}: cited paper #{index} has an empty bibliographic_reference")]
    MissingReference { citing: String, index: usize },
    #[error("{citing}: no cited papers")]
    Empty { citing: String },
}

impl CitationRecord {
    pub fn validate(&self) -> Result<(), ValidityError> {
        let citing = &self.citing_paper.dblp_id;
        if self.cited_papers.is_empty() {
            return Err(ValidityError::Empty {
                citing: citing.clone(),
            });
        }
        for (index, cited) in self.cited_papers.iter().enumerate() {
            if cited.dblp_id.is_none() && cited.doi.is_none() {
                return Err(ValidityError::MissingIdentifier {
                    citing: citing.clone(),
                    index,
                });
            }
            if cited.bibliographic_reference.is_empty() {
                return Err(ValidityError::MissingReference {
                    citing: citing.clone(),
                    index,
                });
            }
        }
        Ok(())
    }
}

/// 24 hex digits derived from the citing key.
pub fn record_id(citing_key: &str) -> String {
    let digest = Sha256::digest(citing_key.as_bytes());
    digest[..12].iter().map(|b| format!("{b:02x}")).collect()
}

/// Builds the dataset line for one citing paper. Dropped results are left
/// out and repeated citations collapse to their first occurrence; `None`
/// when nothing survives.
pub fn build_citation_record(citing_key: &str, results: &[MatchResult]) -> Option<CitationRecord> {
    let mut seen_ids = HashSet::new();
    let mut seen_bare_dois = HashSet::new();
    let mut cited_papers = Vec::new();
    for result in results {
        let (dblp_id, doi) = match result.kind {
            MatchKind::Dropped => continue,
            MatchKind::MatchedByDoi | MatchKind::MatchedByTitle => {
                (result.dblp_id.clone(), result.doi.clone())
            }
            MatchKind::UnmatchedWithDoi => (None, result.doi.clone()),
        };
        let fresh = match (&dblp_id, &doi) {
            (Some(id), _) => seen_ids.insert(id.clone()),
            (None, Some(d)) => seen_bare_dois.insert(d.clone()),
            (None, None) => continue,
        };
        if fresh {
            cited_papers.push(CitedPaper {
                dblp_id,
                doi,
                bibliographic_reference: result.reference.raw_text.clone(),
            });
        }
    }
    (!cited_papers.is_empty()).then(|| CitationRecord {
        id: ObjectId {
            oid: record_id(citing_key),
        },
        citing_paper: CitingPaper {
            dblp_id: citing_key.to_string(),
        },
        cited_papers,
    })
}
