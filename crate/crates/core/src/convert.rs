//! TEI XML to compact per-document JSON.
//!
//! Only the bibliography is modeled: every `biblStruct` directly under a
//! `listBibl` in the document text becomes one [`ExtractedReference`].

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use roxmltree::{Document, Node};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::{find_doi, normalize_doi};
use crate::sanitize_key;

#[derive(Debug, Error)]
pub enum ConvertError {
    #[error("{key}: malformed TEI: {message}")]
    Malformed { key: String, message: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedReference {
    pub ordinal: u32,
    pub raw_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doi: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub authors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub venue: Option<String>,
}

impl ExtractedReference {
    pub fn new(ordinal: u32, raw_text: impl Into<String>) -> Self {
        ExtractedReference {
            ordinal,
            raw_text: raw_text.into(),
            title: None,
            doi: None,
            authors: Vec::new(),
            year: None,
            venue: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedDocument {
    pub key: String,
    pub references: Vec<ExtractedReference>,
}

/// First DOI-shaped token in a raw reference string, normalized.
pub fn extract_doi_from_raw(raw_text: &str) -> Option<String> {
    find_doi(raw_text)
}

static YEAR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d{4}").unwrap());

fn parse_year(s: &str) -> Option<i32> {
    // only the first 4-digit token counts
    let y: i32 = YEAR.find(s)?.as_str().parse().ok()?;
    (1500..=2100).contains(&y).then_some(y)
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn visible_text(node: Node<'_, '_>) -> String {
    let mut parts = Vec::new();
    for d in node.descendants().filter(|d| d.is_text()) {
        if let Some(t) = d.text() {
            parts.push(t);
        }
    }
    collapse(&parts.join(" "))
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children()
        .find(|c| c.is_element() && c.tag_name().name() == name)
}

fn children<'a, 'i: 'a>(node: Node<'a, 'i>, name: &'a str) -> impl Iterator<Item = Node<'a, 'i>> + 'a {
    node.children()
        .filter(move |c| c.is_element() && c.tag_name().name() == name)
}

fn non_empty(s: String) -> Option<String> {
    (!s.is_empty()).then_some(s)
}

fn pick_title(parent: Node<'_, '_>) -> Option<String> {
    let titles: Vec<_> = children(parent, "title").collect();
    titles
        .iter()
        .find(|t| t.attribute("type") == Some("main"))
        .or_else(|| titles.first())
        .and_then(|t| non_empty(visible_text(*t)))
}

fn person_name(author: Node<'_, '_>) -> Option<String> {
    let pers = child(author, "persName")?;
    let mut parts: Vec<String> = children(pers, "forename").map(visible_text).collect();
    parts.extend(children(pers, "surname").map(visible_text));
    non_empty(collapse(&parts.join(" ")))
}

fn convert_entry(bibl: Node<'_, '_>, ordinal: u32) -> Option<ExtractedReference> {
    let raw = bibl
        .descendants()
        .find(|n| {
            n.is_element()
                && n.tag_name().name() == "note"
                && n.attribute("type") == Some("raw_reference")
        })
        .map(visible_text)
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| visible_text(bibl));
    if raw.is_empty() {
        return None;
    }
    let mut reference = ExtractedReference::new(ordinal, raw);

    let analytic = child(bibl, "analytic");
    let monogr = child(bibl, "monogr");
    let analytic_title = analytic.and_then(pick_title);
    let monogr_title = monogr.and_then(pick_title);
    match analytic_title {
        Some(t) => {
            reference.title = Some(t);
            reference.venue = monogr_title;
        }
        None => reference.title = monogr_title,
    }

    let author_parent = analytic
        .filter(|a| child(*a, "author").is_some())
        .or(monogr);
    if let Some(p) = author_parent {
        reference.authors = children(p, "author").filter_map(person_name).collect();
    }

    reference.year = monogr
        .and_then(|m| child(m, "imprint"))
        .and_then(|imp| child(imp, "date"))
        .and_then(|d| {
            d.attribute("when")
                .and_then(parse_year)
                .or_else(|| parse_year(&visible_text(d)))
        });

    let structured = bibl
        .descendants()
        .filter(|n| n.is_element() && n.tag_name().name() == "idno")
        .find(|n| {
            n.attribute("type")
                .is_some_and(|t| t.eq_ignore_ascii_case("doi"))
        })
        .map(|n| normalize_doi(&visible_text(n)))
        .filter(|d| !d.is_empty());
    reference.doi = structured.or_else(|| extract_doi_from_raw(&reference.raw_text));
    Some(reference)
}

/// Converts one TEI document. A document without a bibliography converts
/// to an empty reference list.
pub fn convert(key: &str, tei_xml: &str) -> Result<ExtractedDocument, ConvertError> {
    let doc = Document::parse(tei_xml).map_err(|e| ConvertError::Malformed {
        key: key.to_string(),
        message: e.to_string(),
    })?;
    let mut references = Vec::new();
    let lists = doc.descendants().filter(|n| {
        n.is_element()
            && n.tag_name().name() == "listBibl"
            && !n.ancestors().skip(1).any(|a| {
                a.is_element()
                    && (a.tag_name().name() == "listBibl" || a.tag_name().name() == "teiHeader")
            })
    });
    for list in lists {
        for bibl in children(list, "biblStruct") {
            let ordinal = references.len() as u32;
            if let Some(r) = convert_entry(bibl, ordinal) {
                references.push(r);
            }
        }
    }
    Ok(ExtractedDocument {
        key: key.to_string(),
        references,
    })
}

pub fn document_file_name(key: &str) -> String {
    format!("{}.json", sanitize_key(key))
}

/// Writes `<sanitized-key>.json` into `dir` and returns its path.
pub fn write_document(dir: &Path, doc: &ExtractedDocument) -> Result<PathBuf, ConvertError> {
    let path = dir.join(document_file_name(&doc.key));
    fs::write(&path, serde_json::to_vec(doc)?)?;
    Ok(path)
}

pub fn read_document(path: &Path) -> Result<ExtractedDocument, ConvertError> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}
