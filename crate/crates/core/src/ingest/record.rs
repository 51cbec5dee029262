use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Top-level publication element kinds found in the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PubType {
    Article,
    Inproceedings,
    Proceedings,
    Book,
    Incollection,
    Phdthesis,
    Mastersthesis,
    Www,
    Data,
    /// Any element name not listed above; the original name is kept in
    /// `raw_attrs["@element"]`.
    Other,
}

impl PubType {
    pub const ALL: [PubType; 10] = [
        PubType::Article,
        PubType::Inproceedings,
        PubType::Proceedings,
        PubType::Book,
        PubType::Incollection,
        PubType::Phdthesis,
        PubType::Mastersthesis,
        PubType::Www,
        PubType::Data,
        PubType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PubType::Article => "article",
            PubType::Inproceedings => "inproceedings",
            PubType::Proceedings => "proceedings",
            PubType::Book => "book",
            PubType::Incollection => "incollection",
            PubType::Phdthesis => "phdthesis",
            PubType::Mastersthesis => "mastersthesis",
            PubType::Www => "www",
            PubType::Data => "data",
            PubType::Other => "other",
        }
    }

    /// Maps a known element name; `None` for anything else.
    pub fn from_element(name: &str) -> Option<PubType> {
        PubType::ALL
            .into_iter()
            .find(|t| *t != PubType::Other && t.as_str() == name)
    }
}

impl fmt::Display for PubType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PubType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PubType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown publication type {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Open,
    Closed,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EeLink {
    pub url: String,
    pub access: Access,
}

impl EeLink {
    pub fn new(url: impl Into<String>, access: Access) -> Self {
        EeLink {
            url: url.into(),
            access,
        }
    }
}

/// One publication from the corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DblpRecord {
    pub key: String,
    pub pub_type: PubType,
    pub title: String,
    pub authors: Vec<String>,
    pub year: Option<i32>,
    pub venue: Option<String>,
    pub ee_links: Vec<EeLink>,
    pub doi: Option<String>,
    /// Unmodeled fields, verbatim. Attributes of the record element are
    /// stored under `@name`; repeated child fields get a `#n` suffix.
    pub raw_attrs: BTreeMap<String, String>,
}

impl DblpRecord {
    /// Bare record with only key, type and title; the rest empty.
    pub fn new(key: impl Into<String>, pub_type: PubType, title: impl Into<String>) -> Self {
        DblpRecord {
            key: key.into(),
            pub_type,
            title: title.into(),
            authors: Vec::new(),
            year: None,
            venue: None,
            ee_links: Vec::new(),
            doi: None,
            raw_attrs: BTreeMap::new(),
        }
    }

    pub fn has_open_link(&self) -> bool {
        self.ee_links.iter().any(|l| l.access == Access::Open)
    }
}
