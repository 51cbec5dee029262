//! Random stores and references, plus a linear-scan reference matcher.

use nodoi_core::ingest::{Access, DblpRecord, EeLink, PubType};
use nodoi_core::{normalize_doi, normalize_title, ExtractedReference, MatchKind};
use rand::Rng;

const TITLES: &[&str] = &[
    "Deep Learning for Anomaly Detection: A Review",
    "An Architecture for Describing SNMP Management Frameworks",
    "Graph Neural Networks in Practice",
    "Citation Graphs at Scale",
    "On the Reproducibility of Scholarly Datasets",
    "Résumé Parsing with Transformers",
    "Streaming XML Processing Revisited",
    "Record Linkage without Identifiers",
    "A Survey of Open Access Publishing",
    "Multi-Object Detection and Tracking",
    "Entity Resolution for Bibliographic Data",
    "Fast Approximate Title Matching",
];

pub fn doi_pool(rng: &mut impl Rng, n: usize) -> Vec<String> {
    (0..n)
        .map(|i| format!("10.{}/Item.{}-{i}", rng.random_range(1000..99999), rng.random_range(0..50)))
        .collect()
}

/// A title variant that normalizes like `title`.
fn vary_title(rng: &mut impl Rng, title: &str) -> String {
    match rng.random_range(0..5) {
        0 => title.to_uppercase(),
        1 => title.to_lowercase(),
        2 => format!("  {}. ", title.replace(' ', "   ")),
        3 => title.replace('e', "é").replace(':', " -"),
        _ => title.to_string(),
    }
}

/// A DOI variant that normalizes like `doi`.
fn vary_doi(rng: &mut impl Rng, doi: &str) -> String {
    match rng.random_range(0..5) {
        0 => format!("https://doi.org/{doi}"),
        1 => format!("doi:{}", doi.to_uppercase()),
        2 => format!("{doi}."),
        3 => format!("http://dx.doi.org/{}", doi.to_lowercase()),
        _ => doi.to_string(),
    }
}

pub fn random_records(rng: &mut impl Rng, n: usize, dois: &[String]) -> Vec<DblpRecord> {
    (0..n)
        .map(|i| {
            let base = TITLES[rng.random_range(0..TITLES.len())];
            let title = vary_title(rng, base);
            let mut r = DblpRecord::new(format!("journals/rand/R{i:05}"), PubType::Article, title);
            r.year = Some(rng.random_range(2000..2004));
            if rng.random_bool(0.6) {
                let doi = dois[rng.random_range(0..dois.len())].clone();
                r.ee_links.push(EeLink::new(format!("https://doi.org/{doi}"), Access::Unknown));
                r.doi = Some(normalize_doi(&doi));
            }
            r
        })
        .collect()
}

pub fn random_reference(
    rng: &mut impl Rng,
    ordinal: u32,
    records: &[DblpRecord],
    dois: &[String],
) -> ExtractedReference {
    let mut r = ExtractedReference::new(ordinal, format!("reference {ordinal}"));
    r.doi = match rng.random_range(0..10) {
        0..=4 => {
            let base = &dois[rng.random_range(0..dois.len())];
            Some(vary_doi(rng, base))
        }
        5..=6 => Some(format!("10.9999/unseen.{}", rng.random_range(0..1000))),
        _ => None,
    }
    .map(|d| normalize_doi(&d));
    r.title = match rng.random_range(0..10) {
        0..=5 if !records.is_empty() => {
            let t = &records[rng.random_range(0..records.len())].title;
            Some(vary_title(rng, t))
        }
        6..=7 => {
            let base = TITLES[rng.random_range(0..TITLES.len())];
            Some(vary_title(rng, base))
        }
        _ => None,
    };
    r.year = rng.random_bool(0.6).then(|| rng.random_range(2000..2004));
    r
}

struct Entry {
    key: String,
    doi: String,
    title: String,
    year: Option<i32>,
}

/// Brute-force cascade: DOI hit, else title hit, else keep the bare DOI.
/// Several hits resolve only to the unique one from the reference's year.
pub struct Oracle {
    entries: Vec<Entry>,
}

impl Oracle {
    pub fn new(records: &[DblpRecord]) -> Self {
        let mut entries: Vec<Entry> = records
            .iter()
            .map(|r| Entry {
                key: r.key.clone(),
                doi: r.doi.as_deref().map(normalize_doi).unwrap_or_default(),
                title: normalize_title(&r.title),
                year: r.year,
            })
            .collect();
        entries.sort_by(|a, b| a.key.cmp(&b.key));
        Oracle { entries }
    }

    fn pick(hits: Vec<&Entry>, year: Option<i32>) -> Option<&Entry> {
        if hits.len() == 1 {
            return Some(hits[0]);
        }
        let year = year?;
        let same: Vec<&Entry> = hits.into_iter().filter(|e| e.year == Some(year)).collect();
        (same.len() == 1).then(|| same[0])
    }

    pub fn expect(&self, r: &ExtractedReference) -> (MatchKind, Option<String>, Option<String>) {
        let doi = r.doi.as_deref().map(normalize_doi).filter(|d| !d.is_empty());
        if let Some(d) = &doi {
            let hits = self.entries.iter().filter(|e| &e.doi == d).collect();
            if let Some(e) = Self::pick(hits, r.year) {
                return (MatchKind::MatchedByDoi, Some(e.key.clone()), Some(d.clone()));
            }
        }
        let title = r.title.as_deref().map(normalize_title).unwrap_or_default();
        if !title.is_empty() {
            let hits = self.entries.iter().filter(|e| e.title == title).collect();
            if let Some(e) = Self::pick(hits, r.year) {
                let own = (!e.doi.is_empty()).then(|| e.doi.clone());
                return (MatchKind::MatchedByTitle, Some(e.key.clone()), own);
            }
        }
        match doi {
            Some(d) => (MatchKind::UnmatchedWithDoi, None, Some(d)),
            None => (MatchKind::Dropped, None, None),
        }
    }
}
