use percent_encoding::percent_decode_str;
use url::Url;

use super::record::DblpRecord;
use crate::normalize::normalize_doi;

const DOI_HOSTS: &[&str] = &["doi.org", "dx.doi.org", "www.doi.org"];

/// DOI carried by a resolver link such as `https://doi.org/10.1000/x`.
pub fn doi_from_url(link: &str) -> Option<String> {
    let url = Url::parse(link.trim()).ok()?;
    let host = url.host_str()?.to_ascii_lowercase();
    if !DOI_HOSTS.contains(&host.as_str()) {
        return None;
    }
    let path = url.path().trim_start_matches('/');
    let decoded = percent_decode_str(path).decode_utf8_lossy();
    let doi = normalize_doi(&decoded);
    (doi.starts_with("10.") && doi.contains('/')).then_some(doi)
}

/// First resolver link among the record's ee links, normalized.
pub fn extract_doi(record: &DblpRecord) -> Option<String> {
    record.ee_links.iter().find_map(|l| doi_from_url(&l.url))
}

/// True for records with an open-access link and no DOI.
pub fn is_oa_nodoi(record: &DblpRecord) -> bool {
    record.has_open_link() && extract_doi(record).is_none()
}

/// Lazily keeps the records that have an open-access link and no DOI.
pub fn select_oa_nodoi<I>(records: I) -> impl Iterator<Item = DblpRecord>
where
    I: IntoIterator<Item = DblpRecord>,
{
    records.into_iter().filter(is_oa_nodoi)
}
