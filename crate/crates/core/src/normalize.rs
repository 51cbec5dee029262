//! Normalizers shared by the store indexes and the matcher.
//!
//! Both functions are idempotent: feeding their output back in returns it
//! unchanged. Lookups only ever compare normalized forms, so every index key
//! and every query must pass through the same function.

use std::sync::LazyLock;

use regex::Regex;
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

static DOI_TOKEN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b10\.\d{4,9}/[^\s<>]+").unwrap());

const RESOLVER_PREFIXES: &[&str] = &[
    "https://doi.org/",
    "http://doi.org/",
    "https://dx.doi.org/",
    "http://dx.doi.org/",
    "https://www.doi.org/",
    "http://www.doi.org/",
    "doi.org/",
    "dx.doi.org/",
];

const TRAILING_PUNCT: &[char] = &['.', ',', ';', ':', ')', ']', '}', '"', '\'', '>'];

/// Canonical DOI form: lowercase, no resolver URL, no `doi:` label, no
/// trailing sentence punctuation.
pub fn normalize_doi(s: &str) -> String {
    let mut cur = s.trim().to_lowercase();
    loop {
        let before = cur.len();
        for prefix in RESOLVER_PREFIXES {
            if let Some(rest) = cur.strip_prefix(prefix) {
                cur = rest.trim_start().to_string();
            }
        }
        if let Some(rest) = cur.strip_prefix("doi:") {
            cur = rest.trim_start().to_string();
        }
        while let Some(last) = cur.chars().last() {
            if last.is_whitespace() || (TRAILING_PUNCT.contains(&last) && !closes_group(&cur, last)) {
                cur.pop();
            } else {
                break;
            }
        }
        if cur.len() == before {
            return cur;
        }
    }
}

// A closing bracket that balances an earlier opener is part of the DOI,
// e.g. `10.1016/0010-0277(88)90032-8(x)`.
fn closes_group(s: &str, last: char) -> bool {
    let open = match last {
        ')' => '(',
        ']' => '[',
        _ => return false,
    };
    let opens = s.chars().filter(|&c| c == open).count();
    let closes = s.chars().filter(|&c| c == last).count();
    opens >= closes
}

fn title_pass(s: &str) -> String {
    let folded: String = s
        .to_lowercase()
        .nfkd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Title key: case-folded, diacritics removed, punctuation turned into
/// spaces, whitespace collapsed.
pub fn normalize_title(s: &str) -> String {
    let mut cur = title_pass(s);
    // A few compatibility characters only settle after a second pass.
    loop {
        let next = title_pass(&cur);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

/// First DOI-shaped token in free text, normalized.
pub fn find_doi(text: &str) -> Option<String> {
    DOI_TOKEN
        .find(text)
        .map(|m| normalize_doi(m.as_str()))
        .filter(|d| d.contains('/') && !d.ends_with('/'))
}
