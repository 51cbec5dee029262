//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod oracle;
mod synth;

use std::alloc::{GlobalAlloc, Layout, System};
use std::fs;
use std::io::BufReader;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use nodoi_core::export::compute_stats;
use nodoi_core::ingest::{self, DblpReader};
use nodoi_core::matcher::{match_documents, CitationRecord, CitedPaper, CitingPaper, ObjectId};
use nodoi_core::mock::{fixture_dir, FixtureSite, RecordingProxy};
use nodoi_core::pipeline::{Pipeline, PipelineConfig, Stage};
use nodoi_core::{
    build_citation_record, export_jsonl, match_reference, normalize_doi, Execution,
    ExtractedDocument, MetadataStore, PipelineStats,
};
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

// tolerances
const AC1_MAX_RUNTIME: Duration = Duration::from_secs(5);
const AC2_MIN_CORPORA: u64 = 1_000;
const AC3_MIN_SEEDS: u64 = 100;
const AC3_MAX_STORE: usize = 1_000;
const AC3_MAX_REFS: usize = 5_000;
const AC3_MAX_RUNTIME: Duration = Duration::from_secs(60);
const AC5_SCALES: [usize; 3] = [1_000, 10_000, 100_000];
const AC5_MAX_GROWTH: f64 = 0.10;
const AC5_PEAK_CAP: usize = 16 << 20;
const AC5_MAX_RUNTIME: Duration = Duration::from_secs(120);
const AC6_CASES: u32 = 512;

// hand-counted over fixtures/corpus.xml and its TEI fixtures
const FIXTURE_STATS: PipelineStats = PipelineStats {
    files_parsed: 3,
    references_evaluated: 12,
    dblp_keys_matched: 6,
    dois_matched_with_dblp_key: 5,
    dois_without_dblp_key: 2,
};

struct Counting;

static LIVE: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = unsafe { System.alloc(layout) };
        if !p.is_null() {
            let now = LIVE.fetch_add(layout.size(), Ordering::Relaxed) + layout.size();
            PEAK.fetch_max(now, Ordering::Relaxed);
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) };
        LIVE.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = unsafe { System.realloc(ptr, layout, new_size) };
        if !p.is_null() {
            if new_size > layout.size() {
                let now = LIVE.fetch_add(new_size - layout.size(), Ordering::Relaxed)
                    + (new_size - layout.size());
                PEAK.fetch_max(now, Ordering::Relaxed);
            } else {
                LIVE.fetch_sub(layout.size() - new_size, Ordering::Relaxed);
            }
        }
        p
    }
}

#[global_allocator]
static ALLOC: Counting = Counting;

/// Heap growth above the level at the time of the call, up to the peak.
fn measure_peak<R>(f: impl FnOnce() -> R) -> (R, usize) {
    let base = LIVE.load(Ordering::SeqCst);
    PEAK.store(base, Ordering::SeqCst);
    let r = f();
    (r, PEAK.load(Ordering::SeqCst).saturating_sub(base))
}

// every emitted cited_papers element, from every criterion
static ELEMENTS_CHECKED: AtomicU64 = AtomicU64::new(0);
static ELEMENTS_INVALID: AtomicU64 = AtomicU64::new(0);
// every exported JSONL line checked for round-tripping
static LINES_CHECKED: AtomicU64 = AtomicU64::new(0);

fn audit(record: &CitationRecord) {
    for paper in &record.cited_papers {
        ELEMENTS_CHECKED.fetch_add(1, Ordering::Relaxed);
        let has_id = paper.dblp_id.is_some() || paper.doi.is_some();
        if !has_id || paper.bibliographic_reference.is_empty() {
            ELEMENTS_INVALID.fetch_add(1, Ordering::Relaxed);
        }
    }
}

fn audit_value(line: &Value) {
    for paper in line["cited_papers"].as_array().into_iter().flatten() {
        ELEMENTS_CHECKED.fetch_add(1, Ordering::Relaxed);
        let has_id = paper.get("dblp_id").is_some() || paper.get("doi").is_some();
        let has_ref = paper["bibliographic_reference"]
            .as_str()
            .is_some_and(|s| !s.is_empty());
        if !has_id || !has_ref {
            ELEMENTS_INVALID.fetch_add(1, Ordering::Relaxed);
        }
    }
}

/// Each line must parse alone as a JSON object and re-serialize to the
/// same bytes. Returns the parsed lines.
fn check_jsonl(bytes: &[u8]) -> Result<Vec<Value>, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let value: Value = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", n + 1))?;
        if !value.is_object() {
            return Err(format!("line {} is not an object", n + 1));
        }
        let again = serde_json::to_string(&value).map_err(|e| e.to_string())?;
        if again != line {
            return Err(format!("line {} does not round-trip", n + 1));
        }
        let typed: CitationRecord = serde_json::from_str(line).map_err(|e| e.to_string())?;
        if serde_json::to_string(&typed).map_err(|e| e.to_string())? != line {
            return Err(format!("line {} does not round-trip through the record type", n + 1));
        }
        LINES_CHECKED.fetch_add(1, Ordering::Relaxed);
        audit_value(&value);
        out.push(value);
    }
    if !text.is_empty() && !text.ends_with('\n') {
        return Err("missing final newline".into());
    }
    Ok(out)
}

fn fixture_config(site: &FixtureSite, workdir: &Path, consolidate: bool) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        corpus_path: Some(site.corpus.clone()),
        workdir: workdir.to_path_buf(),
        extraction_endpoint: site.service.endpoint(),
        consolidate_citations: consolidate,
        ..PipelineConfig::default()
    };
    cfg.harvest.backoff_base = Duration::from_millis(10);
    cfg.extraction.backoff_base = Duration::from_millis(10);
    cfg.harvest.timeout = Duration::from_secs(5);
    cfg.extraction.timeout = Duration::from_secs(5);
    cfg
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------------------------------------------------------------------------

/// The example record as printed: (dblp_id, doi, reference text). The text
/// is wrapped over several lines in print, so whitespace runs collapse.
const GOLDEN: [(Option<&str>, Option<&str>, &str); 4] = [
    (
        Some("journals/sigpro/AlbusacCLVL09"),
        Some("10.1016/j.sigpro.2009.04.008"),
        "J. Albusac, J. Castro-Schez, L. Lopez-Lopez, D. Vallejo, L. Jimenez-Linares, A supervised  learning approach to automate the acquisition of knowledge in surveillance systems, Signal Processing 89 (2009) 2400-2414. doi:https://doi.org/10.1016/j.sigpro.2009.04.008, special Section: Visual Information Analysis for Security.",
    ),
    (
        Some("journals/cssp/Elhoseny20"),
        Some("10.1007/s00034-019-01234-7"),
        "M. Elhoseny, Multi-object detection and tracking (modt) machine learning model for real-time video surveillance systems, Circuits, Systems, and Signal Processing 39 (2020) 611-630. doi:10.1007/s00034-019-01234-7.",
    ),
    (
        None,
        Some("10.23919/IRS.2019.8768102"),
        "F. Opitz, K. Dästner, B. Roseneckh-Köhler, E. Schmid, Data analytics and machine learning in wide area surveillance systems, in: 2019 20th International Radar Symposium (IRS), 2019, pp. 1-10. doi:10.23919/IRS.2019.8768102.",
    ),
    (
        Some("journals/rfc/rfc3411"),
        None,
        "D. Harrington, R. Presuhn, B. Wijnen, An architecture for describing simple network management protocol (snmp) management frameworks, 2002. doi:10.17487/RFC3411.",
    ),
];
const GOLDEN_CITING: &str = "conf/ecsa/GasperisPF21";

fn ac1_golden_record() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let site = FixtureSite::with_corpus(&fixture_dir(), "golden.xml", tmp.path())
        .map_err(|e| e.to_string())?;
    let pipeline = Pipeline::new(fixture_config(&site, &tmp.path().join("work"), true));
    let started = Instant::now();
    pipeline.run(&Stage::ALL).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();

    let bytes = fs::read(pipeline.dataset_path()).map_err(|e| e.to_string())?;
    let lines = check_jsonl(&bytes)?;
    ensure(lines.len() == 1, format!("expected 1 line, got {}", lines.len()))?;
    let produced: CitationRecord = serde_json::from_value(lines[0].clone()).map_err(|e| e.to_string())?;

    // canonical form: produced id, normalized DOIs, collapsed whitespace
    let expected = CitationRecord {
        id: ObjectId {
            oid: produced.id.oid.clone(),
        },
        citing_paper: CitingPaper {
            dblp_id: GOLDEN_CITING.to_string(),
        },
        cited_papers: GOLDEN
            .iter()
            .map(|(id, doi, text)| CitedPaper {
                dblp_id: id.map(str::to_string),
                doi: doi.map(normalize_doi),
                bibliographic_reference: text.split_whitespace().collect::<Vec<_>>().join(" "),
            })
            .collect(),
    };
    let want = serde_json::to_string(&expected).map_err(|e| e.to_string())?;
    let got = std::str::from_utf8(&bytes).map_err(|e| e.to_string())?.trim_end();
    ensure(got == want, format!("line differs:\n got  {got}\n want {want}"))?;
    ensure(
        produced.id.oid.len() == 24 && produced.id.oid.bytes().all(|b| b.is_ascii_hexdigit()),
        "id is not 24 hex digits",
    )?;
    ensure(elapsed < AC1_MAX_RUNTIME, format!("runtime {elapsed:?}"))?;
    Ok(format!("1 line, 4 cited papers, byte-exact; {:.2}s < {}s", elapsed.as_secs_f64(), AC1_MAX_RUNTIME.as_secs()))
}

// ---------------------------------------------------------------------------

fn random_documents(rng: &mut ChaCha8Rng, store_keys: &[String], records: &[nodoi_core::DblpRecord], dois: &[String], docs: usize, max_refs: usize) -> Vec<ExtractedDocument> {
    (0..docs)
        .map(|d| {
            let key = if !store_keys.is_empty() && rng.random_bool(0.5) {
                store_keys[rng.random_range(0..store_keys.len())].clone()
            } else {
                format!("conf/rand/C{d}")
            };
            let n = rng.random_range(0..=max_refs);
            ExtractedDocument {
                key,
                references: (0..n as u32)
                    .map(|i| oracle::random_reference(rng, i, records, dois))
                    .collect(),
            }
        })
        .collect()
}

fn ac2_stats() -> Result<String, String> {
    // fixture corpus through the whole pipeline
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let site = FixtureSite::start(&fixture_dir(), tmp.path()).map_err(|e| e.to_string())?;
    let pipeline = Pipeline::new(fixture_config(&site, &tmp.path().join("work"), true));
    pipeline.run(&Stage::ALL).map_err(|e| e.to_string())?;
    let stats: PipelineStats = serde_json::from_str(
        &fs::read_to_string(pipeline.stage_dir(Stage::Export).join("stats.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    ensure(stats == FIXTURE_STATS, format!("fixture stats {stats:?} != {FIXTURE_STATS:?}"))?;
    let dataset = fs::read(pipeline.dataset_path()).map_err(|e| e.to_string())?;
    check_jsonl(&dataset)?;

    // randomized corpora
    let mut corpora = 0u64;
    let mut violations = 0u64;
    for seed in 0..AC2_MIN_CORPORA {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA2_0000 + seed);
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let n_dois = rng.random_range(1..40);
        let dois = oracle::doi_pool(&mut rng, n_dois);
        let n_records = rng.random_range(0..60);
        let records = oracle::random_records(&mut rng, n_records, &dois);
        let mut store = MetadataStore::open(dir.path()).map_err(|e| e.to_string())?;
        for r in &records {
            store.upsert(r.clone()).map_err(|e| e.to_string())?;
        }
        let keys: Vec<String> = records.iter().map(|r| r.key.clone()).collect();
        let n_docs = rng.random_range(0..8);
        let docs = random_documents(&mut rng, &keys, &records, &dois, n_docs, 30);
        let matched = match_documents(&docs, &store, Execution::Sequential);
        let stats = compute_stats(matched.iter().map(|d| d.results.as_slice()));
        corpora += 1;
        if !stats.is_consistent() || stats.files_parsed != docs.len() as u64 {
            violations += 1;
        }
        for d in &matched {
            if let Some(record) = build_citation_record(&d.key, &d.results) {
                audit(&record);
            }
        }
    }
    ensure(violations == 0, format!("{violations}/{corpora} corpora broke the inequalities"))?;
    ensure(corpora >= AC2_MIN_CORPORA, "too few corpora")?;
    Ok(format!(
        "fixture stats exact {:?}; inequalities hold on {corpora}/{corpora} random corpora",
        (stats.files_parsed, stats.references_evaluated, stats.dblp_keys_matched, stats.dois_matched_with_dblp_key, stats.dois_without_dblp_key)
    ))
}

// ---------------------------------------------------------------------------

fn ac3_oracle() -> Result<String, String> {
    let started = Instant::now();
    let mut refs_checked = 0u64;
    let mut disagreements = Vec::new();
    let mut kinds = [0u64; 4];
    for seed in 0..AC3_MIN_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(0xA3_0000 + seed);
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let n_dois = rng.random_range(1..400);
        let dois = oracle::doi_pool(&mut rng, n_dois);
        let n_records = rng.random_range(0..=AC3_MAX_STORE);
        let records = oracle::random_records(&mut rng, n_records, &dois);
        let mut store = MetadataStore::open(dir.path()).map_err(|e| e.to_string())?;
        for r in &records {
            store.upsert(r.clone()).map_err(|e| e.to_string())?;
        }
        let oracle = oracle::Oracle::new(&records);
        let n_refs = rng.random_range(1..=AC3_MAX_REFS);
        for i in 0..n_refs as u32 {
            let reference = oracle::random_reference(&mut rng, i, &records, &dois);
            let got = match_reference(&reference, &store);
            let want = oracle.expect(&reference);
            refs_checked += 1;
            kinds[got.kind as usize] += 1;
            if (got.kind, got.dblp_id.clone(), got.doi.clone()) != want && disagreements.len() < 5 {
                disagreements.push(format!("seed {seed} ref {i}: got {:?}/{:?}/{:?}, oracle {want:?}", got.kind, got.dblp_id, got.doi));
            }
        }
    }
    let elapsed = started.elapsed();
    ensure(disagreements.is_empty(), disagreements.join("; "))?;
    ensure(kinds.iter().all(|&k| k > 0), format!("cascade branches not all exercised: {kinds:?}"))?;
    ensure(elapsed < AC3_MAX_RUNTIME, format!("runtime {elapsed:?}"))?;
    Ok(format!(
        "{refs_checked} references over {AC3_MIN_SEEDS} seeds agree (doi/title/unmatched/dropped = {kinds:?}); {:.1}s < {}s",
        elapsed.as_secs_f64(),
        AC3_MAX_RUNTIME.as_secs()
    ))
}

// ---------------------------------------------------------------------------

fn ac4_validity() -> Result<String, String> {
    // a randomized sweep of its own on top of everything audited so far
    let mut rng = ChaCha8Rng::seed_from_u64(0xA4);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dois = oracle::doi_pool(&mut rng, 50);
    let records = oracle::random_records(&mut rng, 300, &dois);
    let mut store = MetadataStore::open(dir.path()).map_err(|e| e.to_string())?;
    for r in &records {
        store.upsert(r.clone()).map_err(|e| e.to_string())?;
    }
    let keys: Vec<String> = records.iter().map(|r| r.key.clone()).collect();
    let docs = random_documents(&mut rng, &keys, &records, &dois, 500, 40);
    for d in match_documents(&docs, &store, Execution::Parallel) {
        if let Some(record) = build_citation_record(&d.key, &d.results) {
            if record.validate().is_err() {
                ELEMENTS_INVALID.fetch_add(1, Ordering::Relaxed);
            }
            audit(&record);
        }
    }
    let checked = ELEMENTS_CHECKED.load(Ordering::SeqCst);
    let invalid = ELEMENTS_INVALID.load(Ordering::SeqCst);
    ensure(checked > 0, "nothing was checked")?;
    ensure(invalid == 0, format!("{invalid} of {checked} cited_papers elements invalid"))?;
    Ok(format!("{checked}/{checked} cited_papers elements carry an identifier and a reference"))
}

// ---------------------------------------------------------------------------

fn parse_synthetic(records: usize, out: &Path) -> Result<(usize, usize), String> {
    let mut reader = DblpReader::new(BufReader::with_capacity(64 * 1024, synth::SynthCorpus::new(records, 5)));
    let mut parsed = 0usize;
    let mut selected = 0usize;
    let stream = std::iter::from_fn(|| {
        let next = reader.next();
        reader.drain_warnings();
        if let Some(Ok(r)) = &next {
            parsed += 1;
            if ingest::is_oa_nodoi(r) {
                selected += 1;
            }
        }
        next
    });
    ingest::split_by_type(stream, out).map_err(|e| e.to_string())?;
    Ok((parsed, selected))
}

fn ac5_streaming() -> Result<String, String> {
    let mut peaks = Vec::new();
    let mut last_runtime = Duration::ZERO;
    for &n in &AC5_SCALES {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let started = Instant::now();
        let (result, peak) = measure_peak(|| parse_synthetic(n, dir.path()));
        last_runtime = started.elapsed();
        let (parsed, _) = result?;
        ensure(parsed == n, format!("parsed {parsed} of {n} records"))?;
        peaks.push(peak);
    }
    let low = peaks[0] as f64;
    let high = *peaks.iter().max().unwrap() as f64;
    let growth = (high - low) / low;
    let fmt = |b: usize| format!("{:.1} KiB", b as f64 / 1024.0);
    let shown: Vec<String> = peaks.iter().map(|&p| fmt(p)).collect();
    ensure(growth < AC5_MAX_GROWTH, format!("peak grew {:.1}% ({})", growth * 100.0, shown.join(" / ")))?;
    ensure(peaks.iter().all(|&p| p < AC5_PEAK_CAP), format!("peak above cap: {}", shown.join(" / ")))?;
    ensure(last_runtime < AC5_MAX_RUNTIME, format!("10^5 records took {last_runtime:?}"))?;
    Ok(format!(
        "peak heap {} at 10^3/10^4/10^5 records, growth {:.2}% < {:.0}%; 10^5 in {:.1}s",
        shown.join(" / "),
        growth * 100.0,
        AC5_MAX_GROWTH * 100.0,
        last_runtime.as_secs_f64()
    ))
}

// ---------------------------------------------------------------------------

fn arb_text() -> impl Strategy<Value = String> {
    prop_oneof![
        any::<String>(),
        "[ -~]{0,40}",
        Just("quote \" backslash \\ newline \n tab \t nul \u{0} é 🚀".to_string()),
    ]
}

fn arb_cited() -> impl Strategy<Value = CitedPaper> {
    (
        proptest::option::of("[a-z]{1,8}/[a-z]{1,8}/[A-Za-z0-9]{1,12}"),
        proptest::option::of("10\\.[0-9]{4,6}/[a-z0-9.()-]{1,20}"),
        arb_text(),
    )
        .prop_map(|(id, doi, text)| {
            let id = if id.is_none() && doi.is_none() { Some("x/y/Z".to_string()) } else { id };
            CitedPaper {
                dblp_id: id,
                doi,
                bibliographic_reference: if text.is_empty() { "r".into() } else { text },
            }
        })
}

fn arb_record() -> impl Strategy<Value = CitationRecord> {
    ("[0-9a-f]{24}", arb_text(), proptest::collection::vec(arb_cited(), 1..6)).prop_map(
        |(oid, key, cited_papers)| CitationRecord {
            id: ObjectId { oid },
            citing_paper: CitingPaper { dblp_id: key },
            cited_papers,
        },
    )
}

fn ac6_jsonl() -> Result<String, String> {
    let mut runner = TestRunner::new(ProptestConfig {
        cases: AC6_CASES,
        failure_persistence: None,
        ..ProptestConfig::default()
    });
    let before = LINES_CHECKED.load(Ordering::SeqCst);
    runner
        .run(&proptest::collection::vec(arb_record(), 0..8), |records| {
            let mut buf = Vec::new();
            let written = export_jsonl(&records, &mut buf).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(written as usize, records.len());
            let lines = check_jsonl(&buf).map_err(TestCaseError::fail)?;
            prop_assert_eq!(lines.len(), records.len());
            for (line, record) in lines.iter().zip(&records) {
                let back: CitationRecord = serde_json::from_value(line.clone())
                    .map_err(|e| TestCaseError::fail(e.to_string()))?;
                prop_assert_eq!(&back, record);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let lines = LINES_CHECKED.load(Ordering::SeqCst);
    Ok(format!(
        "{AC6_CASES} generated exports ({} lines) plus {before} pipeline lines parse alone and round-trip byte-exact",
        lines - before
    ))
}

// ---------------------------------------------------------------------------

fn ac7_hermetic() -> Result<String, String> {
    let golden = fs::read(fixture_dir().join("expected/dataset.jsonl")).map_err(|e| e.to_string())?;
    let mut notes = Vec::new();
    for consolidate in [true, false] {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let site = FixtureSite::start(&fixture_dir(), tmp.path()).map_err(|e| e.to_string())?;
        let proxy = RecordingProxy::start().map_err(|e| e.to_string())?;
        let mut cfg = fixture_config(&site, &tmp.path().join("work"), consolidate);
        cfg.harvest.proxy = Some(proxy.url());
        cfg.extraction.proxy = Some(proxy.url());
        site.service.fail_next(2, 503);
        let pipeline = Pipeline::new(cfg);
        pipeline.run(&Stage::ALL).map_err(|e| e.to_string())?;

        let produced = fs::read(pipeline.dataset_path()).map_err(|e| e.to_string())?;
        check_jsonl(&produced)?;
        ensure(produced == golden, format!("consolidate={consolidate}: dataset differs from golden"))?;

        // four PDFs reach the service; two of the attempts were failed on purpose
        let requests = site.service.requests();
        ensure(requests.len() == 6, format!("service saw {} attempts, want 6", requests.len()))?;
        let failed = requests.iter().filter(|r| r.status == 503).count();
        ensure(failed == 2, format!("{failed} injected failures observed"))?;
        let flag = if consolidate { "1" } else { "0" };
        ensure(
            requests.iter().all(|r| r.consolidate_citations.as_deref() == Some(flag)),
            "consolidation flag not forwarded",
        )?;
        let manifest = fs::read_to_string(pipeline.stage_dir(Stage::Extract).join("manifest.jsonl"))
            .map_err(|e| e.to_string())?;
        let attempts: u64 = manifest
            .lines()
            .filter_map(|l| serde_json::from_str::<Value>(l).ok())
            .filter_map(|v| v["attempts"].as_u64())
            .sum();
        ensure(attempts == 6, format!("client counted {attempts} attempts, want 6"))?;

        let allowed = [site.host.authority(), site.service.authority()];
        let seen = proxy.authorities();
        let stray: Vec<&String> = seen.iter().filter(|a| !allowed.contains(a)).collect();
        ensure(stray.is_empty(), format!("egress outside the endpoint and PDF host: {stray:?}"))?;
        ensure(seen.contains(&allowed[0]) && seen.contains(&allowed[1]), "proxy was bypassed")?;
        notes.push(format!(
            "consolidation {}: {} proxied requests, 2 retried",
            if consolidate { "on" } else { "off" },
            seen.len()
        ));
    }
    Ok(format!("golden output in both modes; {}", notes.join("; ")))
}

// ---------------------------------------------------------------------------

type Criterion = (&'static str, &'static str, fn() -> Result<String, String>);

fn main() {
    let criteria: [Criterion; 7] = [
        // measured first, before other criteria start server threads
        ("AC5", "streaming memory bound", ac5_streaming),
        ("AC1", "golden record", ac1_golden_record),
        ("AC2", "fixture stats and inequalities", ac2_stats),
        ("AC3", "matcher oracle equivalence", ac3_oracle),
        ("AC6", "JSONL integrity", ac6_jsonl),
        ("AC7", "hermetic service integration", ac7_hermetic),
        ("AC4", "cited_papers validity", ac4_validity),
    ];
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut results = Vec::new();
    for (id, name, run) in criteria {
        if !args.is_empty() && !args.iter().any(|a| id.eq_ignore_ascii_case(a)) {
            continue;
        }
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|payload| {
            let msg = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        results.push((id, name, outcome));
    }
    results.sort_by_key(|(id, _, _)| *id);
    let mut failed = 0;
    for (id, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("{id} PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL  {name}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
