//! In-process HTTP stand-ins used by the test suites and by
//! `nodoi mock-service`:
//!
//! * [`MockExtractionService`] speaks the extraction service's HTTP API and
//!   replays fixture TEI documents keyed by the SHA-256 of the uploaded PDF.
//! * [`MockHost`] serves static routes (PDFs, landing pages) with optional
//!   injected failures and latency, and counts attempts and concurrency.
//! * [`RecordingProxy`] is a forwarding HTTP proxy that logs the authority
//!   of every request passing through it.
//!
//! * [`FixtureSite`] wires the bundled fixture corpus to a host and a
//!   service so the whole pipeline can run offline.
//!
//! Each server runs on its own thread and runtime, so it can be driven from
//! synchronous and asynchronous callers alike. Dropping a handle stops it.

use std::collections::HashMap;
use std::fs;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU16, AtomicU32, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::{Multipart, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use sha2::{Digest, Sha256};
use tokio::sync::oneshot;

pub const ALIVE_ROUTE: &str = "/api/isalive";
pub const FULLTEXT_ROUTE: &str = "/api/processFulltextDocument";

/// Lowercase hex SHA-256.
pub fn checksum(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl ServerHandle {
    fn spawn(app: Router, bind: SocketAddr) -> io::Result<Self> {
        let listener = std::net::TcpListener::bind(bind)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
            runtime.shutdown_timeout(Duration::from_millis(200));
        });
        Ok(ServerHandle {
            addr,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

fn localhost() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 0))
}

#[derive(Default)]
struct Concurrency {
    current: AtomicUsize,
    max: AtomicUsize,
}

struct InFlight<'a>(&'a Concurrency);

impl<'a> InFlight<'a> {
    fn enter(c: &'a Concurrency) -> Self {
        let now = c.current.fetch_add(1, Ordering::SeqCst) + 1;
        c.max.fetch_max(now, Ordering::SeqCst);
        InFlight(c)
    }
}

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        self.0.current.fetch_sub(1, Ordering::SeqCst);
    }
}

// ---------------------------------------------------------------------------
// static host

/// One path served by a [`MockHost`].
#[derive(Debug, Clone)]
pub struct Route {
    pub status: u16,
    pub content_type: String,
    pub body: Bytes,
    /// The first `fail_first` requests answer 503.
    pub fail_first: u32,
    pub delay: Duration,
}

impl Route {
    pub fn pdf(body: impl Into<Bytes>) -> Self {
        Route {
            status: 200,
            content_type: "application/pdf".into(),
            body: body.into(),
            fail_first: 0,
            delay: Duration::ZERO,
        }
    }

    pub fn html(body: &str) -> Self {
        Route {
            content_type: "text/html; charset=utf-8".into(),
            ..Route::pdf(body.to_string())
        }
    }

    pub fn status(status: u16) -> Self {
        Route {
            status,
            content_type: "text/plain".into(),
            ..Route::pdf(Bytes::new())
        }
    }

    pub fn failing_first(mut self, n: u32) -> Self {
        self.fail_first = n;
        self
    }

    pub fn delayed(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

struct HostState {
    routes: HashMap<String, Route>,
    attempts: Mutex<HashMap<String, u32>>,
    concurrency: Concurrency,
}

pub struct MockHost {
    server: ServerHandle,
    state: Arc<HostState>,
}

async fn serve_route(State(state): State<Arc<HostState>>, req: Request) -> Response {
    let _guard = InFlight::enter(&state.concurrency);
    let path = req.uri().path().to_string();
    let attempt = {
        let mut attempts = state.attempts.lock().unwrap();
        let n = attempts.entry(path.clone()).or_insert(0);
        *n += 1;
        *n
    };
    let Some(route) = state.routes.get(&path) else {
        return StatusCode::NOT_FOUND.into_response();
    };
    if !route.delay.is_zero() {
        tokio::time::sleep(route.delay).await;
    }
    if attempt <= route.fail_first {
        return StatusCode::SERVICE_UNAVAILABLE.into_response();
    }
    let status = StatusCode::from_u16(route.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    (
        status,
        [(header::CONTENT_TYPE, route.content_type.clone())],
        route.body.clone(),
    )
        .into_response()
}

impl MockHost {
    pub fn start<I, P>(routes: I) -> io::Result<Self>
    where
        I: IntoIterator<Item = (P, Route)>,
        P: Into<String>,
    {
        let state = Arc::new(HostState {
            routes: routes.into_iter().map(|(p, r)| (p.into(), r)).collect(),
            attempts: Mutex::default(),
            concurrency: Concurrency::default(),
        });
        let app = Router::new()
            .fallback(serve_route)
            .with_state(Arc::clone(&state));
        Ok(MockHost {
            server: ServerHandle::spawn(app, localhost())?,
            state,
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.server.addr)
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.base_url(), path)
    }

    pub fn authority(&self) -> String {
        self.server.addr.to_string()
    }

    pub fn attempts(&self, path: &str) -> u32 {
        self.state.attempts.lock().unwrap().get(path).copied().unwrap_or(0)
    }

    pub fn total_requests(&self) -> u32 {
        self.state.attempts.lock().unwrap().values().sum()
    }

    /// Highest number of requests that were being served at once.
    pub fn max_in_flight(&self) -> usize {
        self.state.concurrency.max.load(Ordering::SeqCst)
    }
}

// ---------------------------------------------------------------------------
// extraction service

/// TEI documents returned for one PDF; `consolidated` is served instead of
/// `plain` when the request asks for citation consolidation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeiFixture {
    pub plain: String,
    pub consolidated: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedRequest {
    pub checksum: Option<String>,
    pub consolidate_citations: Option<String>,
    pub include_raw_citations: Option<String>,
    pub status: u16,
}

struct ServiceState {
    fixtures: HashMap<String, TeiFixture>,
    fail_next: AtomicU32,
    fail_status: AtomicU16,
    delay: Mutex<Duration>,
    requests: Mutex<Vec<LoggedRequest>>,
    health_checks: AtomicU32,
    concurrency: Concurrency,
}

pub struct MockExtractionService {
    server: ServerHandle,
    state: Arc<ServiceState>,
}

async fn alive(State(state): State<Arc<ServiceState>>) -> &'static str {
    state.health_checks.fetch_add(1, Ordering::SeqCst);
    "true"
}

async fn fulltext(State(state): State<Arc<ServiceState>>, mut multipart: Multipart) -> Response {
    let _guard = InFlight::enter(&state.concurrency);
    let mut logged = LoggedRequest {
        checksum: None,
        consolidate_citations: None,
        include_raw_citations: None,
        status: 200,
    };
    loop {
        match multipart.next_field().await {
            Ok(Some(field)) => {
                let name = field.name().unwrap_or_default().to_string();
                let Ok(data) = field.bytes().await else {
                    logged.status = 400;
                    break;
                };
                match name.as_str() {
                    "input" => logged.checksum = Some(checksum(&data)),
                    "consolidateCitations" => {
                        logged.consolidate_citations = Some(String::from_utf8_lossy(&data).into_owned())
                    }
                    "includeRawCitations" => {
                        logged.include_raw_citations = Some(String::from_utf8_lossy(&data).into_owned())
                    }
                    _ => {}
                }
            }
            Ok(None) => break,
            Err(_) => {
                logged.status = 400;
                break;
            }
        }
    }
    let delay = *state.delay.lock().unwrap();
    if !delay.is_zero() {
        tokio::time::sleep(delay).await;
    }

    let injected = state
        .fail_next
        .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
        .is_ok();
    let body = if injected {
        logged.status = state.fail_status.load(Ordering::SeqCst);
        None
    } else if logged.status != 200 {
        None
    } else {
        let fixture = logged.checksum.as_ref().and_then(|c| state.fixtures.get(c));
        match fixture {
            None => {
                logged.status = 400;
                None
            }
            Some(f) => {
                let consolidate = logged.consolidate_citations.as_deref() == Some("1");
                Some(match (&f.consolidated, consolidate) {
                    (Some(c), true) => c.clone(),
                    _ => f.plain.clone(),
                })
            }
        }
    };
    let status = StatusCode::from_u16(logged.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    state.requests.lock().unwrap().push(logged);
    match body {
        Some(tei) => (
            status,
            [(header::CONTENT_TYPE, HeaderValue::from_static("application/xml"))],
            tei,
        )
            .into_response(),
        None => status.into_response(),
    }
}

/// Loads fixtures from `dir`: every `<name>.pdf` paired with
/// `<name>.tei.xml` and, optionally, `<name>.consolidated.tei.xml`.
pub fn load_tei_fixtures(dir: &Path) -> io::Result<HashMap<String, TeiFixture>> {
    let mut fixtures = HashMap::new();
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("pdf") {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let plain_path = dir.join(format!("{stem}.tei.xml"));
        if !plain_path.exists() {
            continue;
        }
        let consolidated_path = dir.join(format!("{stem}.consolidated.tei.xml"));
        let fixture = TeiFixture {
            plain: fs::read_to_string(&plain_path)?,
            consolidated: consolidated_path
                .exists()
                .then(|| fs::read_to_string(&consolidated_path))
                .transpose()?,
        };
        fixtures.insert(checksum(&fs::read(&path)?), fixture);
    }
    Ok(fixtures)
}

impl MockExtractionService {
    pub fn start(fixtures: HashMap<String, TeiFixture>) -> io::Result<Self> {
        Self::start_on(fixtures, localhost())
    }

    pub fn start_on(fixtures: HashMap<String, TeiFixture>, bind: SocketAddr) -> io::Result<Self> {
        let state = Arc::new(ServiceState {
            fixtures,
            fail_next: AtomicU32::new(0),
            fail_status: AtomicU16::new(500),
            delay: Mutex::new(Duration::ZERO),
            requests: Mutex::default(),
            health_checks: AtomicU32::new(0),
            concurrency: Concurrency::default(),
        });
        let app = Router::new()
            .route(ALIVE_ROUTE, get(alive))
            .route(FULLTEXT_ROUTE, post(fulltext))
            .with_state(Arc::clone(&state));
        Ok(MockExtractionService {
            server: ServerHandle::spawn(app, bind)?,
            state,
        })
    }

    pub fn from_dir(dir: &Path) -> io::Result<Self> {
        Self::start(load_tei_fixtures(dir)?)
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.server.addr)
    }

    pub fn addr(&self) -> SocketAddr {
        self.server.addr
    }

    pub fn authority(&self) -> String {
        self.server.addr.to_string()
    }

    /// The next `n` extraction requests answer `status` instead of TEI.
    pub fn fail_next(&self, n: u32, status: u16) {
        self.state.fail_status.store(status, Ordering::SeqCst);
        self.state.fail_next.store(n, Ordering::SeqCst);
    }

    pub fn set_delay(&self, delay: Duration) {
        *self.state.delay.lock().unwrap() = delay;
    }

    pub fn requests(&self) -> Vec<LoggedRequest> {
        self.state.requests.lock().unwrap().clone()
    }

    pub fn attempts(&self) -> usize {
        self.state.requests.lock().unwrap().len()
    }

    pub fn health_checks(&self) -> u32 {
        self.state.health_checks.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> usize {
        self.state.concurrency.max.load(Ordering::SeqCst)
    }

    pub fn stop(mut self) {
        self.server.stop();
    }
}

// ---------------------------------------------------------------------------
// recording proxy

struct ProxyState {
    client: reqwest::Client,
    seen: Mutex<Vec<String>>,
}

pub struct RecordingProxy {
    server: ServerHandle,
    state: Arc<ProxyState>,
}

const HOP_HEADERS: &[&str] = &[
    "host",
    "connection",
    "proxy-connection",
    "proxy-authorization",
    "keep-alive",
    "transfer-encoding",
    "te",
    "upgrade",
];

async fn forward(State(state): State<Arc<ProxyState>>, req: Request) -> Response {
    let authority = req
        .uri()
        .authority()
        .map(|a| a.to_string())
        .or_else(|| {
            req.headers()
                .get(header::HOST)
                .and_then(|h| h.to_str().ok())
                .map(str::to_string)
        })
        .unwrap_or_default();
    state.seen.lock().unwrap().push(authority.clone());

    if req.method() == Method::CONNECT || req.uri().scheme().is_none() {
        return StatusCode::METHOD_NOT_ALLOWED.into_response();
    }
    let method = req.method().clone();
    let target = req.uri().to_string();
    let mut headers = req.headers().clone();
    for h in HOP_HEADERS {
        headers.remove(*h);
    }
    let body = match axum::body::to_bytes(req.into_body(), 256 * 1024 * 1024).await {
        Ok(b) => b,
        Err(_) => return StatusCode::BAD_REQUEST.into_response(),
    };
    let upstream = state
        .client
        .request(method, &target)
        .headers(headers)
        .body(body)
        .send()
        .await;
    match upstream {
        Ok(resp) => {
            let status = resp.status();
            let mut out_headers = resp.headers().clone();
            for h in HOP_HEADERS {
                out_headers.remove(*h);
            }
            out_headers.remove(header::CONTENT_LENGTH);
            let bytes = resp.bytes().await.unwrap_or_default();
            let mut response = Response::new(Body::from(bytes));
            *response.status_mut() = status;
            *response.headers_mut() = out_headers;
            response
        }
        Err(_) => StatusCode::BAD_GATEWAY.into_response(),
    }
}

impl RecordingProxy {
    pub fn start() -> io::Result<Self> {
        let client = reqwest::Client::builder()
            .no_proxy()
            .redirect(reqwest::redirect::Policy::none())
            .build()
            .map_err(io::Error::other)?;
        let state = Arc::new(ProxyState {
            client,
            seen: Mutex::default(),
        });
        let app = Router::new().fallback(forward).with_state(Arc::clone(&state));
        Ok(RecordingProxy {
            server: ServerHandle::spawn(app, localhost())?,
            state,
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.server.addr)
    }

    /// `host:port` of every proxied request, in arrival order.
    pub fn authorities(&self) -> Vec<String> {
        self.state.seen.lock().unwrap().clone()
    }
}

// ---------------------------------------------------------------------------
// fixture site

/// Placeholder in the fixture corpus replaced by the PDF host's base URL.
pub const OA_HOST_PLACEHOLDER: &str = "{{OA_HOST}}";

/// Directory of the fixtures bundled with this crate.
pub fn fixture_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures"))
}

/// The fixture corpus served for real: every `service/*.pdf` is published
/// under `/oa/`, `/oa/landing.html` is an HTML page and anything else is a
/// 404. The corpus is rewritten to point at the host.
pub struct FixtureSite {
    pub host: MockHost,
    pub service: MockExtractionService,
    pub corpus: PathBuf,
}

impl FixtureSite {
    pub fn start(fixtures: &Path, out_dir: &Path) -> io::Result<Self> {
        Self::with_corpus(fixtures, "corpus.xml", out_dir)
    }

    /// Like [`FixtureSite::start`] with another corpus file from `fixtures`.
    pub fn with_corpus(fixtures: &Path, corpus_file: &str, out_dir: &Path) -> io::Result<Self> {
        let service_dir = fixtures.join("service");
        let mut routes = vec![(
            "/oa/landing.html".to_string(),
            Route::html("<html><body>Landing page</body></html>"),
        )];
        for entry in fs::read_dir(&service_dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("pdf") {
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                routes.push((format!("/oa/{name}"), Route::pdf(fs::read(&path)?)));
            }
        }
        let host = MockHost::start(routes)?;
        let service = MockExtractionService::from_dir(&service_dir)?;
        let corpus_text = fs::read_to_string(fixtures.join(corpus_file))?
            .replace(OA_HOST_PLACEHOLDER, &host.base_url());
        fs::create_dir_all(out_dir)?;
        let corpus = out_dir.join("corpus.xml");
        fs::write(&corpus, corpus_text)?;
        Ok(FixtureSite {
            host,
            service,
            corpus,
        })
    }
}
