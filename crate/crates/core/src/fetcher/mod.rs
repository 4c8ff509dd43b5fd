//! HTTP retrieval with a consent gate in front of it.
//!
//! [`Fetcher::fetch_checked`] is the entry point the pipeline uses: it refuses
//! without any network traffic when the user has not consented, consults
//! robots.txt when asked to, and only then issues the request.

mod robots;

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use reqwest::header::{HeaderMap, HeaderName, HeaderValue, LOCATION};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

pub use robots::RobotsTxt;

/// Product token matched against robots.txt user-agent lines.
pub const ROBOTS_TOKEN: &str = "scrapeflow";
pub const USER_AGENT: &str = concat!(
    "scrapeflow/",
    env!("CARGO_PKG_VERSION"),
    " (+https://docs.rs/scrapeflow-core)"
);
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_MAX_REDIRECTS: u32 = 5;
pub const DEFAULT_MAX_BODY: u64 = 8 * 1024 * 1024;

const ROBOTS_TIMEOUT: Duration = Duration::from_secs(10);
const ROBOTS_MAX_BODY: u64 = 512 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    User,
    Robots,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsentDecision {
    Allow,
    Deny(DenyReason),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FetchError {
    #[error("invalid url: {0}")]
    InvalidUrl(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("dns lookup failed: {0}")]
    Dns(String),
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("request timed out")]
    Timeout,
    #[error("more than {0} redirects")]
    TooManyRedirects(u32),
    #[error("body exceeds {0} bytes")]
    BodyTooLarge(u64),
    #[error("http status {0}")]
    HttpStatus(u16),
    #[error("scraping not permitted ({0:?})")]
    ConsentDenied(DenyReason),
    #[error("transport error: {0}")]
    Transport(String),
}

impl FetchError {
    /// Stable machine-readable code, e.g. `http_status:404`.
    pub fn reason_code(&self) -> String {
        match self {
            FetchError::InvalidUrl(_) => "invalid_url".into(),
            FetchError::InvalidRequest(_) => "invalid_request".into(),
            FetchError::Dns(_) => "dns".into(),
            FetchError::Connect(_) => "connect".into(),
            FetchError::Timeout => "timeout".into(),
            FetchError::TooManyRedirects(_) => "too_many_redirects".into(),
            FetchError::BodyTooLarge(_) => "body_too_large".into(),
            FetchError::HttpStatus(code) => format!("http_status:{code}"),
            FetchError::ConsentDenied(DenyReason::User) => "consent_denied".into(),
            FetchError::ConsentDenied(DenyReason::Robots) => "consent_denied:robots".into(),
            FetchError::Transport(_) => "transport".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchRequest {
    pub url: Url,
    pub headers: BTreeMap<String, String>,
    pub timeout: Duration,
    pub max_redirects: u32,
    pub max_body: u64,
    pub consent: bool,
    pub respect_robots: bool,
}

impl FetchRequest {
    /// A request with default limits and no consent given yet.
    pub fn new(url: &str) -> Result<Self, FetchError> {
        let url = Url::parse(url).map_err(|e| FetchError::InvalidUrl(format!("{url}: {e}")))?;
        if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none() {
            return Err(FetchError::InvalidUrl(format!(
                "{url}: expected an absolute http(s) url"
            )));
        }
        Ok(FetchRequest {
            url,
            headers: default_headers(),
            timeout: DEFAULT_TIMEOUT,
            max_redirects: DEFAULT_MAX_REDIRECTS,
            max_body: DEFAULT_MAX_BODY,
            consent: false,
            respect_robots: true,
        })
    }

    pub fn with_consent(mut self, consent: bool) -> Self {
        self.consent = consent;
        self
    }

    pub fn with_robots(mut self, respect: bool) -> Self {
        self.respect_robots = respect;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_max_redirects(mut self, max: u32) -> Self {
        self.max_redirects = max;
        self
    }

    pub fn with_max_body(mut self, max: u64) -> Self {
        self.max_body = max;
        self
    }

    fn validate(&self) -> Result<(), FetchError> {
        if self.timeout.is_zero() {
            return Err(FetchError::InvalidRequest(
                "timeout must be positive".into(),
            ));
        }
        if self.max_body == 0 {
            return Err(FetchError::InvalidRequest(
                "max_body must be positive".into(),
            ));
        }
        Ok(())
    }

    /// `<scheme>://<host>[:port]/robots.txt`
    pub fn robots_url(&self) -> Url {
        let mut u = self.url.clone();
        u.set_path("/robots.txt");
        u.set_query(None);
        u.set_fragment(None);
        u
    }

    fn path_and_query(&self) -> String {
        match self.url.query() {
            Some(q) => format!("{}?{q}", self.url.path()),
            None => self.url.path().to_string(),
        }
    }
}

pub fn default_headers() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("user-agent".to_string(), USER_AGENT.to_string()),
        (
            "accept".to_string(),
            "text/html,application/xhtml+xml;q=0.9,*/*;q=0.5".to_string(),
        ),
    ])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResponse {
    pub status: u16,
    /// Lowercased header names; repeated headers are joined with `, `.
    pub headers: BTreeMap<String, String>,
    pub body: Vec<u8>,
    pub final_url: Url,
    pub elapsed: Duration,
}

impl FetchResponse {
    pub fn content_type(&self) -> Option<&str> {
        self.headers.get("content-type").map(String::as_str)
    }

    /// HTML unless a content type says otherwise.
    pub fn is_html(&self) -> bool {
        match self.content_type() {
            None => true,
            Some(ct) => {
                let mime = ct
                    .split(';')
                    .next()
                    .unwrap_or("")
                    .trim()
                    .to_ascii_lowercase();
                mime.is_empty() || mime == "text/html" || mime == "application/xhtml+xml"
            }
        }
    }

    /// The `charset` parameter of the content type, if any.
    pub fn charset(&self) -> Option<&str> {
        self.content_type()?.split(';').skip(1).find_map(|param| {
            let (k, v) = param.split_once('=')?;
            k.trim()
                .eq_ignore_ascii_case("charset")
                .then(|| v.trim().trim_matches('"'))
        })
    }
}

/// Applies the user flag, then robots.txt when enabled. An unparseable robots body
/// counts as absent.
pub fn check_consent(request: &FetchRequest, robots_body: Option<&[u8]>) -> ConsentDecision {
    if !request.consent {
        return ConsentDecision::Deny(DenyReason::User);
    }
    if !request.respect_robots {
        return ConsentDecision::Allow;
    }
    let Some(body) = robots_body else {
        return ConsentDecision::Allow;
    };
    let Ok(text) = std::str::from_utf8(body) else {
        log::warn!(
            "robots.txt for {} is not UTF-8; treating as absent",
            request.url
        );
        return ConsentDecision::Allow;
    };
    if RobotsTxt::parse(text).is_allowed(ROBOTS_TOKEN, &request.path_and_query()) {
        ConsentDecision::Allow
    } else {
        ConsentDecision::Deny(DenyReason::Robots)
    }
}

type HostLock = Arc<tokio::sync::Mutex<Option<Instant>>>;

/// Per-host serialization with an optional minimum gap between requests.
#[derive(Debug, Default)]
struct Politeness {
    delay: Duration,
    hosts: Mutex<HashMap<String, HostLock>>,
}

impl Politeness {
    fn lock_for(&self, url: &Url) -> HostLock {
        let key = format!(
            "{}:{}",
            url.host_str().unwrap_or(""),
            url.port_or_known_default().unwrap_or(0)
        );
        self.hosts.lock().entry(key).or_default().clone()
    }
}

#[derive(Debug, Clone)]
pub struct Fetcher {
    client: reqwest::Client,
    politeness: Option<Arc<Politeness>>,
}

impl Default for Fetcher {
    fn default() -> Self {
        Self::new()
    }
}

impl Fetcher {
    pub fn new() -> Self {
        let client = reqwest::Client::builder()
            .redirect(reqwest::redirect::Policy::none())
            .build()
            .expect("http client builds");
        Fetcher {
            client,
            politeness: None,
        }
    }

    /// At most one in-flight request per host, spaced at least `delay` apart.
    pub fn with_politeness(mut self, delay: Duration) -> Self {
        self.politeness = Some(Arc::new(Politeness {
            delay,
            ..Default::default()
        }));
        self
    }

    /// Consent gate, then fetch. A denial issues no request for the page.
    pub async fn fetch_checked(&self, request: &FetchRequest) -> Result<FetchResponse, FetchError> {
        request.validate()?;
        if !request.consent {
            return Err(FetchError::ConsentDenied(DenyReason::User));
        }
        let robots = if request.respect_robots {
            self.fetch_robots(request).await
        } else {
            None
        };
        match check_consent(request, robots.as_deref()) {
            ConsentDecision::Allow => self.fetch(request).await,
            ConsentDecision::Deny(reason) => Err(FetchError::ConsentDenied(reason)),
        }
    }

    async fn fetch_robots(&self, request: &FetchRequest) -> Option<Vec<u8>> {
        let mut robots = request.clone();
        robots.url = request.robots_url();
        robots.timeout = ROBOTS_TIMEOUT.min(request.timeout);
        robots.max_body = ROBOTS_MAX_BODY;
        match self.fetch(&robots).await {
            Ok(resp) => Some(resp.body),
            Err(FetchError::HttpStatus(_)) => None,
            Err(e) => {
                log::info!("robots.txt unavailable for {}: {e}", request.url);
                None
            }
        }
    }

    /// Single-attempt GET following up to `max_redirects` redirects. 4xx/5xx
    /// responses are errors.
    pub async fn fetch(&self, request: &FetchRequest) -> Result<FetchResponse, FetchError> {
        request.validate()?;
        let _guard;
        if let Some(p) = &self.politeness {
            let lock = p.lock_for(&request.url);
            let mut last = lock.clone().lock_owned().await;
            if let Some(prev) = *last {
                let wait = p.delay.saturating_sub(prev.elapsed());
                if !wait.is_zero() {
                    tokio::time::sleep(wait).await;
                }
            }
            *last = Some(Instant::now());
            _guard = last;
        }
        let started = Instant::now();
        let result = tokio::time::timeout(request.timeout, self.fetch_inner(request)).await;
        let (status, headers, body, final_url) = match result {
            Ok(r) => r?,
            Err(_) => return Err(FetchError::Timeout),
        };
        let elapsed = started.elapsed().max(Duration::from_nanos(1));
        Ok(FetchResponse {
            status,
            headers,
            body,
            final_url,
            elapsed,
        })
    }

    async fn fetch_inner(
        &self,
        request: &FetchRequest,
    ) -> Result<(u16, BTreeMap<String, String>, Vec<u8>, Url), FetchError> {
        let headers = to_header_map(&request.headers)?;
        let mut url = request.url.clone();
        let mut redirects = 0u32;
        loop {
            let resp = self
                .client
                .get(url.clone())
                .headers(headers.clone())
                .send()
                .await
                .map_err(classify)?;
            let status = resp.status();
            if status.is_redirection() {
                if let Some(location) = resp.headers().get(LOCATION).and_then(|l| l.to_str().ok()) {
                    if redirects >= request.max_redirects {
                        return Err(FetchError::TooManyRedirects(request.max_redirects));
                    }
                    let next = url.join(location).map_err(|e| {
                        FetchError::InvalidUrl(format!("redirect to {location}: {e}"))
                    })?;
                    if !matches!(next.scheme(), "http" | "https") {
                        return Err(FetchError::InvalidUrl(format!("redirect to {next}")));
                    }
                    url = next;
                    redirects += 1;
                    continue;
                }
            }
            if status.is_client_error() || status.is_server_error() {
                return Err(FetchError::HttpStatus(status.as_u16()));
            }
            let mut out_headers: BTreeMap<String, String> = BTreeMap::new();
            for (name, value) in resp.headers() {
                let value = String::from_utf8_lossy(value.as_bytes()).into_owned();
                out_headers
                    .entry(name.as_str().to_string())
                    .and_modify(|v| {
                        v.push_str(", ");
                        v.push_str(&value);
                    })
                    .or_insert(value);
            }
            if resp
                .content_length()
                .is_some_and(|len| len > request.max_body)
            {
                return Err(FetchError::BodyTooLarge(request.max_body));
            }
            let body = read_limited(resp, request.max_body).await?;
            return Ok((status.as_u16(), out_headers, body, url));
        }
    }
}

async fn read_limited(mut resp: reqwest::Response, max: u64) -> Result<Vec<u8>, FetchError> {
    let mut body = Vec::new();
    while let Some(chunk) = resp.chunk().await.map_err(classify)? {
        if body.len() as u64 + chunk.len() as u64 > max {
            return Err(FetchError::BodyTooLarge(max));
        }
        body.extend_from_slice(&chunk);
    }
    Ok(body)
}

fn to_header_map(headers: &BTreeMap<String, String>) -> Result<HeaderMap, FetchError> {
    let mut map = HeaderMap::new();
    for (k, v) in headers {
        let name = HeaderName::from_bytes(k.as_bytes())
            .map_err(|e| FetchError::InvalidRequest(format!("header {k}: {e}")))?;
        let value = HeaderValue::from_str(v)
            .map_err(|e| FetchError::InvalidRequest(format!("header {k}: {e}")))?;
        map.insert(name, value);
    }
    Ok(map)
}

fn error_chain(e: &dyn std::error::Error) -> String {
    let mut out = e.to_string();
    let mut src = e.source();
    while let Some(s) = src {
        out.push_str(": ");
        out.push_str(&s.to_string());
        src = s.source();
    }
    out
}

fn classify(e: reqwest::Error) -> FetchError {
    let chain = error_chain(&e);
    if e.is_timeout() {
        FetchError::Timeout
    } else if e.is_connect() {
        let lower = chain.to_ascii_lowercase();
        if lower.contains("dns")
            || lower.contains("failed to lookup")
            || lower.contains("name or service")
        {
            FetchError::Dns(chain)
        } else {
            FetchError::Connect(chain)
        }
    } else {
        FetchError::Transport(chain)
    }
}
