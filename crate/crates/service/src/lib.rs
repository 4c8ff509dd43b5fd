//! JSON HTTP API over the scrapeflow pipeline.
//!
//! Clients register and log in to obtain a bearer token, then scrape a URL into a
//! server-side job, refine the job's contents, export them to CSV and download the
//! file. Every scrape attempt is recorded in the caller's history.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::http::{header, HeaderValue, Method};
use axum::routing::{get, post};
use axum::Router;
use chrono::Duration;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use scrapeflow_core::fetcher::Fetcher;
use scrapeflow_core::persistence::{
    DocumentStore, JsonlStore, SessionStore, StoreError, DEFAULT_SESSION_TTL,
};
use scrapeflow_core::{Clock, SystemClock};

mod auth;
mod error;
pub mod jobs;
mod routes;

pub use auth::AuthUser;
pub use error::ApiError;
pub use jobs::{JobCache, JobState, ScrapeJob, DEFAULT_JOBS_PER_USER, DEFAULT_JOB_TTL};

/// Collection holding export metadata (owner, filename, file path).
pub const DOWNLOADS: &str = "downloads";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_DATA_DIR: &str = "scrapeflow-data";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid {var}: {message}")]
    Invalid { var: &'static str, message: String },
}

#[derive(Debug, Clone)]
pub struct Config {
    pub data_dir: PathBuf,
    pub bind: SocketAddr,
    pub session_ttl: Duration,
    pub job_ttl: Duration,
    pub jobs_per_user: usize,
    /// Allowed browser origin; any origin when unset.
    pub cors_origin: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data_dir: PathBuf::from(DEFAULT_DATA_DIR),
            bind: DEFAULT_BIND.parse().expect("valid default bind"),
            session_ttl: DEFAULT_SESSION_TTL,
            job_ttl: DEFAULT_JOB_TTL,
            jobs_per_user: DEFAULT_JOBS_PER_USER,
            cors_origin: None,
        }
    }
}

impl Config {
    /// Reads `SCRAPEFLOW_DATA_DIR`, `SCRAPEFLOW_BIND`, `SCRAPEFLOW_SESSION_TTL_H` and
    /// `SCRAPEFLOW_CORS_ORIGIN`, falling back to defaults.
    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut c = Config::default();
        if let Some(dir) = get("SCRAPEFLOW_DATA_DIR").filter(|s| !s.is_empty()) {
            c.data_dir = dir.into();
        }
        if let Some(bind) = get("SCRAPEFLOW_BIND").filter(|s| !s.is_empty()) {
            c.bind = bind.parse().map_err(|e| ConfigError::Invalid {
                var: "SCRAPEFLOW_BIND",
                message: format!("{bind:?}: {e}"),
            })?;
        }
        if let Some(ttl) = get("SCRAPEFLOW_SESSION_TTL_H").filter(|s| !s.is_empty()) {
            let hours: i64 =
                ttl.parse()
                    .ok()
                    .filter(|h| *h > 0)
                    .ok_or_else(|| ConfigError::Invalid {
                        var: "SCRAPEFLOW_SESSION_TTL_H",
                        message: format!("{ttl:?} is not a positive number of hours"),
                    })?;
            c.session_ttl = Duration::hours(hours);
        }
        c.cors_origin = get("SCRAPEFLOW_CORS_ORIGIN").filter(|s| !s.is_empty());
        Ok(c)
    }
}

pub struct AppState {
    pub store: Arc<dyn DocumentStore>,
    pub sessions: SessionStore,
    pub clock: Arc<dyn Clock>,
    pub fetcher: Fetcher,
    pub jobs: JobCache,
    pub downloads_dir: PathBuf,
}

impl AppState {
    pub fn new(
        store: Arc<dyn DocumentStore>,
        downloads_dir: PathBuf,
        clock: Arc<dyn Clock>,
        config: &Config,
    ) -> Self {
        AppState {
            store,
            sessions: SessionStore::new(config.session_ttl),
            clock,
            fetcher: Fetcher::new(),
            jobs: JobCache::new(config.job_ttl, config.jobs_per_user),
            downloads_dir,
        }
    }

    /// Opens the JSON-lines store under `config.data_dir` with the system clock.
    pub fn open(config: &Config) -> Result<Self, StoreError> {
        Self::open_with_clock(config, Arc::new(SystemClock))
    }

    pub fn open_with_clock(config: &Config, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let store = JsonlStore::open(&config.data_dir)?;
        let downloads = config.data_dir.join("downloads");
        std::fs::create_dir_all(&downloads).map_err(|e| StoreError::Unavailable(e.to_string()))?;
        Ok(Self::new(Arc::new(store), downloads, clock, config))
    }
}

fn cors(origin: Option<&str>) -> CorsLayer {
    let layer = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST, Method::OPTIONS])
        .allow_headers([header::AUTHORIZATION, header::CONTENT_TYPE])
        .expose_headers([header::CONTENT_DISPOSITION]);
    match origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(o) => layer.allow_origin(AllowOrigin::exact(o)),
        None => layer.allow_origin(Any),
    }
}

pub fn router(state: Arc<AppState>, cors_origin: Option<&str>) -> Router {
    Router::new()
        .route("/api/register", post(routes::register))
        .route("/api/login", post(routes::login))
        .route("/api/logout", post(routes::logout))
        .route("/api/scrape", post(routes::scrape))
        .route("/api/jobs/{id}/refine", post(routes::refine))
        .route("/api/jobs/{id}/export", post(routes::export))
        .route("/api/history", get(routes::history))
        .route("/api/download/{id}", get(routes::download))
        .layer(cors(cors_origin))
        .with_state(state)
}

/// Serves on an already-bound listener until the future is dropped.
pub async fn serve_on(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    cors_origin: Option<&str>,
) -> std::io::Result<()> {
    axum::serve(listener, router(state, cors_origin)).await
}

/// Binds `config.bind` and serves forever.
pub async fn serve(config: Config) -> std::io::Result<()> {
    let state = AppState::open(&config).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    serve_on(listener, Arc::new(state), config.cors_origin.as_deref()).await
}
