use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use scrapeflow_core::dom::{efficiency, FilterRule, TagSet, TraversalStats};
use scrapeflow_core::extractor::{ClassContents, ExtractOptions, RefinementQuery};
use scrapeflow_core::fetcher::{FetchError, FetchRequest};
use scrapeflow_core::persistence::{
    attach_csv, authenticate, count_history, create_user, list_history, record_history,
    AuthOutcome, CreateOutcome, HistoryRecord, HistoryStatus,
};
use scrapeflow_core::pipeline::{scrape_url, PipelineError};
use scrapeflow_core::structurer::{render_bytes, to_csv};

use crate::jobs::{JobState, Lookup, ScrapeJob};
use crate::{ApiError, AppState, AuthUser, DOWNLOADS};

type Shared = State<Arc<AppState>>;

const DEFAULT_HISTORY_PAGE: usize = 50;
const MAX_HISTORY_PAGE: usize = 500;

/// Parses a JSON body; any syntax or shape error is a 400.
fn parse_json<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> T + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))
}

#[derive(Deserialize)]
struct Credentials {
    username: String,
    password: String,
}

pub async fn register(State(state): Shared, body: Bytes) -> Result<Response, ApiError> {
    let creds: Credentials = parse_json(&body)?;
    let username = creds.username.clone();
    let store = state.store.clone();
    let outcome =
        blocking(move || create_user(store.as_ref(), &creds.username, &creds.password)).await??;
    match outcome {
        CreateOutcome::Created => {
            Ok((StatusCode::CREATED, Json(json!({ "username": username }))).into_response())
        }
        CreateOutcome::UsernameExists => Err(ApiError::new(
            StatusCode::CONFLICT,
            "username_exists",
            "Username Exist !",
        )),
    }
}

pub async fn login(State(state): Shared, body: Bytes) -> Result<Json<Value>, ApiError> {
    let creds: Credentials = parse_json(&body)?;
    let now = state.clock.now();
    let st = state.clone();
    let outcome = blocking(move || {
        authenticate(
            st.store.as_ref(),
            &st.sessions,
            &creds.username,
            &creds.password,
            now,
        )
    })
    .await??;
    match outcome {
        AuthOutcome::Session(s) => Ok(Json(
            json!({ "token": s.token, "username": s.username, "expires_at": s.expires_at }),
        )),
        AuthOutcome::InvalidCredentials => Err(ApiError::new(
            StatusCode::UNAUTHORIZED,
            "invalid_credentials",
            "Invalid Credentials !",
        )),
    }
}

pub async fn logout(State(state): Shared, user: AuthUser) -> StatusCode {
    state.sessions.revoke(&user.0.token);
    StatusCode::NO_CONTENT
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
struct ScrapeBody {
    url: String,
    #[serde(default)]
    consent: bool,
    #[serde(default = "yes")]
    respect_robots: bool,
    /// Comma-separated tag names; all tags when absent.
    #[serde(default)]
    tags: Option<String>,
    #[serde(default)]
    filter_regex: Option<String>,
}

#[derive(Serialize)]
struct TagCount<'a> {
    tag: &'a str,
    count: usize,
}

#[derive(Serialize)]
struct ClassSummary<'a> {
    name: &'a str,
    tags: Vec<TagCount<'a>>,
}

fn summarize(contents: &ClassContents) -> Vec<ClassSummary<'_>> {
    contents
        .classes()
        .map(|(name, data)| ClassSummary {
            name,
            tags: data
                .subclasses
                .iter()
                .map(|(tag, v)| TagCount {
                    tag,
                    count: v.len(),
                })
                .collect(),
        })
        .collect()
}

fn scrape_error(e: &PipelineError) -> ApiError {
    let reason = e.reason_code();
    match e {
        PipelineError::Fetch(FetchError::ConsentDenied(_)) => {
            ApiError::new(StatusCode::FORBIDDEN, "consent_denied", e.to_string())
        }
        PipelineError::Fetch(FetchError::InvalidUrl(_) | FetchError::InvalidRequest(_)) => {
            ApiError::new(StatusCode::BAD_REQUEST, "invalid_url", e.to_string())
        }
        PipelineError::Fetch(_) => {
            ApiError::new(StatusCode::BAD_GATEWAY, "upstream_error", e.to_string())
        }
        PipelineError::NonHtml(_) | PipelineError::Document(_) => ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "unprocessable",
            e.to_string(),
        ),
    }
    .with_reason(reason)
}

fn extract_options(body: &ScrapeBody) -> Result<ExtractOptions, ApiError> {
    let tags = match body.tags.as_deref() {
        Some(list) => {
            Some(TagSet::parse_list(list).map_err(|e| ApiError::bad_request(e.to_string()))?)
        }
        None => None,
    };
    let rule = match body.filter_regex.as_deref() {
        Some(re) => FilterRule::regex(re).map_err(|e| ApiError::bad_request(e.to_string()))?,
        None => FilterRule::pass_through(),
    };
    Ok(ExtractOptions { tags, rule })
}

pub async fn scrape(
    State(state): Shared,
    user: AuthUser,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let body: ScrapeBody = parse_json(&body)?;
    let options = extract_options(&body)?;
    let username = user.username().to_string();
    let started_at = state.clock.now();

    let outcome = match FetchRequest::new(&body.url) {
        Ok(req) => {
            let req = req
                .with_consent(body.consent)
                .with_robots(body.respect_robots);
            scrape_url(&state.fetcher, &req, &options).await
        }
        Err(e) => Err(PipelineError::Fetch(e)),
    };

    let (status, stats) = match &outcome {
        Ok(o) => (HistoryStatus::Ok, o.stats),
        Err(e) => (
            HistoryStatus::Failed {
                reason: e.reason_code(),
            },
            TraversalStats::default(),
        ),
    };
    let record = HistoryRecord {
        id: String::new(),
        username: username.clone(),
        url: body.url.clone(),
        timestamp: started_at,
        csv_path: None,
        status,
        stats,
    };
    let store = state.store.clone();
    let history_id = blocking(move || record_history(store.as_ref(), record)).await??;

    let outcome = outcome.map_err(|e| scrape_error(&e))?;
    let job = state.jobs.insert(ScrapeJob::new(
        &username,
        &body.url,
        body.consent,
        history_id.clone(),
        started_at,
        outcome.stats,
        outcome.contents,
    ));
    let eff = efficiency(&outcome.stats).unwrap_or(0.0);
    Ok(Json(json!({
        "job_id": job.id,
        "history_id": history_id,
        "url": job.url,
        "final_url": outcome.response.final_url.as_str(),
        "classes": summarize(&job.contents),
        "triple_count": job.contents.triple_count(),
        "stats": job.stats,
        "efficiency": eff,
    })))
}

fn owned_job(state: &AppState, id: &str, user: &AuthUser) -> Result<Arc<ScrapeJob>, ApiError> {
    match state.jobs.get(id, user.username(), state.clock.now()) {
        Lookup::Found(job) => Ok(job),
        Lookup::Foreign => Err(ApiError::forbidden("job")),
        Lookup::Missing => Err(ApiError::not_found("job")),
    }
}

fn parse_query(body: &[u8]) -> Result<RefinementQuery, ApiError> {
    let q: RefinementQuery = parse_json(body)?;
    q.validate()
        .map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(q)
}

pub async fn refine(
    State(state): Shared,
    user: AuthUser,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let job = owned_job(&state, &id, &user)?;
    let query = parse_query(&body)?;
    let refined = query.apply(&job.contents);
    job.advance(JobState::Refined);
    Ok(Json(json!({
        "job_id": job.id,
        "mode": query.mode,
        "needle": query.needle,
        "class_count": refined.class_count(),
        "triple_count": refined.triple_count(),
        "contents": refined,
    })))
}

#[derive(Deserialize, Default)]
struct ExportBody {
    #[serde(default)]
    refinement: Option<RefinementQuery>,
}

#[derive(Serialize, Deserialize)]
struct DownloadDoc {
    id: String,
    username: String,
    job_id: String,
    filename: String,
    path: String,
    row_count: usize,
}

pub async fn export(
    State(state): Shared,
    user: AuthUser,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let job = owned_job(&state, &id, &user)?;
    let body: ExportBody = if body.iter().all(u8::is_ascii_whitespace) {
        ExportBody::default()
    } else {
        parse_json(&body)?
    };
    if let Some(q) = &body.refinement {
        q.validate()
            .map_err(|e| ApiError::bad_request(e.to_string()))?;
    }
    let contents = match &body.refinement {
        Some(q) => q.apply(&job.contents),
        None => job.contents.clone(),
    };
    let doc = to_csv(&contents, user.username(), state.clock.now());
    let bytes = render_bytes(&doc);
    let download_id = uuid::Uuid::new_v4().simple().to_string();
    let path = state.downloads_dir.join(format!("{download_id}.csv"));
    let meta = DownloadDoc {
        id: download_id.clone(),
        username: user.username().to_string(),
        job_id: job.id.clone(),
        filename: doc.filename.clone(),
        path: path.to_string_lossy().into_owned(),
        row_count: doc.row_count(),
    };
    let st = state.clone();
    let history_id = job.history_id.clone();
    blocking(move || -> Result<(), ApiError> {
        std::fs::write(&path, &bytes)
            .map_err(|e| ApiError::internal(format!("writing {}: {e}", path.display())))?;
        st.store.insert(
            DOWNLOADS,
            serde_json::to_value(&meta).expect("download meta serializes"),
        )?;
        attach_csv(st.store.as_ref(), &history_id, &meta.path)?;
        Ok(())
    })
    .await??;
    job.advance(JobState::Exported);
    Ok(Json(json!({
        "download_id": download_id,
        "filename": doc.filename,
        "row_count": doc.row_count(),
    })))
}

#[derive(Deserialize)]
pub struct Page {
    limit: Option<usize>,
    offset: Option<usize>,
}

pub async fn history(
    State(state): Shared,
    user: AuthUser,
    Query(page): Query<Page>,
) -> Result<Json<Value>, ApiError> {
    let limit = page
        .limit
        .unwrap_or(DEFAULT_HISTORY_PAGE)
        .clamp(1, MAX_HISTORY_PAGE);
    let offset = page.offset.unwrap_or(0);
    let records = list_history(state.store.as_ref(), user.username(), limit, offset)?;
    let total = count_history(state.store.as_ref(), user.username())?;
    Ok(Json(json!({
        "records": records,
        "pagination": { "limit": limit, "offset": offset, "total": total },
    })))
}

pub async fn download(
    State(state): Shared,
    user: AuthUser,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let doc = state
        .store
        .find(DOWNLOADS, &json!({ "id": id }))?
        .into_iter()
        .next()
        .ok_or_else(|| ApiError::not_found("download"))?;
    let meta: DownloadDoc =
        serde_json::from_value(doc).map_err(|e| ApiError::internal(e.to_string()))?;
    if meta.username != user.username() {
        return Err(ApiError::forbidden("download"));
    }
    let bytes = tokio::fs::read(&meta.path)
        .await
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ApiError::not_found("download file"),
            _ => ApiError::internal(e.to_string()),
        })?;
    let disposition = format!("attachment; filename=\"{}\"", meta.filename);
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8".to_string()),
            (header::CONTENT_DISPOSITION, disposition),
        ],
        bytes,
    )
        .into_response())
}
