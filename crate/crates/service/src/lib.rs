//! HTTP job API around the indexing pipeline.
//!
//! ```text
//! POST /api/jobs                  multipart "book" file, or JSON {"url": ...};
//!                                 optional pages_n, seed        -> 202 {"id"}
//! GET  /api/jobs/{id}             job status without the outcome
//! GET  /api/jobs/{id}/result      outcome filtered at ?threshold= (default 0.4)
//! POST /api/jobs/{id}/marc        {"terms": [...]}              -> text/plain
//! GET  /api/health                {"status": "ok", "model_version": ...}
//! ```
//!
//! Outcomes are stored unthresholded, so changing the threshold is a filter
//! over stored keywords and never reruns prediction.

mod jobs;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use kratt_core::pipeline::{
    index_book_unfiltered, read_book, to_marc21, IndexingConfig, KeywordResult, Step,
    DEFAULT_THRESHOLD,
};
use kratt_core::ModelBundle;
use log::{info, warn};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, Semaphore};

pub use jobs::{now_ms, Job, JobEvent, JobSource, JobState, JobStatus, JobStore};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Concurrent indexing jobs. Zero accepts jobs but never runs them.
    pub workers: usize,
    /// Jobs waiting beyond the running ones; further submissions get 503.
    pub queue_depth: usize,
    /// How long finished jobs are kept.
    pub retention: Duration,
    pub max_upload_bytes: usize,
    pub fetch_timeout: Duration,
    /// Base configuration; requests may override `pages_n` and `seed`.
    pub defaults: IndexingConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            queue_depth: 32,
            retention: Duration::from_secs(24 * 3600),
            max_upload_bytes: 512 << 20,
            fetch_timeout: Duration::from_secs(60),
            defaults: IndexingConfig::default(),
        }
    }
}

struct Inner {
    bundle: Arc<ModelBundle>,
    jobs: JobStore,
    queue: mpsc::Sender<(String, JobSource)>,
    cfg: ServiceConfig,
    http: reqwest::Client,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    /// Starts the dispatcher and the retention sweeper; call inside a tokio
    /// runtime.
    pub fn start(bundle: Arc<ModelBundle>, cfg: ServiceConfig) -> AppState {
        let (tx, rx) = mpsc::channel(cfg.queue_depth.max(1));
        let http = reqwest::Client::builder()
            .timeout(cfg.fetch_timeout)
            .build()
            .expect("HTTP client");
        let state = AppState {
            inner: Arc::new(Inner {
                bundle,
                jobs: JobStore::default(),
                queue: tx,
                cfg,
                http,
            }),
        };
        tokio::spawn(dispatch(state.clone(), rx));
        tokio::spawn(sweep(Arc::downgrade(&state.inner)));
        state
    }

    pub fn jobs(&self) -> &JobStore {
        &self.inner.jobs
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.inner.bundle
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.cfg
    }
}

async fn dispatch(state: AppState, mut rx: mpsc::Receiver<(String, JobSource)>) {
    let permits = Arc::new(Semaphore::new(state.inner.cfg.workers));
    loop {
        // Take a job off the queue only when a worker is free, so the queue
        // depth bounds the waiting jobs.
        let Ok(permit) = permits.clone().acquire_owned().await else {
            return;
        };
        let Some((id, source)) = rx.recv().await else {
            return;
        };
        let state = state.clone();
        tokio::spawn(async move {
            run_job(&state, &id, source).await;
            drop(permit);
        });
    }
}

async fn sweep(inner: std::sync::Weak<Inner>) {
    let period = Duration::from_secs(600);
    loop {
        tokio::time::sleep(period).await;
        let Some(inner) = inner.upgrade() else {
            return;
        };
        let removed = inner.jobs.purge_expired(now_ms(), inner.cfg.retention);
        if removed > 0 {
            info!("removed {removed} expired jobs");
        }
    }
}

async fn run_job(state: &AppState, id: &str, source: JobSource) {
    let jobs = &state.inner.jobs;
    jobs.mark_running(id);
    let Some(job) = jobs.get(id) else {
        return;
    };
    let book = match source {
        JobSource::Book(book) => book,
        JobSource::Url(url) => match fetch(state, &url).await {
            Ok(book) => book,
            Err(e) => {
                warn!("job {id}: {e}");
                jobs.fail(id, e);
                return;
            }
        },
    };
    let state2 = state.clone();
    let id2 = id.to_string();
    let result = tokio::task::spawn_blocking(move || {
        let jobs = &state2.inner.jobs;
        index_book_unfiltered(&state2.inner.bundle, &book, &job.cfg, &mut |step| {
            jobs.advance(&id2, step)
        })
    })
    .await;
    match result {
        Ok(Ok(outcome)) => {
            info!("job {id}: {} keywords from {} pages", outcome.keywords.len(), outcome.pages_used);
            jobs.finish(id, outcome);
        }
        Ok(Err(e)) => jobs.fail(id, e.to_string()),
        Err(e) => jobs.fail(id, format!("worker failed: {e}")),
    }
}

async fn fetch(state: &AppState, url: &str) -> Result<kratt_core::corpus::BookRecord, String> {
    let response = state
        .inner
        .http
        .get(url)
        .send()
        .await
        .map_err(|e| format!("fetch failed: {e}"))?;
    let status = response.status();
    if !status.is_success() {
        return Err(format!("fetch failed: {url} returned HTTP {status}"));
    }
    let limit = state.inner.cfg.max_upload_bytes;
    if response.content_length().is_some_and(|n| n as usize > limit) {
        return Err(format!("fetch failed: {url} is larger than {limit} bytes"));
    }
    let bytes = response
        .bytes()
        .await
        .map_err(|e| format!("fetch failed: {e}"))?;
    let name = url
        .split(['?', '#'])
        .next()
        .and_then(|p| p.rsplit('/').next())
        .map(str::to_string);
    tokio::task::spawn_blocking(move || read_book(&bytes, name.as_deref(), None))
        .await
        .map_err(|e| format!("conversion failed: {e}"))?
        .map_err(|e| e.to_string())
}

pub fn router(state: AppState) -> Router {
    let limit = state.inner.cfg.max_upload_bytes;
    Router::new()
        .route("/api/health", get(health))
        .route("/api/jobs", post(submit))
        .route("/api/jobs/{id}", get(status))
        .route("/api/jobs/{id}/result", get(result))
        .route("/api/jobs/{id}/marc", post(marc))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves the API on `listener` until the process ends.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Binds `addr`, serves in the background and returns the bound address.
pub async fn spawn(addr: SocketAddr, state: AppState) -> std::io::Result<SocketAddr> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tokio::spawn(async move {
        if let Err(e) = serve(listener, state).await {
            warn!("server stopped: {e}");
        }
    });
    Ok(local)
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

async fn health(State(state): State<AppState>) -> Response {
    let m = &state.inner.bundle.manifest;
    Json(json!({
        "status": "ok",
        "model_version": m.model_version,
        "vocabulary_size": m.vocabulary.len(),
        "queued": state.inner.jobs.count(JobState::Queued),
        "running": state.inner.jobs.count(JobState::Running),
    }))
    .into_response()
}

#[derive(Debug, Deserialize)]
struct UrlSubmission {
    url: String,
    pages_n: Option<usize>,
    seed: Option<u64>,
}

async fn submit(State(state): State<AppState>, req: Request) -> Response {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let mut cfg = state.inner.cfg.defaults;
    let (source, label) = if is_multipart {
        let mut form = match Multipart::from_request(req, &state).await {
            Ok(f) => f,
            Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
        };
        let mut upload: Option<(Option<String>, Vec<u8>)> = None;
        loop {
            let field = match form.next_field().await {
                Ok(Some(f)) => f,
                Ok(None) => break,
                Err(e) => return error(e.status(), e.body_text()),
            };
            let name = field.name().unwrap_or_default().to_string();
            match name.as_str() {
                "book" => {
                    let file_name = field.file_name().map(str::to_string);
                    match field.bytes().await {
                        Ok(b) => upload = Some((file_name, b.to_vec())),
                        Err(e) => return error(e.status(), e.body_text()),
                    }
                }
                "pages_n" | "seed" => {
                    let text = match field.text().await {
                        Ok(t) => t,
                        Err(e) => return error(e.status(), e.body_text()),
                    };
                    let parsed = text.trim().parse::<u64>();
                    match (name.as_str(), parsed) {
                        ("pages_n", Ok(n)) => cfg.pages_n = n as usize,
                        ("seed", Ok(s)) => cfg.seed = s,
                        _ => {
                            return error(
                                StatusCode::BAD_REQUEST,
                                format!("{name} must be a non-negative integer"),
                            )
                        }
                    }
                }
                _ => {}
            }
        }
        let Some((file_name, bytes)) = upload else {
            return error(StatusCode::BAD_REQUEST, "missing multipart field \"book\"");
        };
        let name = file_name.clone();
        let parsed =
            tokio::task::spawn_blocking(move || read_book(&bytes, name.as_deref(), None)).await;
        match parsed {
            Ok(Ok(book)) => (
                JobSource::Book(book),
                file_name.unwrap_or_else(|| "upload".into()),
            ),
            Ok(Err(e)) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
            Err(e) => return error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    } else {
        let Json(body) = match Json::<UrlSubmission>::from_request(req, &state).await {
            Ok(b) => b,
            Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
        };
        if !(body.url.starts_with("http://") || body.url.starts_with("https://")) {
            return error(StatusCode::BAD_REQUEST, "url must be http or https");
        }
        if let Some(n) = body.pages_n {
            cfg.pages_n = n;
        }
        if let Some(s) = body.seed {
            cfg.seed = s;
        }
        (JobSource::Url(body.url.clone()), body.url)
    };
    if let Err(e) = cfg.validate() {
        return error(StatusCode::BAD_REQUEST, e.to_string());
    }

    let id = uuid::Uuid::new_v4().simple().to_string();
    state.inner.jobs.insert(Job::new(id.clone(), cfg, label));
    if state.inner.queue.try_send((id.clone(), source)).is_err() {
        state.inner.jobs.remove(&id);
        return error(StatusCode::SERVICE_UNAVAILABLE, "job queue is full");
    }
    (StatusCode::ACCEPTED, Json(json!({ "id": id }))).into_response()
}

async fn status(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    match state.inner.jobs.status(&id) {
        Some(s) => Json(s).into_response(),
        None => error(StatusCode::NOT_FOUND, "unknown job"),
    }
}

/// The job's outcome, or the response to send instead.
fn finished_outcome(
    state: &AppState,
    id: &str,
) -> Result<Arc<kratt_core::pipeline::IndexingOutcome>, Response> {
    let Some(job) = state.inner.jobs.get(id) else {
        return Err(error(StatusCode::NOT_FOUND, "unknown job"));
    };
    match (job.state, job.outcome) {
        (JobState::Done, Some(outcome)) => Ok(outcome),
        (JobState::Failed, _) => Err((
            StatusCode::CONFLICT,
            Json(json!({
                "error": job.error.unwrap_or_default(),
                "state": JobState::Failed,
            })),
        )
            .into_response()),
        (s, _) => Err((
            StatusCode::CONFLICT,
            Json(json!({ "error": "job is not finished", "state": s, "step": job.step })),
        )
            .into_response()),
    }
}

#[derive(Debug, Deserialize)]
struct ResultQuery {
    threshold: Option<f64>,
}

async fn result(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ResultQuery>,
) -> Response {
    let threshold = q.threshold.unwrap_or(DEFAULT_THRESHOLD);
    if !(0.0..=1.0).contains(&threshold) {
        return error(StatusCode::BAD_REQUEST, "threshold must lie in [0, 1]");
    }
    match finished_outcome(&state, &id) {
        Ok(outcome) => Json(outcome.filtered(threshold)).into_response(),
        Err(r) => r,
    }
}

#[derive(Debug, Deserialize)]
struct MarcRequest {
    terms: Vec<String>,
}

async fn marc(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<MarcRequest>, axum::extract::rejection::JsonRejection>,
) -> Response {
    let outcome = match finished_outcome(&state, &id) {
        Ok(o) => o,
        Err(r) => return r,
    };
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.body_text()),
    };
    let mut selected: Vec<KeywordResult> = Vec::with_capacity(body.terms.len());
    let mut unknown = Vec::new();
    for term in &body.terms {
        match outcome.keywords.iter().find(|k| &k.term == term) {
            Some(k) => selected.push(k.clone()),
            None => unknown.push(term.clone()),
        }
    }
    if !unknown.is_empty() {
        return (
            StatusCode::UNPROCESSABLE_ENTITY,
            Json(json!({ "error": "terms not predicted for this job", "terms": unknown })),
        )
            .into_response();
    }
    (
        [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
        to_marc21(&selected),
    )
        .into_response()
}

/// Steps a job reports, in order; re-exported for clients.
pub const STEPS: [Step; 9] = Step::ALL;
