//! HTTP front end for an active-learning session: serves the current query
//! batch, accepts labels, retrains and reports metrics.
//!
//! Mutations are serialized through one writer; reads are answered from the
//! last published snapshot, so they never wait on a retrain.

mod store;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use rumorscope_core::active::{
    ActiveError, BatchItem, CycleOutcome, OracleResponse, Rejection, SessionStatus,
};
use rumorscope_core::forest::Metrics;
use rumorscope_core::label::Label;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::Mutex;
use tower_http::services::ServeDir;

pub use store::{init_session_dir, Overrides, SessionStore, StoreError, AUDIT_FILE, SEED_FILE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResponse {
    pub cycle: usize,
    pub session_revision: u64,
    /// True once all cycles ran or the pool is empty; `items` is then empty.
    pub complete: bool,
    pub items: Vec<BatchItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmittedLabel {
    pub tweet_id: String,
    pub label: Label,
    pub annotator_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub session_revision: u64,
    pub labels: Vec<SubmittedLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleResult {
    pub cycle: usize,
    pub session_revision: u64,
    pub accepted: Vec<String>,
    pub rejected: Vec<Rejection>,
    pub propagated_count: usize,
    pub propagated_ids: Vec<String>,
    pub metrics: Metrics,
}

impl From<CycleOutcome> for CycleResult {
    fn from(o: CycleOutcome) -> Self {
        CycleResult {
            cycle: o.cycle,
            session_revision: o.revision,
            propagated_count: o.propagated.len(),
            propagated_ids: o.propagated.into_iter().map(|e| e.tweet_id).collect(),
            accepted: o.accepted,
            rejected: o.rejected,
            metrics: o.metrics,
        }
    }
}

/// Error body: `{code, message}` plus per-entry rejections where relevant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("submission is for revision {submitted} but the session is at {current}")]
    Conflict { submitted: u64, current: u64 },
    #[error("{0}")]
    BadRequest(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("retraining task failed: {0}")]
    Task(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let message = self.to_string();
        let (status, code, rejected) = match self {
            ApiError::Conflict { .. } => (StatusCode::CONFLICT, "revision_conflict", Vec::new()),
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request", Vec::new()),
            ApiError::Store(StoreError::Session(ActiveError::Complete(_))) => {
                (StatusCode::GONE, "session_complete", Vec::new())
            }
            ApiError::Store(StoreError::Session(ActiveError::NothingAccepted(r))) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "nothing_accepted", r)
            }
            ApiError::Store(_) | ApiError::Task(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal", Vec::new())
            }
        };
        if status.is_server_error() {
            log::error!("{message}");
        }
        (
            status,
            Json(ErrorBody {
                code: code.into(),
                message,
                rejected,
            }),
        )
            .into_response()
    }
}

/// Read-side view published after every mutation.
#[derive(Debug, Clone)]
struct Snapshot {
    batch: BatchResponse,
    status: SessionStatus,
    metrics_csv: String,
}

impl Snapshot {
    fn of(store: &SessionStore) -> Self {
        let s = store.session();
        Snapshot {
            batch: BatchResponse {
                cycle: s.cycle(),
                session_revision: s.revision(),
                complete: s.is_complete(),
                items: s.batch().to_vec(),
            },
            status: s.status(),
            metrics_csv: metrics_csv(s.metrics_history()),
        }
    }
}

/// One row per completed cycle, row 0 being the seed model.
pub fn metrics_csv(history: &[Metrics]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "cycle",
        "accuracy",
        "recall",
        "precision",
        "f1",
        "tp",
        "fp",
        "fn",
        "tn",
    ];
    let mut rows = vec![header.map(String::from).to_vec()];
    for (i, m) in history.iter().enumerate() {
        let c = m.confusion;
        let mut rec = vec![i.to_string()];
        rec.extend(m.csv_fields());
        rec.extend([c.tp, c.fp, c.fn_, c.tn].map(|v| v.to_string()));
        rows.push(rec);
    }
    for r in rows {
        w.write_record(&r).expect("writing csv to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing csv to memory")).expect("csv output is utf-8")
}

#[derive(Clone)]
struct AppState {
    writer: Arc<Mutex<SessionStore>>,
    snapshot: Arc<RwLock<Arc<Snapshot>>>,
}

impl AppState {
    fn read(&self) -> Arc<Snapshot> {
        self.snapshot
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }

    fn publish(&self, snap: Snapshot) {
        *self.snapshot.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(snap);
    }
}

async fn get_batch(State(state): State<AppState>) -> Json<BatchResponse> {
    Json(state.read().batch.clone())
}

async fn get_status(State(state): State<AppState>) -> Json<SessionStatus> {
    Json(state.read().status.clone())
}

async fn get_metrics_csv(State(state): State<AppState>) -> impl IntoResponse {
    (
        [(header::CONTENT_TYPE, "text/csv; charset=utf-8")],
        state.read().metrics_csv.clone(),
    )
}

async fn post_labels(
    State(state): State<AppState>,
    body: Result<Json<LabelSubmission>, JsonRejection>,
) -> Result<Json<CycleResult>, ApiError> {
    let Json(submission) = body.map_err(|e| ApiError::BadRequest(e.body_text()))?;
    let mut guard = state.writer.clone().lock_owned().await;
    let current = guard.session().revision();
    if submission.session_revision != current {
        return Err(ApiError::Conflict {
            submitted: submission.session_revision,
            current,
        });
    }
    let responses: Vec<OracleResponse> = submission
        .labels
        .into_iter()
        .map(|l| OracleResponse {
            tweet_id: l.tweet_id,
            label: l.label,
            annotator_id: l.annotator_id,
        })
        .collect();
    let publisher = state.clone();
    // retraining is CPU-bound; readers keep getting the previous snapshot
    tokio::task::spawn_blocking(move || {
        let outcome = guard.apply(&responses, Utc::now());
        publisher.publish(Snapshot::of(&guard));
        outcome
    })
    .await
    .map_err(|e| ApiError::Task(e.to_string()))?
    .map(|o| Json(o.into()))
    .map_err(ApiError::from)
}

/// API routes, plus static files from `ui_dir` for every other path.
pub fn router(store: SessionStore, ui_dir: Option<&Path>) -> Router {
    let snapshot = Snapshot::of(&store);
    let state = AppState {
        writer: Arc::new(Mutex::new(store)),
        snapshot: Arc::new(RwLock::new(Arc::new(snapshot))),
    };
    let api = Router::new()
        .route("/api/v1/batch", get(get_batch))
        .route("/api/v1/labels", post(post_labels))
        .route("/api/v1/status", get(get_status))
        .route("/api/v1/metrics.csv", get(get_metrics_csv))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    pub session_dir: PathBuf,
    pub overrides: Overrides,
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot serve on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Serve(#[source] std::io::Error),
}

/// Opens the session and serves until ctrl-c.
pub async fn serve(config: ServerConfig) -> Result<(), ServerError> {
    let store = SessionStore::open(&config.session_dir, config.overrides)?;
    let app = router(store, config.ui_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(config.addr)
        .await
        .map_err(|source| ServerError::Bind {
            addr: config.addr,
            source,
        })?;
    log::info!(
        "listening on http://{}",
        listener.local_addr().map_err(ServerError::Serve)?
    );
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServerError::Serve)
}
