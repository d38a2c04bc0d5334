//! HTTP judgment service. Every accepted judgment is appended to the log
//! and synced before the response is sent, so restarting from the log
//! reproduces the state exactly.

use std::future::Future;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ratattn_core::harness::{
    load_hits, summarize, ComparisonSummary, DisplayChoice, Judgment, JudgmentLog, Rejection, Study,
};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

pub struct AppState {
    study: RwLock<Study>,
    log: Mutex<JudgmentLog>,
}

impl AppState {
    /// Loads the hits and rebuilds the study from the existing log.
    pub fn open(hits_path: &Path, log_path: &Path) -> anyhow::Result<Arc<AppState>> {
        let hits = load_hits(hits_path)?;
        let (log, entries) = JudgmentLog::open(log_path)?;
        let study = Study::replay(hits, entries)?;
        Ok(Arc::new(AppState {
            study: RwLock::new(study),
            log: Mutex::new(log),
        }))
    }

    pub fn summary(&self) -> Vec<ComparisonSummary> {
        summarize(&self.study.read().unwrap())
    }
}

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    #[serde(default)]
    pub worker_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JudgmentRequest {
    pub hit_id: String,
    pub worker_id: String,
    pub choice: DisplayChoice,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Results {
    pub comparisons: Vec<ComparisonSummary>,
    pub unresolved: usize,
}

fn error(status: StatusCode, message: impl ToString) -> Response {
    (
        status,
        Json(serde_json::json!({ "error": message.to_string() })),
    )
        .into_response()
}

async fn next_hit(State(st): State<Arc<AppState>>, Query(q): Query<NextQuery>) -> Response {
    if let Err(e) = st.study.write().unwrap().register(&q.worker_id) {
        return error(StatusCode::UNPROCESSABLE_ENTITY, e);
    }
    let study = st.study.read().unwrap();
    match study.assign_next_hit(&q.worker_id) {
        Ok(Some(hit)) => Json(hit.view()).into_response(),
        Ok(None) => StatusCode::NO_CONTENT.into_response(),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e),
    }
}

fn record(st: &AppState, req: JudgmentRequest) -> Response {
    // Holding the log lock serializes appends and the state updates that follow.
    let mut log = st.log.lock().unwrap();
    let judgment = {
        let study = st.study.read().unwrap();
        let Some(hit) = study.hit(&req.hit_id) else {
            return error(
                StatusCode::UNPROCESSABLE_ENTITY,
                Rejection::UnknownHit(req.hit_id),
            );
        };
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64);
        let j = Judgment {
            hit_id: req.hit_id.clone(),
            worker_id: req.worker_id,
            choice: hit.underlying(req.choice),
            ts,
        };
        if let Err(e) = study.check(&j) {
            let status = match e {
                Rejection::Duplicate { .. } => StatusCode::CONFLICT,
                _ => StatusCode::UNPROCESSABLE_ENTITY,
            };
            return error(status, e);
        }
        j
    };
    if let Err(e) = log.append(&judgment) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, e);
    }
    let hit_id = judgment.hit_id.clone();
    st.study
        .write()
        .unwrap()
        .record(judgment)
        .expect("judgment was checked under the log lock");
    (
        StatusCode::CREATED,
        Json(serde_json::json!({ "status": "recorded", "hit_id": hit_id })),
    )
        .into_response()
}

async fn post_judgment(
    State(st): State<Arc<AppState>>,
    Json(req): Json<JudgmentRequest>,
) -> Response {
    match tokio::task::spawn_blocking(move || record(&st, req)).await {
        Ok(r) => r,
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn results(State(st): State<Arc<AppState>>) -> Json<Results> {
    let comparisons = st.summary();
    let unresolved = comparisons.iter().map(|c| c.unresolved).sum();
    Json(Results {
        comparisons,
        unresolved,
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/hits/next", get(next_hit))
        .route("/api/judgments", post(post_judgment))
        .route("/api/results", get(results))
        .with_state(state)
}

pub async fn serve(
    listener: TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
