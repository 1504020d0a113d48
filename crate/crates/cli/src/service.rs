//! JSON-over-HTTP surface over an immutable dataset and graph.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;

use crate::run::{
    run_identify, run_match, run_monitor, run_positivity, run_simulate, Dataset, IdentifyRequest, LoadedDag,
    MatchRequest, MonitorRequest, PositivityRequest, Report, RunError, SimulateRequest,
};

/// Inputs loaded at startup; handlers only read them.
#[derive(Debug, Default)]
pub struct AppState {
    pub dataset: Option<Dataset>,
    pub dag: Option<LoadedDag>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/schema", get(schema))
        .route("/dag", get(dag))
        .route("/identify", post(identify))
        .route("/positivity", post(positivity))
        .route("/match", post(matching))
        .route("/monitor", post(monitor))
        .route("/simulate", post(simulate))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(state))).await
}

fn json_body(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

/// Error reply: a status and a message sent as `{"error": ...}`.
struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_body(self.0, serde_json::json!({ "error": self.1 }).to_string())
    }
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        ApiError(StatusCode::BAD_REQUEST, e.to_string())
    }
}

fn parse<T: DeserializeOwned>(body: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    body.map(|Json(v)| v).map_err(|e| ApiError(StatusCode::BAD_REQUEST, e.body_text()))
}

fn dataset(state: &AppState) -> Result<&Dataset, ApiError> {
    state
        .dataset
        .as_ref()
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, "no dataset loaded".into()))
}

fn graph(state: &AppState) -> Result<&LoadedDag, ApiError> {
    state
        .dag
        .as_ref()
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, "no graph loaded".into()))
}

/// Runs the command off the async workers and returns its JSON report.
async fn respond<F>(state: Arc<AppState>, f: F) -> Result<Response, ApiError>
where
    F: FnOnce(&AppState) -> Result<Report, ApiError> + Send + 'static,
{
    let report = tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(json_body(StatusCode::OK, report.json))
}

async fn schema(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    Ok(json_body(StatusCode::OK, dataset(&state)?.schema().to_json()))
}

async fn dag(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    Ok(json_body(StatusCode::OK, graph(&state)?.to_json()))
}

async fn identify(
    State(state): State<Arc<AppState>>,
    body: Result<Json<IdentifyRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = parse(body)?;
    respond(state, move |s| Ok(run_identify(&graph(s)?.dag, &req)?)).await
}

async fn positivity(
    State(state): State<Arc<AppState>>,
    body: Result<Json<PositivityRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = parse(body)?;
    respond(state, move |s| Ok(run_positivity(dataset(s)?, &req)?)).await
}

async fn matching(
    State(state): State<Arc<AppState>>,
    body: Result<Json<MatchRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = parse(body)?;
    respond(state, move |s| Ok(run_match(dataset(s)?, &req)?)).await
}

async fn monitor(
    State(state): State<Arc<AppState>>,
    body: Result<Json<MonitorRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = parse(body)?;
    respond(state, move |s| Ok(run_monitor(dataset(s)?, &req)?)).await
}

/// Returns the sampled table as CSV, the same bytes `simulate` writes.
async fn simulate(
    State(_): State<Arc<AppState>>,
    body: Result<Json<SimulateRequest>, JsonRejection>,
) -> Result<Response, ApiError> {
    let req = parse(body)?;
    let report = tokio::task::spawn_blocking(move || run_simulate(&req))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    let csv = report.files.into_iter().find(|(n, _)| n == "data.csv").map(|(_, c)| c).unwrap_or_default();
    Ok((StatusCode::OK, [(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}
