//! JSON HTTP API over a [`Workbench`]. Errors are returned as
//! `{"error": <kind>, "message": <text>}` with a matching status code.

use std::path::Path;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dcc_core::drafts::{DraftError, NewDraft};
use dcc_core::estimator::EstimateError;
use dcc_core::suggestion::SuggestionError;
use dcc_core::suite::{read_suite, write_suite, SuiteError, SuiteFilter, SuiteItem};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::clients::scorer_for;
use crate::session::{DraftUpdate, EstimateRequest, Workbench, WorkbenchError};

pub struct ApiError(WorkbenchError);

impl<E: Into<WorkbenchError>> From<E> for ApiError {
    fn from(e: E) -> Self {
        ApiError(e.into())
    }
}

impl ApiError {
    fn parts(&self) -> (StatusCode, &'static str) {
        use WorkbenchError as W;
        match &self.0 {
            W::NotLoaded => (StatusCode::SERVICE_UNAVAILABLE, "not_loaded"),
            W::NotADcc(_) => (StatusCode::NOT_FOUND, "not_a_dcc"),
            W::Suggestion(e) => match e {
                SuggestionError::InsufficientNeighbors { .. } => {
                    (StatusCode::UNPROCESSABLE_ENTITY, "insufficient_neighbors")
                }
                SuggestionError::UnknownId(_) => (StatusCode::NOT_FOUND, "unknown_id"),
                SuggestionError::ServiceUnavailable(_) => {
                    (StatusCode::BAD_GATEWAY, "service_unavailable")
                }
                SuggestionError::UnparseableCompletion { .. } => {
                    (StatusCode::BAD_GATEWAY, "unparseable_completion")
                }
            },
            W::Estimate(e) => match e {
                EstimateError::TooFewScorers(_) | EstimateError::InvalidScorers(_) => {
                    (StatusCode::SERVICE_UNAVAILABLE, "scorers_misconfigured")
                }
                EstimateError::EmptyText => (StatusCode::UNPROCESSABLE_ENTITY, "empty_text"),
                EstimateError::ScorerUnavailable { .. } => {
                    (StatusCode::BAD_GATEWAY, "scorer_unavailable")
                }
            },
            W::Draft(e) => match e {
                DraftError::UnknownDraft(_) => (StatusCode::NOT_FOUND, "unknown_draft"),
                DraftError::NoEstimate(_) => (StatusCode::CONFLICT, "no_estimate"),
                DraftError::AlreadySubmitted(_) => (StatusCode::CONFLICT, "already_submitted"),
                DraftError::Invalid(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_draft"),
                DraftError::Io { .. } | DraftError::CorruptLog { .. } => {
                    (StatusCode::INTERNAL_SERVER_ERROR, "storage")
                }
            },
            W::Suite(e) => match e {
                SuiteError::EmptySuite => (StatusCode::NOT_FOUND, "empty_suite"),
                SuiteError::MalformedSuite { .. } => {
                    (StatusCode::UNPROCESSABLE_ENTITY, "malformed_suite")
                }
                SuiteError::ScorerUnavailable { .. } => {
                    (StatusCode::BAD_GATEWAY, "scorer_unavailable")
                }
                SuiteError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
            },
            W::NoEvaluationScorer => (StatusCode::SERVICE_UNAVAILABLE, "no_evaluation_scorer"),
            W::Invalid(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            W::Setup(_) => (StatusCode::INTERNAL_SERVER_ERROR, "setup"),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = self.parts();
        if status.is_server_error() {
            tracing::error!(error = %self.0, "request failed");
        }
        let body = json!({ "error": kind, "message": self.0.to_string() });
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type AppState = Arc<Workbench>;

/// API routes, plus static files from `static_dir` for every other path.
pub fn router(workbench: Arc<Workbench>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/datamap", get(datamap))
        .route("/api/dccs", get(dccs))
        .route("/api/dccs/{id}", get(dcc))
        .route("/api/dccs/{id}/suggest", post(suggest))
        .route("/api/drafts", get(list_drafts).post(create_draft))
        .route("/api/drafts/{id}", get(get_draft).put(edit_draft))
        .route("/api/drafts/{id}/estimate", post(estimate))
        .route("/api/drafts/{id}/submit", post(submit))
        .route("/api/export", get(export))
        .route("/api/evaluate", post(evaluate))
        .with_state(workbench);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn datamap(State(wb): State<AppState>) -> ApiResult<serde_json::Value> {
    Ok(Json(json!({ "points": wb.list_datamap()? })))
}

async fn dccs(State(wb): State<AppState>) -> ApiResult<serde_json::Value> {
    Ok(Json(json!({ "dccs": wb.list_dccs()? })))
}

async fn dcc(
    State(wb): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<crate::session::DccView> {
    Ok(Json(wb.get_dcc(&id)?))
}

#[derive(Debug, Deserialize)]
struct SuggestBody {
    #[serde(default = "default_n")]
    n: usize,
}

fn default_n() -> usize {
    3
}

async fn suggest(
    State(wb): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Option<Json<SuggestBody>>,
) -> ApiResult<crate::session::SuggestResponse> {
    let n = body.map_or_else(default_n, |Json(b)| b.n);
    Ok(Json(wb.suggest(&id, n).await?))
}

async fn create_draft(
    State(wb): State<AppState>,
    Json(draft): Json<NewDraft>,
) -> Result<(StatusCode, Json<dcc_core::drafts::CounterfactualDraft>), ApiError> {
    Ok((StatusCode::CREATED, Json(wb.create_draft(draft)?)))
}

async fn list_drafts(State(wb): State<AppState>) -> ApiResult<serde_json::Value> {
    Ok(Json(json!({ "drafts": wb.drafts() })))
}

async fn get_draft(
    State(wb): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<dcc_core::drafts::CounterfactualDraft> {
    Ok(Json(wb.get_draft(&id)?))
}

async fn edit_draft(
    State(wb): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(update): Json<DraftUpdate>,
) -> ApiResult<dcc_core::drafts::CounterfactualDraft> {
    Ok(Json(wb.edit_draft(&id, update).await?))
}

async fn estimate(
    State(wb): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Option<Json<EstimateRequest>>,
) -> ApiResult<crate::session::EstimateResponse> {
    let request = body.map(|Json(b)| b).unwrap_or_default();
    Ok(Json(wb.estimate(&id, request).await?))
}

async fn submit(
    State(wb): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<dcc_core::drafts::SubmitOutcome> {
    Ok(Json(wb.submit(&id).await?))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    /// Comma-separated; a draft matches if it carries any of them.
    #[serde(default)]
    tags: Option<String>,
}

async fn export(
    State(wb): State<AppState>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    let tags = q
        .tags
        .iter()
        .flat_map(|t| t.split(','))
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(String::from)
        .collect();
    let items = wb.export(&SuiteFilter { tags })?;
    let mut body = Vec::new();
    write_suite(&items, &mut body).map_err(SuiteError::Io)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

/// Either `items` or `suite` (JSON-lines text) must be given.
#[derive(Debug, Deserialize)]
struct EvaluateBody {
    #[serde(default)]
    items: Option<Vec<SuiteItem>>,
    #[serde(default)]
    suite: Option<String>,
    /// `mock:<seed>` or a scorer URL; defaults to the configured one.
    #[serde(default)]
    scorer: Option<String>,
}

async fn evaluate(
    State(wb): State<AppState>,
    Json(body): Json<EvaluateBody>,
) -> ApiResult<dcc_core::suite::EvaluationReport> {
    let items = match (body.items, body.suite) {
        (Some(items), None) => items,
        (None, Some(text)) => read_suite(text.as_bytes())?,
        _ => {
            return Err(WorkbenchError::Invalid("give exactly one of items or suite".into()).into())
        }
    };
    let scorer = body
        .scorer
        .as_deref()
        .map(scorer_for)
        .transpose()
        .map_err(WorkbenchError::Invalid)?;
    Ok(Json(wb.evaluate(&items, scorer).await?))
}
