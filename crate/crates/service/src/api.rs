//! HTTP handlers for the `/api/v1` interface.

use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use decode_core::data::{serialize_cohort, Cohort, SCHEMA_VERSION};
use decode_core::model::PredictError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::assess::AssessmentResult;
use crate::store::{is_token, PcrResult, StoreError};
use crate::submission::{decode, FieldError, QuestionnaireSubmission};
use crate::AppState;

#[derive(Debug)]
pub enum ApiError {
    Validation(Vec<FieldError>),
    InsufficientData(Vec<String>),
    NotFound,
    Gone,
    Conflict(&'static str),
    Internal(String),
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound => ApiError::NotFound,
            StoreError::Expired => ApiError::Gone,
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl From<PredictError> for ApiError {
    fn from(e: PredictError) -> Self {
        match e {
            PredictError::MissingFields(f) => ApiError::InsufficientData(f),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::Validation(fields) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({"error": "validation_failed", "fields": fields}),
            ),
            ApiError::InsufficientData(missing) => (
                StatusCode::UNPROCESSABLE_ENTITY,
                json!({
                    "error": "insufficient_data",
                    "message": "the model needs answers to these questions",
                    "missing_fields": missing,
                }),
            ),
            ApiError::NotFound => (StatusCode::NOT_FOUND, json!({"error": "not_found"})),
            ApiError::Gone => (StatusCode::GONE, json!({"error": "expired"})),
            ApiError::Conflict(what) => (StatusCode::CONFLICT, json!({"error": what})),
            ApiError::Internal(message) => {
                tracing::error!(%message, "request failed");
                (StatusCode::INTERNAL_SERVER_ERROR, json!({"error": "internal"}))
            }
        };
        (status, Json(body)).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessResponse {
    #[serde(flatten)]
    pub result: AssessmentResult,
    pub token: String,
}

#[derive(Debug, Clone, Deserialize)]
struct PcrBody {
    result: PcrResult,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/health", get(health))
        .route("/api/v1/assess", post(assess))
        .route("/api/v1/case/{token}", get(get_case).put(update_case))
        .route("/api/v1/case/{token}/pcr", post(record_pcr))
        .route("/api/v1/case/{token}/export", get(export_case))
        .with_state(state)
}

fn submission(body: &Value) -> Result<QuestionnaireSubmission, ApiError> {
    let s = decode(body).map_err(ApiError::Validation)?;
    s.validate().map_err(ApiError::Validation)?;
    Ok(s)
}

fn token_of(token: &str) -> Result<&str, ApiError> {
    if is_token(token) {
        Ok(token)
    } else {
        Err(ApiError::NotFound)
    }
}

fn body_json(body: Result<Json<Value>, axum::extract::rejection::JsonRejection>) -> Result<Value, ApiError> {
    body.map(|Json(v)| v).map_err(|e| {
        ApiError::Validation(vec![FieldError {
            field: String::new(),
            message: e.body_text(),
        }])
    })
}

async fn health(State(st): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({
        "model_id": st.model.id,
        "model_type": st.model.kind(),
        "schema_version": SCHEMA_VERSION,
        "tool_version": decode_core::TOOL_VERSION,
    }))
}

async fn assess(
    State(st): State<Arc<AppState>>,
    body: Result<Json<Value>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<AssessResponse>, ApiError> {
    let s = submission(&body_json(body)?)?;
    let result = st.assess(&s)?;
    let case = st.store.create(st.clock.now(), st.ttl, s, result.clone())?;
    Ok(Json(AssessResponse {
        result,
        token: case.token,
    }))
}

async fn get_case(State(st): State<Arc<AppState>>, Path(token): Path<String>) -> Result<Response, ApiError> {
    let case = st.store.get(token_of(&token)?, st.clock.now())?;
    Ok(Json(case).into_response())
}

async fn update_case(
    State(st): State<Arc<AppState>>,
    Path(token): Path<String>,
    body: Result<Json<Value>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<AssessResponse>, ApiError> {
    let token = token_of(&token)?;
    // Expired or unknown tokens are reported before body problems.
    st.store.get(token, st.clock.now())?;
    let s = submission(&body_json(body)?)?;
    let case = st.store.update(token, st.clock.now(), s, |s| st.assess(s))?;
    Ok(Json(AssessResponse {
        result: case.latest,
        token: case.token,
    }))
}

async fn record_pcr(
    State(st): State<Arc<AppState>>,
    Path(token): Path<String>,
    body: Result<Json<Value>, axum::extract::rejection::JsonRejection>,
) -> Result<StatusCode, ApiError> {
    let token = token_of(&token)?;
    st.store.get(token, st.clock.now())?;
    let body: PcrBody = serde_json::from_value(body_json(body)?).map_err(|_| {
        ApiError::Validation(vec![FieldError {
            field: "result".into(),
            message: "must be \"positive\" or \"negative\"".into(),
        }])
    })?;
    st.store.record_pcr(token, st.clock.now(), body.result)?;
    Ok(StatusCode::NO_CONTENT)
}

/// The case as one canonical CSV record, available once a PCR result exists.
async fn export_case(State(st): State<Arc<AppState>>, Path(token): Path<String>) -> Result<Response, ApiError> {
    let case = st.store.get(token_of(&token)?, st.clock.now())?;
    let record = case.export_record().ok_or(ApiError::Conflict("no_pcr_result"))?;
    let csv = serialize_cohort(&Cohort::new(vec![record], "service export"));
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}
