//! HTTP routes over an [`AnnotationStore`].
//!
//! Writes take the store's write lock, so submissions are applied one at a
//! time; reads share the read lock.

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use openvik_core::annotation::{AnnotationError, AnnotationStore};
use openvik_core::eval::RatingRecord;
use serde::Deserialize;
use std::sync::{Arc, RwLock};

pub type SharedStore = Arc<RwLock<AnnotationStore>>;

pub fn router(store: SharedStore) -> Router {
    Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/ratings", post(submit))
        .route("/api/agreement", get(agreement))
        .route("/api/export", get(export))
        .with_state(store)
}

fn error(status: StatusCode, message: impl ToString) -> Response {
    (status, Json(serde_json::json!({ "error": message.to_string() }))).into_response()
}

fn annotation_error(e: AnnotationError) -> Response {
    let status = match e {
        AnnotationError::UnknownRater(_) | AnnotationError::UnknownPhrase(_) => StatusCode::NOT_FOUND,
        AnnotationError::Log { .. } | AnnotationError::Empty => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    };
    error(status, e)
}

#[derive(Deserialize)]
struct NextParams {
    rater: Option<String>,
}

async fn next_task(State(store): State<SharedStore>, Query(p): Query<NextParams>) -> Response {
    let Some(rater) = p.rater.filter(|r| !r.is_empty()) else {
        return error(StatusCode::BAD_REQUEST, "missing query parameter `rater`");
    };
    let store = store.read().expect("store lock");
    match store.next_task(&rater) {
        Ok(task) => Json(task).into_response(),
        Err(e) => annotation_error(e),
    }
}

async fn submit(State(store): State<SharedStore>, body: String) -> Response {
    let record: RatingRecord = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed rating: {e}")),
    };
    let mut store = store.write().expect("store lock");
    match store.submit_rating(record) {
        Ok(ack) => Json(ack).into_response(),
        Err(e) => annotation_error(e),
    }
}

async fn agreement(State(store): State<SharedStore>) -> Response {
    Json(store.read().expect("store lock").agreement_view()).into_response()
}

async fn export(State(store): State<SharedStore>) -> Response {
    let body = store.read().expect("store lock").export_jsonl();
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}
