//! Axum routes over [`Service`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::Router;
use serde::Deserialize;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use crate::error::ApiError;
use crate::service::{ApiResult, Reply, Service};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";

type Shared = State<Arc<Service>>;

impl IntoResponse for Reply {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, [("content-type", "application/json")], self.body).into_response()
    }
}

async fn read_only<F>(svc: Arc<Service>, f: F) -> Response
where
    F: FnOnce(&Service) -> ApiResult + Send + 'static,
{
    match tokio::task::spawn_blocking(move || f(&svc)).await {
        Ok(Ok(reply)) => reply.into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError::internal(e.to_string()).into_response(),
    }
}

async fn mutating<F>(svc: Arc<Service>, headers: &HeaderMap, route: String, f: F) -> Response
where
    F: FnOnce(&Service) -> ApiResult + Send + 'static,
{
    let key = headers.get(IDEMPOTENCY_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string);
    let job = move || match key {
        Some(k) => svc.idempotent(&route, &k, f),
        None => f(&svc).unwrap_or_else(|e| Reply::from_error(&e)),
    };
    match tokio::task::spawn_blocking(job).await {
        Ok(reply) => reply.into_response(),
        Err(e) => ApiError::internal(e.to_string()).into_response(),
    }
}

async fn upload(State(s): Shared, headers: HeaderMap, body: Bytes) -> Response {
    mutating(s, &headers, "POST /api/files".into(), move |s| s.upload(&body)).await
}

async fn list_files(State(s): Shared) -> Response {
    read_only(s, |s| s.list_files()).await
}

async fn get_file(State(s): Shared, Path(id): Path<String>) -> Response {
    read_only(s, move |s| s.get_file(&id)).await
}

async fn get_tree(State(s): Shared, Path(id): Path<String>) -> Response {
    read_only(s, move |s| s.get_tree(&id)).await
}

async fn focus(State(s): Shared, Path((id, nid)): Path<(String, String)>) -> Response {
    read_only(s, move |s| s.focus(&id, &nid)).await
}

async fn subtree(State(s): Shared, Path((id, nid)): Path<(String, String)>) -> Response {
    read_only(s, move |s| s.subtree(&id, &nid)).await
}

async fn normalize(State(s): Shared, headers: HeaderMap, Path(id): Path<String>) -> Response {
    let route = format!("POST /api/trees/{id}/normalize");
    mutating(s, &headers, route, move |s| s.normalize(&id)).await
}

async fn create_draft(State(s): Shared, headers: HeaderMap, body: Bytes) -> Response {
    mutating(s, &headers, "POST /api/drafts".into(), move |s| s.create_draft(&body)).await
}

async fn get_draft(State(s): Shared, Path(id): Path<String>) -> Response {
    read_only(s, move |s| s.get_draft(&id)).await
}

async fn patch_draft(State(s): Shared, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    let route = format!("PATCH /api/drafts/{id}");
    mutating(s, &headers, route, move |s| s.patch_draft(&id, &body)).await
}

async fn delete_turn(State(s): Shared, headers: HeaderMap, Path((id, i)): Path<(String, String)>) -> Response {
    let route = format!("DELETE /api/drafts/{id}/turns/{i}");
    mutating(s, &headers, route, move |s| s.delete_turn(&id, &i)).await
}

async fn refine_turn(
    State(s): Shared,
    headers: HeaderMap,
    Path((id, i)): Path<(String, String)>,
    body: Bytes,
) -> Response {
    let route = format!("POST /api/drafts/{id}/turns/{i}/refine");
    mutating(s, &headers, route, move |s| s.refine_turn(&id, &i, &body)).await
}

async fn decide(State(s): Shared, headers: HeaderMap, Path((id, i)): Path<(String, String)>, body: Bytes) -> Response {
    let route = format!("POST /api/drafts/{id}/turns/{i}/decision");
    mutating(s, &headers, route, move |s| s.decide(&id, &i, &body)).await
}

async fn refine_speaker(
    State(s): Shared,
    headers: HeaderMap,
    Path((tree, speaker)): Path<(String, String)>,
    body: Bytes,
) -> Response {
    let route = format!("POST /api/speakers/{tree}/{speaker}/profile/refine");
    mutating(s, &headers, route, move |s| s.refine_speaker(&tree, &speaker, &body)).await
}

async fn lint(State(s): Shared, Path(id): Path<String>) -> Response {
    read_only(s, move |s| s.lint(&id)).await
}

#[derive(Debug, Default, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    force: bool,
}

async fn export(State(s): Shared, Path(id): Path<String>, Query(q): Query<ExportQuery>) -> Response {
    read_only(s, move |s| s.export(&id, q.force)).await
}

#[derive(Debug, Default, Deserialize)]
struct MetricsQuery {
    draft_id: Option<String>,
}

async fn metrics(State(s): Shared, Query(q): Query<MetricsQuery>) -> Response {
    read_only(s, move |s| s.session_metrics(q.draft_id.as_deref())).await
}

async fn schema(State(s): Shared) -> Response {
    read_only(s, |s| s.schema()).await
}

async fn fallback() -> Response {
    ApiError::not_found("no such route").into_response()
}

pub fn cors_layer(origins: &[String]) -> CorsLayer {
    let base =
        CorsLayer::new().allow_methods([Method::GET, Method::POST, Method::PATCH, Method::DELETE]).allow_headers(Any);
    if origins.is_empty() {
        base.allow_origin(Any)
    } else {
        let list: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
        base.allow_origin(AllowOrigin::list(list))
    }
}

pub fn router(service: Arc<Service>, cors: CorsLayer) -> Router {
    Router::new()
        .route("/api/files", post(upload).get(list_files))
        .route("/api/files/{id}", get(get_file))
        .route("/api/trees/{id}", get(get_tree))
        .route("/api/trees/{id}/nodes/{nid}/focus", get(focus))
        .route("/api/trees/{id}/nodes/{nid}/subtree", get(subtree))
        .route("/api/trees/{id}/normalize", post(normalize))
        .route("/api/drafts", post(create_draft))
        .route("/api/drafts/{id}", get(get_draft).patch(patch_draft))
        .route("/api/drafts/{id}/turns/{i}", delete(delete_turn))
        .route("/api/drafts/{id}/turns/{i}/refine", post(refine_turn))
        .route("/api/drafts/{id}/turns/{i}/decision", post(decide))
        .route("/api/speakers/{tree_id}/{speaker_id}/profile/refine", post(refine_speaker))
        .route("/api/drafts/{id}/lint", get(lint))
        .route("/api/drafts/{id}/export", get(export))
        .route("/api/metrics/session", get(metrics))
        .route("/api/schema", get(schema))
        .fallback(fallback)
        .layer(cors)
        .with_state(service)
}
