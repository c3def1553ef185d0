//! Minimal `/chat/completions` server that replays fixture files.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use threadsmith_core::llm::mock::{prompt_key, FixtureTransport};
use threadsmith_core::llm::{ChatTransport, GenerationConfig, HttpTransport, HttpTransportConfig};
use threadsmith_service::ServiceConfig;

pub struct MockState {
    fixtures: FixtureTransport,
    upstream: Option<String>,
    api_key: Option<String>,
}

impl MockState {
    pub fn new(dir: PathBuf, upstream: Option<String>, api_key: Option<String>) -> Self {
        MockState { fixtures: FixtureTransport::new(dir), upstream, api_key }
    }
}

/// System and user text of the first message with each role.
pub fn prompt_of(body: &Value) -> Option<(String, String)> {
    let messages = body["messages"].as_array()?;
    let find = |role: &str| {
        messages.iter().find(|m| m["role"] == role).and_then(|m| m["content"].as_str()).map(str::to_string)
    };
    Some((find("system").unwrap_or_default(), find("user")?))
}

fn config_of(body: &Value) -> GenerationConfig {
    let d = GenerationConfig::REFINE;
    GenerationConfig {
        temperature: body["temperature"].as_f64().unwrap_or(d.temperature),
        top_p: body["top_p"].as_f64().unwrap_or(d.top_p),
        max_tokens: body["max_tokens"].as_u64().map(|v| v as u32).unwrap_or(d.max_tokens),
        seed: body["seed"].as_i64().unwrap_or(d.seed),
    }
}

pub fn completion(model: &str, content: &str) -> Value {
    json!({
        "object": "chat.completion",
        "model": model,
        "choices": [{
            "index": 0,
            "message": {"role": "assistant", "content": content},
            "finish_reason": "stop",
        }],
    })
}

fn error(status: StatusCode, message: String) -> (StatusCode, Json<Value>) {
    (status, Json(json!({"error": {"message": message}})))
}

/// Answers one completion request, recording upstream answers when a fixture is missing.
pub fn answer(state: &MockState, body: &Value) -> (StatusCode, Json<Value>) {
    let Some((system, user)) = prompt_of(body) else {
        return error(StatusCode::BAD_REQUEST, "messages must include a user message".into());
    };
    let model = body["model"].as_str().unwrap_or("mock");
    if let Some(text) = state.fixtures.lookup(&system, &user) {
        return (StatusCode::OK, Json(completion(model, &text)));
    }
    let Some(base) = &state.upstream else {
        return error(StatusCode::NOT_FOUND, format!("no fixture {}", prompt_key(&system, &user)));
    };
    let mut cfg = HttpTransportConfig::new(base.clone(), model);
    cfg.api_key = state.api_key.clone();
    match HttpTransport::new(cfg).complete(&config_of(body), &system, &user) {
        Ok(text) => {
            if let Err(e) = FixtureTransport::write_fixture(state.fixtures.dir(), &prompt_key(&system, &user), &text) {
                return error(StatusCode::INTERNAL_SERVER_ERROR, format!("cannot record fixture: {e}"));
            }
            (StatusCode::OK, Json(completion(model, &text)))
        }
        Err(e) => error(StatusCode::BAD_GATEWAY, e.to_string()),
    }
}

async fn chat(State(state): State<Arc<MockState>>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    tokio::task::spawn_blocking(move || answer(&state, &body))
        .await
        .unwrap_or_else(|e| error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

pub fn router(state: Arc<MockState>) -> Router {
    Router::new().route("/chat/completions", post(chat)).route("/v1/chat/completions", post(chat)).with_state(state)
}

pub async fn serve(dir: PathBuf, bind: &str, upstream: Option<String>) -> std::io::Result<()> {
    let api_key = ServiceConfig::from_env().api_key;
    let app = router(Arc::new(MockState::new(dir, upstream, api_key)));
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("mock completions on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
