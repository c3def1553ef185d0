#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use threadsmith_core::clock::ManualClock;
use threadsmith_core::llm::mock::FnTransport;
use threadsmith_core::llm::prompts::{self, PROFILE_SYSTEM, REFINE_SYSTEM};
use threadsmith_core::llm::{ChatTransport, GenerationConfig, TransportError};
use threadsmith_service::http::{cors_layer, router};
use threadsmith_service::{FileStore, Service};
use tower::ServiceExt;

pub const REFINED_TEXT: &str = "A sharper version of the message.";
pub const REFINED_PROFILE: &str = "Argues with short, pointed sentences.";

pub struct Harness {
    pub app: Router,
    pub service: Arc<Service>,
    pub clock: Arc<ManualClock>,
    pub dir: TempDir,
}

/// Three speakers, three levels, thirteen nodes; ids are dotted paths.
pub fn sample_tree(tree_id: &str) -> Value {
    let authors = ["a", "b", "c"];
    let mut nodes = vec![json!({"id": "1", "author": "a", "text": "Should cities ban cars downtown?"})];
    for i in 1..=3 {
        let id = format!("1.{i}");
        nodes.push(json!({"id": id, "author": authors[i - 1], "text": format!("level two reply {i}"), "parent": "1"}));
        for j in 1..=3 {
            nodes.push(json!({
                "id": format!("{id}.{j}"),
                "author": authors[j - 1],
                "text": format!("level three reply {i}.{j}"),
                "parent": id,
            }));
        }
    }
    json!({"tree_id": tree_id, "topic": "car-free centres", "nodes": nodes})
}

/// Answers profile and refinement prompts with fixed text and normalization with a valid tree.
pub fn scripted_transport() -> Arc<dyn ChatTransport> {
    let profile_system = prompts::fill(PROFILE_SYSTEM.text, &[]);
    let refine_system = prompts::fill(REFINE_SYSTEM.text, &[]);
    let normalize_system = prompts::normalize_system(None);
    Arc::new(FnTransport(move |_: &GenerationConfig, system: &str, _user: &str| {
        if system == profile_system {
            Ok(REFINED_PROFILE.to_string())
        } else if system == refine_system {
            Ok(REFINED_TEXT.to_string())
        } else if system.starts_with(&normalize_system) {
            Ok(format!("```json\n{}\n```", sample_tree("repaired")))
        } else {
            Err(TransportError::fatal("unexpected prompt"))
        }
    }))
}

pub fn harness() -> Harness {
    harness_with(scripted_transport())
}

pub fn harness_with(transport: Arc<dyn ChatTransport>) -> Harness {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(ManualClock::at_epoch_secs(1_700_000_000));
    let store = FileStore::open(dir.path()).unwrap();
    let service = Arc::new(Service::new(store, transport, clock.clone()));
    let app = router(service.clone(), cors_layer(&[]));
    Harness { app, service, clock, dir }
}

pub struct Resp {
    pub status: u16,
    pub body: Vec<u8>,
    pub headers: axum::http::HeaderMap,
}

impl Resp {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("body is not JSON ({e}): {}", String::from_utf8_lossy(&self.body)))
    }
}

impl Harness {
    pub async fn send(&self, method: &str, uri: &str, body: Option<Value>, headers: &[(&str, &str)]) -> Resp {
        let mut req = Request::builder().method(method).uri(uri);
        for (k, v) in headers {
            req = req.header(*k, *v);
        }
        let body = match body {
            Some(v) => Body::from(serde_json::to_vec(&v).unwrap()),
            None => Body::empty(),
        };
        let resp = self.app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
        let status = resp.status().as_u16();
        let headers = resp.headers().clone();
        let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        Resp { status, body, headers }
    }

    pub async fn get(&self, uri: &str) -> Resp {
        self.send("GET", uri, None, &[]).await
    }

    pub async fn post(&self, uri: &str, body: Value) -> Resp {
        self.send("POST", uri, Some(body), &[]).await
    }

    pub async fn patch(&self, uri: &str, body: Value) -> Resp {
        self.send("PATCH", uri, Some(body), &[]).await
    }

    /// Uploads `sample_tree(tree_id)` and returns the created entry.
    pub async fn upload_sample(&self, tree_id: &str) -> Value {
        let r = self.post("/api/files", json!({"kind": "discussion", "content": sample_tree(tree_id)})).await;
        assert_eq!(r.status, 201, "{}", String::from_utf8_lossy(&r.body));
        r.json()
    }

    /// Creates a draft over `tree_id` and returns its id.
    pub async fn new_draft(&self, tree_id: &str) -> String {
        let r = self.post("/api/drafts", json!({"tree_id": tree_id, "title": "t"})).await;
        assert_eq!(r.status, 201, "{}", String::from_utf8_lossy(&r.body));
        r.json()["draft_id"].as_str().unwrap().to_string()
    }

    /// Appends node-sourced turns one PATCH at a time, advancing the clock by `secs` before each.
    pub async fn append_nodes(&self, draft_id: &str, nodes: &[&str], secs: i64) -> Value {
        let mut draft = self.get(&format!("/api/drafts/{draft_id}")).await.json();
        for n in nodes {
            self.clock.advance_secs(secs);
            let version = draft["version"].as_u64().unwrap();
            let r = self
                .patch(
                    &format!("/api/drafts/{draft_id}"),
                    json!({"version": version, "commands": [{"op": "append", "node_id": n}]}),
                )
                .await;
            assert_eq!(r.status, 200, "{}", String::from_utf8_lossy(&r.body));
            draft = r.json();
        }
        draft
    }

    pub fn digest(&self) -> String {
        self.service.store().digest().unwrap()
    }
}
