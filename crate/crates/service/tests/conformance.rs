mod common;

use std::sync::Arc;

use common::*;
use serde_json::{json, Value};
use threadsmith_core::llm::mock::FailingTransport;
use threadsmith_core::llm::TransportError;
use threadsmith_core::tree::DEFAULT_USER_DESCRIPTION;

const ORDER: [&str; 12] =
    ["1", "1.1", "1.1.1", "1.1.2", "1.2", "1.2.1", "1.2.3", "1.3", "1.3.1", "1.3.2", "1.1.3", "1.2.2"];

#[tokio::test]
async fn upload_list_and_fetch() {
    let h = harness();
    let entry = h.upload_sample("t1").await;
    assert_eq!(entry["file_id"], "t1");
    assert_eq!(entry["kind"], "discussion");
    assert_eq!(entry["version"], 0);

    let list = h.get("/api/files").await;
    assert_eq!(list.status, 200);
    assert_eq!(list.json().as_array().unwrap().len(), 1);

    let file = h.get("/api/files/t1").await;
    assert_eq!(file.status, 200);
    assert_eq!(file.json()["entry"]["file_id"], "t1");

    let tree = h.get("/api/trees/t1").await.json();
    assert_eq!(tree["nodes"].as_array().unwrap().len(), 13);
    for u in tree["users"].as_array().unwrap() {
        assert_eq!(u["description"], DEFAULT_USER_DESCRIPTION);
    }
}

#[tokio::test]
async fn duplicate_upload_conflicts() {
    let h = harness();
    h.upload_sample("t1").await;
    let r = h.post("/api/files", json!({"kind": "discussion", "content": sample_tree("t1")})).await;
    assert_eq!(r.status, 409);
    assert_eq!(r.json()["code"], "conflict");
}

#[tokio::test]
async fn cyclic_upload_offers_normalization() {
    let h = harness();
    let cyclic = json!({"tree_id": "bad", "nodes": [
        {"id": "1", "author": "a", "text": "root"},
        {"id": "2", "author": "b", "text": "x", "parent": "3"},
        {"id": "3", "author": "c", "text": "y", "parent": "2"},
    ]});
    let r = h.post("/api/files", json!({"kind": "discussion", "content": cyclic})).await;
    assert_eq!(r.status, 400);
    let body = r.json();
    assert_eq!(body["code"], "bad_request");
    assert_eq!(body["detail"]["kind"], "CycleDetected");
    let url = body["detail"]["normalize_url"].as_str().unwrap().to_string();

    let fixed = h.send("POST", &url, None, &[]).await;
    assert_eq!(fixed.status, 200, "{}", String::from_utf8_lossy(&fixed.body));
    assert_eq!(fixed.json()["file_id"], "repaired");
    assert_eq!(h.get("/api/trees/repaired").await.status, 200);
}

#[tokio::test]
async fn malformed_upload_text_is_kept_for_normalization() {
    let h = harness();
    let r = h.post("/api/files", json!({"kind": "discussion", "content": "{ not json"})).await;
    assert_eq!(r.status, 400);
    assert_eq!(r.json()["detail"]["kind"], "MalformedInput");
}

#[tokio::test]
async fn draft_upload_is_checked_against_its_tree() {
    let h = harness();
    let orphan =
        json!({"draft_id": "d1", "source_tree_id": "missing", "title": "x", "status": "in_progress", "turns": []});
    let r = h.post("/api/files", json!({"kind": "draft", "content": orphan})).await;
    assert_eq!(r.status, 400);

    h.upload_sample("t1").await;
    let bad_node = json!({"draft_id": "d1", "source_tree_id": "t1", "title": "x", "status": "in_progress", "turns": [
        {"index": 0, "source_node_id": "9.9", "speaker": "a", "addressees": "everyone", "text": "hi", "provenance": "original"}
    ]});
    let r = h.post("/api/files", json!({"kind": "draft", "content": bad_node})).await;
    assert_eq!(r.status, 400);

    let ok = json!({"draft_id": "d1", "source_tree_id": "t1", "title": "x", "status": "in_progress", "turns": [
        {"index": 0, "source_node_id": "1", "speaker": "a", "addressees": "everyone", "text": "hi", "provenance": "original"}
    ]});
    let r = h.post("/api/files", json!({"kind": "draft", "content": ok})).await;
    assert_eq!(r.status, 201);
    assert_eq!(h.get("/api/drafts/d1").await.json()["turns"][0]["text"], "hi");
}

#[tokio::test]
async fn unknown_resources_are_404() {
    let h = harness();
    h.upload_sample("t1").await;
    for uri in [
        "/api/drafts/nope",
        "/api/files/nope",
        "/api/trees/nope",
        "/api/trees/t1/nodes/9/focus",
        "/api/trees/t1/nodes/9/subtree",
        "/api/drafts/nope/lint",
        "/api/drafts/nope/export",
        "/api/nowhere",
    ] {
        let r = h.get(uri).await;
        assert_eq!(r.status, 404, "{uri}");
        assert_eq!(r.json()["code"], "not_found", "{uri}");
    }
}

#[tokio::test]
async fn focus_and_subtree() {
    let h = harness();
    h.upload_sample("t1").await;
    let f = h.get("/api/trees/t1/nodes/1.2/focus").await.json();
    assert_eq!(f["parent"]["id"], "1");
    assert_eq!(f["node"]["id"], "1.2");
    let kids: Vec<&str> = f["children"].as_array().unwrap().iter().map(|c| c["id"].as_str().unwrap()).collect();
    assert_eq!(kids, ["1.2.1", "1.2.2", "1.2.3"]);

    let root = h.get("/api/trees/t1/nodes/1/focus").await.json();
    assert!(root["parent"].is_null());

    let sub = h.get("/api/trees/t1/nodes/1.3/subtree").await.json();
    assert_eq!(sub["nodes"].as_array().unwrap().len(), 4);
    assert!(sub["nodes"][0].get("parent").is_none());
}

#[tokio::test]
async fn patch_versions_and_conflicts() {
    let h = harness();
    h.upload_sample("t1").await;
    let id = h.new_draft("t1").await;
    let uri = format!("/api/drafts/{id}");

    let r = h
        .patch(
            &uri,
            json!({"version": 0, "commands": [{"op": "append", "node_id": "1"}, {"op": "append", "node_id": "1.2"}]}),
        )
        .await;
    assert_eq!(r.status, 200);
    let d = r.json();
    assert_eq!(d["version"], 1);
    assert_eq!(d["turns"][1]["addressees"], json!(["a"]));

    let stale = h.patch(&uri, json!({"version": 0, "commands": [{"op": "append", "node_id": "1.3"}]})).await;
    assert_eq!(stale.status, 409);
    assert_eq!(stale.json()["detail"]["current_version"], 1);

    // a failing command leaves the whole batch unapplied
    let bad = h
        .patch(
            &uri,
            json!({"version": 1, "commands": [{"op": "append", "node_id": "1.3"}, {"op": "append", "node_id": "7"}]}),
        )
        .await;
    assert_eq!(bad.status, 400);
    let now = h.get(&uri).await.json();
    assert_eq!(now["version"], 1);
    assert_eq!(now["turns"].as_array().unwrap().len(), 2);

    let garbage = h.patch(&uri, json!({"commands": []})).await;
    assert_eq!(garbage.status, 400);
}

#[tokio::test]
async fn delete_turn_reindexes() {
    let h = harness();
    h.upload_sample("t1").await;
    let id = h.new_draft("t1").await;
    h.append_nodes(&id, &["1", "1.1", "1.2"], 1).await;
    let r = h.send("DELETE", &format!("/api/drafts/{id}/turns/1"), None, &[]).await;
    assert_eq!(r.status, 200);
    let d = r.json();
    let idx: Vec<u64> = d["turns"].as_array().unwrap().iter().map(|t| t["index"].as_u64().unwrap()).collect();
    assert_eq!(idx, [0, 1]);
    assert_eq!(d["turns"][1]["source_node_id"], "1.2");
    let r = h.send("DELETE", &format!("/api/drafts/{id}/turns/5"), None, &[]).await;
    assert_eq!(r.status, 404);
    let r = h.send("DELETE", &format!("/api/drafts/{id}/turns/x"), None, &[]).await;
    assert_eq!(r.status, 404);
}

#[tokio::test]
async fn refine_then_decide() {
    let h = harness();
    h.upload_sample("t1").await;
    let id = h.new_draft("t1").await;
    h.append_nodes(&id, &["1", "1.1", "1.2"], 1).await;

    let constraints = json!({"style": "aggressive", "temperament": "informal", "length": "much_longer"});
    let r = h.post(&format!("/api/drafts/{id}/turns/2/refine"), constraints.clone()).await;
    assert_eq!(r.status, 200, "{}", String::from_utf8_lossy(&r.body));
    let s = r.json();
    assert_eq!(s["suggested_text"], REFINED_TEXT);
    assert_eq!(s["decision"], "pending");
    assert_eq!(s["turn_index"], 2);
    let sid = s["suggestion_id"].as_str().unwrap().to_string();

    let d = h.get(&format!("/api/drafts/{id}")).await.json();
    assert_eq!(d["turns"][2]["text"], "level two reply 2");
    assert_eq!(d["refinements"].as_array().unwrap().len(), 1);

    let decide = format!("/api/drafts/{id}/turns/2/decision");
    let r = h.post(&decide, json!({"suggestion_id": sid, "decision": "accepted"})).await;
    assert_eq!(r.status, 200);
    let d = r.json();
    assert_eq!(d["turns"][2]["text"], REFINED_TEXT);
    assert_eq!(d["turns"][2]["provenance"], "llm_accepted");

    let again = h.post(&decide, json!({"suggestion_id": sid, "decision": "rejected"})).await;
    assert_eq!(again.status, 409);

    let wrong_turn = h
        .post(&format!("/api/drafts/{id}/turns/1/decision"), json!({"suggestion_id": sid, "decision": "accepted"}))
        .await;
    assert_eq!(wrong_turn.status, 404);

    let bad_constraints = h.post(&format!("/api/drafts/{id}/turns/0/refine"), json!({"style": "cynical"})).await;
    assert_eq!(bad_constraints.status, 400);
}

#[tokio::test]
async fn modify_needs_text_and_reject_keeps_original() {
    let h = harness();
    h.upload_sample("t1").await;
    let id = h.new_draft("t1").await;
    h.append_nodes(&id, &["1", "1.1"], 1).await;
    let c = json!({"style": "detached", "temperament": "formal", "length": "same_length"});

    let s = h.post(&format!("/api/drafts/{id}/turns/1/refine"), c.clone()).await.json();
    let decide = format!("/api/drafts/{id}/turns/1/decision");
    let r = h.post(&decide, json!({"suggestion_id": s["suggestion_id"], "decision": "modified"})).await;
    assert_eq!(r.status, 400);
    let r = h
        .post(
            &decide,
            json!({"suggestion_id": s["suggestion_id"], "decision": "modified", "edited_text": "my own words"}),
        )
        .await;
    assert_eq!(r.json()["turns"][1]["provenance"], "llm_modified");

    let s = h.post(&format!("/api/drafts/{id}/turns/0/refine"), c).await.json();
    let r = h
        .post(
            &format!("/api/drafts/{id}/turns/0/decision"),
            json!({"suggestion_id": s["suggestion_id"], "decision": "rejected"}),
        )
        .await;
    let d = r.json();
    assert_eq!(d["turns"][0]["provenance"], "original");
    assert_eq!(d["turns"][0]["text"], "Should cities ban cars downtown?");
}

#[tokio::test]
async fn upstream_failure_is_502() {
    let h = harness_with(Arc::new(FailingTransport(TransportError::fatal("provider down"))));
    h.upload_sample("t1").await;
    let id = h.new_draft("t1").await;
    h.append_nodes(&id, &["1"], 1).await;
    let before = h.get(&format!("/api/drafts/{id}")).await.body;
    let r = h
        .post(
            &format!("/api/drafts/{id}/turns/0/refine"),
            json!({"style": "cynic", "temperament": "concise", "length": "slightly_shorter"}),
        )
        .await;
    assert_eq!(r.status, 502);
    assert_eq!(r.json()["code"], "upstream_llm");
    assert_eq!(h.get(&format!("/api/drafts/{id}")).await.body, before);
}

#[tokio::test]
async fn profile_refinement_updates_tree() {
    let h = harness();
    h.upload_sample("t1").await;
    let r = h.send("POST", "/api/speakers/t1/b/profile/refine", None, &[]).await;
    assert_eq!(r.status, 200, "{}", String::from_utf8_lossy(&r.body));
    let p = r.json();
    assert_eq!(p["description"], REFINED_PROFILE);
    assert_eq!(p["previous_description"], DEFAULT_USER_DESCRIPTION);

    let tree = h.get("/api/trees/t1").await.json();
    let b = tree["users"].as_array().unwrap().iter().find(|u| u["id"] == "b").unwrap().clone();
    assert_eq!(b["description"], REFINED_PROFILE);
    assert_eq!(h.get("/api/files/t1").await.json()["entry"]["version"], 1);

    assert_eq!(h.send("POST", "/api/speakers/t1/zed/profile/refine", None, &[]).await.status, 404);
    let id = h.new_draft("t1").await;
    let with_draft = h.post("/api/speakers/t1/a/profile/refine", json!({"draft_id": id})).await;
    assert_eq!(with_draft.status, 200);
}

#[tokio::test]
async fn lint_and_export() {
    let h = harness();
    h.upload_sample("t1").await;
    let id = h.new_draft("t1").await;
    let lint = h.get(&format!("/api/drafts/{id}/lint")).await.json();
    let rules: Vec<&str> = lint.as_array().unwrap().iter().map(|f| f["rule"].as_str().unwrap()).collect();
    assert!(rules.contains(&"R1") && rules.contains(&"R2") && rules.contains(&"R3"));

    let d = h.append_nodes(&id, &ORDER, 5).await;
    assert_eq!(h.get(&format!("/api/drafts/{id}/lint")).await.json(), json!([]));

    let export = format!("/api/drafts/{id}/export");
    assert_eq!(h.get(&export).await.status, 409);
    let forced = h.get(&format!("{export}?force=true")).await;
    assert_eq!(forced.status, 200);

    let version = d["version"].as_u64().unwrap();
    let r = h
        .patch(
            &format!("/api/drafts/{id}"),
            json!({"version": version, "commands": [{"op": "set_status", "status": "final"}]}),
        )
        .await;
    assert_eq!(r.status, 200);
    let first = h.get(&export).await;
    assert_eq!(first.status, 200);
    for _ in 0..3 {
        assert_eq!(h.get(&export).await.body, first.body);
    }
    let doc = first.json();
    assert_eq!(doc["turns"].as_array().unwrap().len(), 12);
    assert_eq!(doc["users"].as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn get_endpoints_do_not_write() {
    let h = harness();
    h.upload_sample("t1").await;
    let id = h.new_draft("t1").await;
    h.append_nodes(&id, &["1", "1.1"], 3).await;
    let before = h.digest();
    for uri in [
        "/api/files".to_string(),
        "/api/files/t1".to_string(),
        "/api/trees/t1".to_string(),
        "/api/trees/t1/nodes/1/focus".to_string(),
        "/api/trees/t1/nodes/1.1/subtree".to_string(),
        format!("/api/drafts/{id}"),
        format!("/api/drafts/{id}/lint"),
        format!("/api/drafts/{id}/export?force=true"),
        format!("/api/drafts/{id}/export"),
        "/api/metrics/session".to_string(),
        "/api/schema".to_string(),
        "/api/drafts/missing".to_string(),
    ] {
        h.get(&uri).await;
        assert_eq!(h.digest(), before, "{uri}");
    }
}

#[tokio::test]
async fn idempotency_key_replays_first_reply() {
    let h = harness();
    h.upload_sample("t1").await;
    let key = [("idempotency-key", "k-1")];
    let a = h.send("POST", "/api/drafts", Some(json!({"tree_id": "t1"})), &key).await;
    let b = h.send("POST", "/api/drafts", Some(json!({"tree_id": "t1"})), &key).await;
    assert_eq!(a.status, 201);
    assert_eq!((a.status, &a.body), (b.status, &b.body));
    let drafts = h.get("/api/files").await.json();
    assert_eq!(drafts.as_array().unwrap().iter().filter(|e| e["kind"] == "draft").count(), 1);

    let id = a.json()["draft_id"].as_str().unwrap().to_string();
    let patch = json!({"version": 0, "commands": [{"op": "append", "node_id": "1"}]});
    let key = [("idempotency-key", "k-2")];
    let p1 = h.send("PATCH", &format!("/api/drafts/{id}"), Some(patch.clone()), &key).await;
    let p2 = h.send("PATCH", &format!("/api/drafts/{id}"), Some(patch.clone()), &key).await;
    assert_eq!(p1.status, 200);
    assert_eq!(p1.body, p2.body);
    assert_eq!(h.get(&format!("/api/drafts/{id}")).await.json()["version"], 1);

    // without a key the retry is a stale write
    let p3 = h.send("PATCH", &format!("/api/drafts/{id}"), Some(patch), &[]).await;
    assert_eq!(p3.status, 409);

    let c = json!({"style": "sarcastic", "temperament": "neutral", "length": "much_shorter"});
    let key = [("idempotency-key", "k-3")];
    let r1 = h.send("POST", &format!("/api/drafts/{id}/turns/0/refine"), Some(c.clone()), &key).await;
    let r2 = h.send("POST", &format!("/api/drafts/{id}/turns/0/refine"), Some(c), &key).await;
    assert_eq!(r1.body, r2.body);
    let d = h.get(&format!("/api/drafts/{id}")).await.json();
    assert_eq!(d["refinements"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn session_metrics_from_recorded_timing() {
    let h = harness();
    h.upload_sample("t1").await;
    let id = h.new_draft("t1").await;
    // 12 appends, 50 s apart: 12 turns in 600 s
    h.append_nodes(&id, &ORDER, 50).await;
    let m = h.get(&format!("/api/metrics/session?draft_id={id}")).await.json();
    assert_eq!(m["v_turn"], json!(1.2));
    assert!(m["v_tokens"].is_null());

    let s = h
        .post(
            &format!("/api/drafts/{id}/turns/3/refine"),
            json!({"style": "cynic", "temperament": "concise", "length": "same_length"}),
        )
        .await
        .json();
    h.clock.advance_secs(12);
    h.post(
        &format!("/api/drafts/{id}/turns/3/decision"),
        json!({"suggestion_id": s["suggestion_id"], "decision": "accepted"}),
    )
    .await;
    let m = h.get("/api/metrics/session").await.json();
    let tokens = REFINED_TEXT.split_whitespace().count() as f64;
    assert_eq!(m["v_tokens"].as_f64().unwrap(), tokens / 12.0);
}

#[tokio::test]
async fn schema_lists_every_route() {
    let h = harness();
    let r = h.get("/api/schema").await;
    assert_eq!(r.status, 200);
    let doc: Value = r.json();
    let routes: Vec<String> = doc["routes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| format!("{} {}", r["method"].as_str().unwrap(), r["path"].as_str().unwrap()))
        .collect();
    for expected in [
        "POST /api/files",
        "GET /api/files",
        "GET /api/files/{id}",
        "GET /api/trees/{id}",
        "GET /api/trees/{id}/nodes/{nid}/focus",
        "GET /api/trees/{id}/nodes/{nid}/subtree",
        "POST /api/trees/{id}/normalize",
        "POST /api/drafts",
        "GET /api/drafts/{id}",
        "PATCH /api/drafts/{id}",
        "DELETE /api/drafts/{id}/turns/{i}",
        "POST /api/drafts/{id}/turns/{i}/refine",
        "POST /api/drafts/{id}/turns/{i}/decision",
        "POST /api/speakers/{tree_id}/{speaker_id}/profile/refine",
        "GET /api/drafts/{id}/lint",
        "GET /api/drafts/{id}/export",
        "GET /api/metrics/session",
    ] {
        assert!(routes.iter().any(|r| r == expected), "{expected}");
    }
}

#[tokio::test]
async fn cors_preflight_is_answered() {
    let h = harness();
    let r = h
        .send(
            "OPTIONS",
            "/api/files",
            None,
            &[("origin", "http://localhost:5173"), ("access-control-request-method", "PATCH")],
        )
        .await;
    assert!(r.status < 300);
    assert!(r.headers.contains_key("access-control-allow-origin"));
}
