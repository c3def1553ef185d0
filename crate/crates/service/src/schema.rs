//! Published description of every route and body, served at `GET /api/schema`.

use serde_json::{json, Value};

fn route(method: &str, path: &str, request: Value, response: Value, errors: &[u16]) -> Value {
    json!({ "method": method, "path": path, "request": request, "response": response, "errors": errors })
}

pub fn routes() -> Vec<Value> {
    let none = Value::Null;
    vec![
        route(
            "POST",
            "/api/files",
            json!({"$ref": "#/types/UploadRequest"}),
            json!({"201": {"$ref": "#/types/FileEntry"}}),
            &[400, 409],
        ),
        route(
            "GET",
            "/api/files",
            none.clone(),
            json!({"200": {"type": "array", "items": {"$ref": "#/types/FileEntry"}}}),
            &[],
        ),
        route(
            "GET",
            "/api/files/{id}",
            none.clone(),
            json!({"200": {"type": "object", "properties": {"entry": {"$ref": "#/types/FileEntry"}, "content": {}}}}),
            &[404],
        ),
        route("GET", "/api/trees/{id}", none.clone(), json!({"200": {"$ref": "#/types/DiscussionFile"}}), &[404]),
        route(
            "GET",
            "/api/trees/{id}/nodes/{nid}/focus",
            none.clone(),
            json!({"200": {"$ref": "#/types/FocusedView"}}),
            &[404],
        ),
        route(
            "GET",
            "/api/trees/{id}/nodes/{nid}/subtree",
            none.clone(),
            json!({"200": {"$ref": "#/types/DiscussionFile"}}),
            &[404],
        ),
        route(
            "POST",
            "/api/trees/{id}/normalize",
            none.clone(),
            json!({"200": {"$ref": "#/types/FileEntry"}}),
            &[404, 502],
        ),
        route(
            "POST",
            "/api/drafts",
            json!({"$ref": "#/types/CreateDraftRequest"}),
            json!({"201": {"$ref": "#/types/Draft"}}),
            &[400, 404],
        ),
        route("GET", "/api/drafts/{id}", none.clone(), json!({"200": {"$ref": "#/types/Draft"}}), &[404]),
        route(
            "PATCH",
            "/api/drafts/{id}",
            json!({"$ref": "#/types/PatchDraftRequest"}),
            json!({"200": {"$ref": "#/types/Draft"}}),
            &[400, 404, 409],
        ),
        route("DELETE", "/api/drafts/{id}/turns/{i}", none.clone(), json!({"200": {"$ref": "#/types/Draft"}}), &[404]),
        route(
            "POST",
            "/api/drafts/{id}/turns/{i}/refine",
            json!({"$ref": "#/types/RefinementConstraints"}),
            json!({"200": {"$ref": "#/types/RefinementSuggestion"}}),
            &[400, 404, 502],
        ),
        route(
            "POST",
            "/api/drafts/{id}/turns/{i}/decision",
            json!({"$ref": "#/types/DecisionRequest"}),
            json!({"200": {"$ref": "#/types/Draft"}}),
            &[400, 404, 409],
        ),
        route(
            "POST",
            "/api/speakers/{tree_id}/{speaker_id}/profile/refine",
            json!({"$ref": "#/types/ProfileRefineRequest"}),
            json!({"200": {"$ref": "#/types/SpeakerProfile"}}),
            &[400, 404, 502],
        ),
        route(
            "GET",
            "/api/drafts/{id}/lint",
            none.clone(),
            json!({"200": {"type": "array", "items": {"$ref": "#/types/LintFinding"}}}),
            &[404],
        ),
        route(
            "GET",
            "/api/drafts/{id}/export",
            json!({"query": {"force": {"type": "boolean"}}}),
            json!({"200": {"$ref": "#/types/ExportedConversation"}}),
            &[404, 409],
        ),
        route(
            "GET",
            "/api/metrics/session",
            json!({"query": {"draft_id": {"type": "string"}}}),
            json!({"200": {"$ref": "#/types/SessionMetrics"}}),
            &[404],
        ),
        route("GET", "/api/schema", none, json!({"200": {"type": "object"}}), &[]),
    ]
}

fn string() -> Value {
    json!({"type": "string"})
}

fn strings(values: &[&str]) -> Value {
    json!({"type": "string", "enum": values})
}

fn addressees() -> Value {
    json!({"oneOf": [{"const": "everyone"}, {"type": "array", "items": string(), "minItems": 1}]})
}

pub fn types() -> Value {
    use threadsmith_core::llm::{Length, Style, Temperament};
    let names = |all: Vec<&'static str>| strings(&all);
    json!({
        "ApiError": {"type": "object", "required": ["code", "message"], "properties": {
            "code": strings(&["bad_request", "not_found", "conflict", "upstream_llm", "internal"]),
            "message": string(),
            "detail": {}
        }},
        "FileEntry": {"type": "object", "required": ["file_id", "kind", "name", "created_at", "version"], "properties": {
            "file_id": string(), "kind": strings(&["discussion", "draft"]), "name": string(),
            "created_at": {"type": "string", "format": "date-time"}, "version": {"type": "integer", "minimum": 0}
        }},
        "UploadRequest": {"type": "object", "required": ["kind", "content"], "properties": {
            "kind": strings(&["discussion", "draft"]), "name": string(),
            "content": {"description": "the document, or its text as a string"}
        }},
        "SpeakerProfile": {"type": "object", "required": ["id", "description"], "properties": {
            "id": string(), "name": string(), "description": string(),
            "stance": strings(&["pro", "counter", "none"]), "previous_description": string()
        }},
        "MessageNode": {"type": "object", "required": ["id", "author", "text"], "properties": {
            "id": string(), "author": string(), "text": string(), "parent": string()
        }, "additionalProperties": true},
        "DiscussionFile": {"type": "object", "required": ["nodes"], "properties": {
            "tree_id": string(), "topic": string(),
            "users": {"type": "array", "items": {"$ref": "#/types/SpeakerProfile"}},
            "nodes": {"type": "array", "items": {"$ref": "#/types/MessageNode"}}
        }},
        "FocusedView": {"type": "object", "properties": {
            "parent": {"oneOf": [{"type": "null"}, {"$ref": "#/types/MessageNode"}]},
            "node": {"$ref": "#/types/MessageNode"},
            "children": {"type": "array", "items": {"$ref": "#/types/MessageNode"}}
        }},
        "Turn": {"type": "object", "required": ["index", "speaker", "addressees", "text", "provenance"], "properties": {
            "index": {"type": "integer"}, "source_node_id": string(), "speaker": string(),
            "addressees": addressees(), "text": string(),
            "provenance": strings(&["original", "human_edited", "llm_accepted", "llm_modified"]),
            "opener": {"type": "boolean"}
        }},
        "Draft": {"type": "object", "required": ["draft_id", "source_tree_id", "title", "status", "version", "turns"], "properties": {
            "draft_id": string(), "source_tree_id": string(), "title": string(),
            "status": strings(&["in_progress", "final"]), "version": {"type": "integer"},
            "turns": {"type": "array", "items": {"$ref": "#/types/Turn"}},
            "refinements": {"type": "array", "items": {"$ref": "#/types/RefinementSuggestion"}}
        }},
        "CreateDraftRequest": {"type": "object", "required": ["tree_id"], "properties": {"tree_id": string(), "title": string()}},
        "DraftCommand": {"type": "object", "required": ["op"], "properties": {
            "op": strings(&["append", "reorder", "set_addressees", "edit_text", "remove", "set_opener", "set_status", "set_title"]),
            "node_id": string(), "text": string(), "speaker": string(), "addressees": addressees(),
            "opener": {"type": "boolean"}, "from": {"type": "integer"}, "to": {"type": "integer"},
            "index": {"type": "integer"}, "status": strings(&["in_progress", "final"]), "title": string()
        }},
        "PatchDraftRequest": {"type": "object", "required": ["version", "commands"], "properties": {
            "version": {"type": "integer"}, "commands": {"type": "array", "items": {"$ref": "#/types/DraftCommand"}}
        }},
        "RefinementConstraints": {"type": "object", "required": ["length", "style", "temperament"], "properties": {
            "length": names(Length::ALL.iter().map(|v| v.as_str()).collect()),
            "style": names(Style::ALL.iter().map(|v| v.as_str()).collect()),
            "temperament": names(Temperament::ALL.iter().map(|v| v.as_str()).collect())
        }},
        "RefinementSuggestion": {"type": "object", "properties": {
            "suggestion_id": string(), "turn_index": {"type": "integer"}, "original_text": string(),
            "suggested_text": string(), "constraints": {"$ref": "#/types/RefinementConstraints"},
            "decision": strings(&["pending", "accepted", "modified", "rejected"]), "final_text": string(),
            "latency_ms": {"type": "integer"}, "token_count": {"type": "integer"},
            "requested_at": {"type": "string", "format": "date-time"}, "decided_at": {"type": "string", "format": "date-time"}
        }},
        "DecisionRequest": {"type": "object", "required": ["suggestion_id", "decision"], "properties": {
            "suggestion_id": string(), "decision": strings(&["accepted", "modified", "rejected"]), "edited_text": string()
        }},
        "ProfileRefineRequest": {"type": "object", "properties": {"draft_id": string()}},
        "LintFinding": {"type": "object", "required": ["rule", "severity", "message"], "properties": {
            "rule": strings(&["R1", "R2", "R3", "R4"]), "severity": strings(&["warning"]),
            "message": string(), "locus": {"type": "integer"}
        }},
        "ExportedConversation": {"type": "object", "properties": {
            "draft_id": string(), "source_tree_id": string(), "title": string(),
            "status": strings(&["in_progress", "final"]),
            "turns": {"type": "array", "items": {"$ref": "#/types/Turn"}},
            "users": {"type": "array", "items": {"$ref": "#/types/SpeakerProfile"}}
        }},
        "SessionMetrics": {"type": "object", "properties": {
            "v_turn": {"type": ["number", "null"], "description": "turns per minute"},
            "v_tokens": {"type": ["number", "null"], "description": "tokens per second"},
            "sessions": {"type": "array"}
        }}
    })
}

pub fn schema() -> Value {
    json!({ "headers": {"Idempotency-Key": "optional on every mutating request"}, "routes": routes(), "types": types() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_ref_resolves() {
        let doc = schema();
        let text = doc.to_string();
        let types = doc["types"].as_object().unwrap();
        for piece in text.split("\"#/types/").skip(1) {
            let name = &piece[..piece.find('"').unwrap()];
            assert!(types.contains_key(name), "{name}");
        }
    }
}
