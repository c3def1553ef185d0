//! Request handling independent of the HTTP framework.
//!
//! Every operation takes raw request bytes and returns a [`Reply`] holding the
//! status code and the exact response body, which is what the idempotency
//! cache replays.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use threadsmith_core::clock::Clock;
use threadsmith_core::draft::{
    create_draft, export_conversation, lint_draft, DraftCommand, DraftConversation, LintConfig,
};
use threadsmith_core::eval::{token_speed, turn_speed, SessionKind, SessionRecord};
use threadsmith_core::llm::refine::{
    apply_decision, normalize_tree, refine_message, refine_profile, select_profile_evidence, Decision,
};
use threadsmith_core::llm::{ChatTransport, RefinementConstraints};
use threadsmith_core::tree::{parse_discussion, parse_discussion_with_warnings, ReplyTree};

use crate::error::{tree_error_detail, ApiError};
use crate::store::{FileEntry, FileKind, FileStore, StoreError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(status: u16, value: &impl Serialize) -> Self {
        Reply { status, body: serde_json::to_vec(value).expect("response serialization is infallible") }
    }

    pub fn raw(status: u16, body: Vec<u8>) -> Self {
        Reply { status, body }
    }

    pub fn from_error(e: &ApiError) -> Self {
        Reply { status: e.status(), body: e.to_bytes() }
    }
}

pub type ApiResult = Result<Reply, ApiError>;

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Exists(_) => ApiError::conflict(e.to_string()),
            StoreError::Missing(_) | StoreError::InvalidId(_) => ApiError::not_found(e.to_string()),
            StoreError::Io(_) => ApiError::internal(e.to_string()),
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct UploadRequest {
    pub kind: FileKind,
    #[serde(default)]
    pub name: Option<String>,
    /// The document itself, or its text as a string.
    pub content: Value,
}

#[derive(Debug, Deserialize)]
pub struct CreateDraftRequest {
    pub tree_id: String,
    #[serde(default)]
    pub title: String,
}

#[derive(Debug, Deserialize)]
pub struct PatchDraftRequest {
    pub version: u64,
    pub commands: Vec<DraftCommand>,
}

#[derive(Debug, Deserialize)]
pub struct DecisionRequest {
    pub suggestion_id: String,
    pub decision: Decision,
    #[serde(default)]
    pub edited_text: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
pub struct ProfileRefineRequest {
    #[serde(default)]
    pub draft_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub v_turn: Option<f64>,
    pub v_tokens: Option<f64>,
    pub sessions: Vec<SessionRecord>,
}

fn parse_body<'a, T: Deserialize<'a>>(body: &'a [u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

pub struct Service {
    store: FileStore,
    transport: Arc<dyn ChatTransport>,
    clock: Arc<dyn Clock>,
    lint: LintConfig,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    replies: Mutex<HashMap<String, Reply>>,
}

impl Service {
    pub fn new(store: FileStore, transport: Arc<dyn ChatTransport>, clock: Arc<dyn Clock>) -> Self {
        Service {
            store,
            transport,
            clock,
            lint: LintConfig::default(),
            locks: Mutex::new(HashMap::new()),
            replies: Mutex::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &FileStore {
        &self.store
    }

    fn lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.locks.lock().unwrap().entry(key.to_string()).or_default().clone()
    }

    /// Runs `f` once per `(route, key)`; later calls get the first reply back.
    ///
    /// Server errors are not remembered, so a retry after one runs again.
    pub fn idempotent(&self, route: &str, key: &str, f: impl FnOnce(&Service) -> ApiResult) -> Reply {
        let cache_key = format!("{route}\u{0}{key}");
        let guard = self.lock(&format!("idem:{cache_key}"));
        let _held = guard.lock().unwrap();
        if let Some(r) = self.replies.lock().unwrap().get(&cache_key) {
            return r.clone();
        }
        let reply = f(self).unwrap_or_else(|e| Reply::from_error(&e));
        if reply.status < 500 {
            self.replies.lock().unwrap().insert(cache_key, reply.clone());
        }
        reply
    }

    // ---- loading ----

    fn load_tree(&self, id: &str) -> Result<(FileEntry, ReplyTree), ApiError> {
        let (entry, bytes) = self.store.read(id)?;
        if entry.kind != FileKind::Discussion {
            return Err(ApiError::not_found(format!("{id} is not a discussion")));
        }
        let tree = parse_discussion(&bytes).map_err(|e| ApiError::internal(format!("stored tree {id}: {e}")))?;
        Ok((entry, tree))
    }

    fn load_draft(&self, id: &str) -> Result<(FileEntry, DraftConversation), ApiError> {
        let (entry, bytes) = self.store.read(id)?;
        if entry.kind != FileKind::Draft {
            return Err(ApiError::not_found(format!("{id} is not a draft")));
        }
        let draft =
            DraftConversation::from_json(&bytes).map_err(|e| ApiError::internal(format!("stored draft {id}: {e}")))?;
        Ok((entry, draft))
    }

    fn load_draft_and_tree(&self, id: &str) -> Result<(DraftConversation, ReplyTree), ApiError> {
        let (_, draft) = self.load_draft(id)?;
        let (_, tree) = self
            .load_tree(&draft.source_tree_id)
            .map_err(|e| ApiError::internal(format!("source tree of draft {id}: {}", e.message)))?;
        Ok((draft, tree))
    }

    fn save_draft(&self, draft: &mut DraftConversation) -> Result<(), ApiError> {
        draft.version += 1;
        self.store.update(&draft.draft_id, &draft.to_json(), draft.version)?;
        Ok(())
    }

    fn store_tree(&self, tree: &ReplyTree, name: &str) -> Result<FileEntry, ApiError> {
        let bytes = tree.to_json();
        if self.store.contains(&tree.tree_id) {
            let (entry, _) = self.load_tree(&tree.tree_id)?;
            Ok(self.store.update(&tree.tree_id, &bytes, entry.version + 1)?)
        } else {
            Ok(self.store.create(FileKind::Discussion, &tree.tree_id, name, &bytes, 0, self.clock.now())?)
        }
    }

    // ---- files ----

    /// `POST /api/files`
    pub fn upload(&self, body: &[u8]) -> ApiResult {
        let req: UploadRequest = parse_body(body)?;
        let bytes = match &req.content {
            Value::String(s) => s.clone().into_bytes(),
            other => serde_json::to_vec(other).expect("value serializes"),
        };
        match req.kind {
            FileKind::Discussion => self.upload_discussion(req.name, &bytes),
            FileKind::Draft => self.upload_draft(req.name, &bytes),
        }
    }

    fn upload_discussion(&self, name: Option<String>, bytes: &[u8]) -> ApiResult {
        let (tree, _warnings) = match parse_discussion_with_warnings(bytes) {
            Ok(ok) => ok,
            Err(e) => {
                let raw_id = uuid::Uuid::new_v4().to_string();
                self.store.put_raw(&raw_id, bytes)?;
                let mut detail = tree_error_detail(&e);
                detail["raw_id"] = json!(raw_id);
                detail["normalize_url"] = json!(format!("/api/trees/{raw_id}/normalize"));
                return Err(ApiError::bad_request(e.to_string()).with_detail(detail));
            }
        };
        if !crate::store::valid_id(&tree.tree_id) {
            return Err(ApiError::bad_request(format!("tree id {:?} is not usable as a file id", tree.tree_id)));
        }
        let _guard = self.lock(&tree.tree_id);
        let _held = _guard.lock().unwrap();
        let tree = tree.ensure_users();
        let name = name.unwrap_or_else(|| tree.topic.clone().unwrap_or_else(|| tree.tree_id.clone()));
        let entry =
            self.store.create(FileKind::Discussion, &tree.tree_id, &name, &tree.to_json(), 0, self.clock.now())?;
        Ok(Reply::json(201, &entry))
    }

    fn upload_draft(&self, name: Option<String>, bytes: &[u8]) -> ApiResult {
        let draft = DraftConversation::from_json(bytes)?;
        if !crate::store::valid_id(&draft.draft_id) {
            return Err(ApiError::bad_request(format!("draft id {:?} is not usable as a file id", draft.draft_id)));
        }
        let (_, tree) = self
            .load_tree(&draft.source_tree_id)
            .map_err(|_| ApiError::bad_request(format!("draft refers to unknown tree {}", draft.source_tree_id)))?;
        draft.validate(&tree)?;
        let name = name.unwrap_or_else(|| draft.title.clone());
        let entry = self.store.create(
            FileKind::Draft,
            &draft.draft_id,
            &name,
            &draft.to_json(),
            draft.version,
            self.clock.now(),
        )?;
        Ok(Reply::json(201, &entry))
    }

    /// `GET /api/files`
    pub fn list_files(&self) -> ApiResult {
        Ok(Reply::json(200, &self.store.list()?))
    }

    /// `GET /api/files/{id}`
    pub fn get_file(&self, id: &str) -> ApiResult {
        let (entry, bytes) = self.store.read(id)?;
        let content: Value = serde_json::from_slice(&bytes).map_err(|e| ApiError::internal(e.to_string()))?;
        Ok(Reply::json(200, &json!({ "entry": entry, "content": content })))
    }

    // ---- trees ----

    /// `GET /api/trees/{id}`
    pub fn get_tree(&self, id: &str) -> ApiResult {
        let (_, tree) = self.load_tree(id)?;
        Ok(Reply::raw(200, tree.to_json()))
    }

    /// `GET /api/trees/{id}/nodes/{nid}/focus`
    pub fn focus(&self, id: &str, node_id: &str) -> ApiResult {
        let (_, tree) = self.load_tree(id)?;
        let view = tree.focused_view(node_id)?;
        Ok(Reply::json(200, &view))
    }

    /// `GET /api/trees/{id}/nodes/{nid}/subtree`
    pub fn subtree(&self, id: &str, node_id: &str) -> ApiResult {
        let (_, tree) = self.load_tree(id)?;
        Ok(Reply::raw(200, tree.subtree(node_id)?.to_json()))
    }

    /// `POST /api/trees/{id}/normalize`
    ///
    /// `id` is either a rejected upload or a stored tree.
    pub fn normalize(&self, id: &str) -> ApiResult {
        let raw = match self.store.read_raw(id) {
            Ok(bytes) => bytes,
            Err(StoreError::Missing(_)) => self.load_tree(id)?.1.to_json(),
            Err(e) => return Err(e.into()),
        };
        let tree = normalize_tree(self.transport.as_ref(), &raw)?;
        if !crate::store::valid_id(&tree.tree_id) {
            return Err(ApiError::bad_request(format!("tree id {:?} is not usable as a file id", tree.tree_id)));
        }
        let guard = self.lock(&tree.tree_id);
        let _held = guard.lock().unwrap();
        let name = tree.topic.clone().unwrap_or_else(|| tree.tree_id.clone());
        let entry = self.store_tree(&tree, &name)?;
        Ok(Reply::json(200, &entry))
    }

    // ---- drafts ----

    /// `POST /api/drafts`
    pub fn create_draft(&self, body: &[u8]) -> ApiResult {
        let req: CreateDraftRequest = parse_body(body)?;
        let (_, tree) = self.load_tree(&req.tree_id)?;
        let draft = create_draft(&tree, &req.tree_id, &req.title, self.clock.as_ref())?;
        self.store.create(
            FileKind::Draft,
            &draft.draft_id,
            &draft.title,
            &draft.to_json(),
            draft.version,
            self.clock.now(),
        )?;
        Ok(Reply::raw(201, draft.to_json()))
    }

    /// `GET /api/drafts/{id}`
    pub fn get_draft(&self, id: &str) -> ApiResult {
        let (_, draft) = self.load_draft(id)?;
        Ok(Reply::raw(200, draft.to_json()))
    }

    /// `PATCH /api/drafts/{id}`: applies the whole command list or none of it.
    pub fn patch_draft(&self, id: &str, body: &[u8]) -> ApiResult {
        let req: PatchDraftRequest = parse_body(body)?;
        let guard = self.lock(id);
        let _held = guard.lock().unwrap();
        let (mut draft, tree) = self.load_draft_and_tree(id)?;
        if req.version != draft.version {
            return Err(ApiError::conflict(format!(
                "draft {id} is at version {}, request was based on {}",
                draft.version, req.version
            ))
            .with_detail(json!({ "current_version": draft.version })));
        }
        draft.apply_all(&tree, req.commands, self.clock.as_ref())?;
        self.save_draft(&mut draft)?;
        Ok(Reply::raw(200, draft.to_json()))
    }

    fn turn_index(draft: &DraftConversation, index: &str) -> Result<usize, ApiError> {
        index
            .parse::<usize>()
            .ok()
            .filter(|i| *i < draft.turns.len())
            .ok_or_else(|| ApiError::not_found(format!("draft {} has no turn {index}", draft.draft_id)))
    }

    /// `DELETE /api/drafts/{id}/turns/{i}`
    pub fn delete_turn(&self, id: &str, index: &str) -> ApiResult {
        let guard = self.lock(id);
        let _held = guard.lock().unwrap();
        let (_, mut draft) = self.load_draft(id)?;
        let i = Self::turn_index(&draft, index)?;
        draft.remove_turn(i)?;
        self.save_draft(&mut draft)?;
        Ok(Reply::raw(200, draft.to_json()))
    }

    /// `POST /api/drafts/{id}/turns/{i}/refine`
    pub fn refine_turn(&self, id: &str, index: &str, body: &[u8]) -> ApiResult {
        let constraints: RefinementConstraints = parse_body(body)?;
        let guard = self.lock(id);
        let _held = guard.lock().unwrap();
        let (mut draft, tree) = self.load_draft_and_tree(id)?;
        let i = Self::turn_index(&draft, index)?;
        let suggestion = refine_message(self.transport.as_ref(), &draft, &tree, i, constraints, self.clock.as_ref())?;
        draft.refinements.push(suggestion.clone());
        self.save_draft(&mut draft)?;
        Ok(Reply::json(200, &suggestion))
    }

    /// `POST /api/drafts/{id}/turns/{i}/decision`
    pub fn decide(&self, id: &str, index: &str, body: &[u8]) -> ApiResult {
        let req: DecisionRequest = parse_body(body)?;
        let guard = self.lock(id);
        let _held = guard.lock().unwrap();
        let (_, mut draft) = self.load_draft(id)?;
        let i = Self::turn_index(&draft, index)?;
        let pos = draft
            .refinements
            .iter()
            .position(|s| s.suggestion_id == req.suggestion_id && s.turn_index == i)
            .ok_or_else(|| ApiError::not_found(format!("no suggestion {} for turn {i}", req.suggestion_id)))?;
        let mut suggestion = draft.refinements[pos].clone();
        apply_decision(&mut draft, &mut suggestion, req.decision, req.edited_text.as_deref(), self.clock.as_ref())?;
        draft.refinements[pos] = suggestion;
        self.save_draft(&mut draft)?;
        Ok(Reply::raw(200, draft.to_json()))
    }

    /// `POST /api/speakers/{tree_id}/{speaker_id}/profile/refine`
    pub fn refine_speaker(&self, tree_id: &str, speaker_id: &str, body: &[u8]) -> ApiResult {
        let req: ProfileRefineRequest =
            if body.iter().all(u8::is_ascii_whitespace) { ProfileRefineRequest::default() } else { parse_body(body)? };
        let guard = self.lock(tree_id);
        let _held = guard.lock().unwrap();
        let (entry, mut tree) = self.load_tree(tree_id)?;
        let profile = tree
            .users
            .get(speaker_id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("tree {tree_id} has no speaker {speaker_id}")))?;
        let draft = match &req.draft_id {
            Some(d) => {
                let (_, draft) = self.load_draft(d)?;
                if draft.source_tree_id != tree_id {
                    return Err(ApiError::bad_request(format!("draft {d} belongs to another tree")));
                }
                draft
            }
            None => create_draft(&tree, tree_id, "", self.clock.as_ref())?,
        };
        let evidence = select_profile_evidence(&draft, &tree, speaker_id)?;
        let refined = refine_profile(self.transport.as_ref(), &profile, &evidence)?;
        tree.users.insert(speaker_id.to_string(), refined.clone());
        self.store.update(tree_id, &tree.to_json(), entry.version + 1)?;
        Ok(Reply::json(200, &refined))
    }

    /// `GET /api/drafts/{id}/lint`
    pub fn lint(&self, id: &str) -> ApiResult {
        let (draft, tree) = self.load_draft_and_tree(id)?;
        Ok(Reply::json(200, &lint_draft(&draft, &tree, &self.lint)))
    }

    /// `GET /api/drafts/{id}/export`
    pub fn export(&self, id: &str, force: bool) -> ApiResult {
        let (draft, tree) = self.load_draft_and_tree(id)?;
        Ok(Reply::raw(200, export_conversation(&draft, &tree, force)?))
    }

    // ---- metrics ----

    fn session_records(draft: &DraftConversation) -> Vec<SessionRecord> {
        let mut out = Vec::new();
        if let (Some(start), Some(last)) = (draft.created_at, draft.timing.last()) {
            let secs = (last.turn_added_at - start).num_milliseconds() as f64 / 1000.0;
            if secs > 0.0 {
                out.push(SessionRecord {
                    annotator_id: draft.draft_id.clone(),
                    kind: SessionKind::Selection,
                    turns_selected: draft.timing.len() as u64,
                    duration: secs,
                    final_token_counts: vec![],
                });
            }
        }
        let decided: Vec<_> = draft
            .refinements
            .iter()
            .filter(|s| matches!(s.decision, Decision::Accepted | Decision::Modified))
            .filter_map(|s| s.decided_at.map(|d| (s, (d - s.requested_at).num_milliseconds() as f64 / 1000.0)))
            .collect();
        let secs: f64 = decided.iter().map(|(_, t)| t).sum();
        if secs > 0.0 {
            out.push(SessionRecord {
                annotator_id: draft.draft_id.clone(),
                kind: SessionKind::Refinement,
                turns_selected: 0,
                duration: secs,
                final_token_counts: decided.iter().map(|(s, _)| s.token_count as u64).collect(),
            });
        }
        out
    }

    /// `GET /api/metrics/session`, over one draft or all of them.
    pub fn session_metrics(&self, draft_id: Option<&str>) -> ApiResult {
        let drafts: Vec<DraftConversation> = match draft_id {
            Some(id) => vec![self.load_draft(id)?.1],
            None => self
                .store
                .list()?
                .into_iter()
                .filter(|e| e.kind == FileKind::Draft)
                .map(|e| self.load_draft(&e.file_id).map(|(_, d)| d))
                .collect::<Result<_, _>>()?,
        };
        let sessions: Vec<SessionRecord> = drafts.iter().flat_map(Self::session_records).collect();
        let metrics =
            SessionMetrics { v_turn: turn_speed(&sessions).ok(), v_tokens: token_speed(&sessions).ok(), sessions };
        Ok(Reply::json(200, &metrics))
    }

    /// `GET /api/schema`
    pub fn schema(&self) -> ApiResult {
        Ok(Reply::json(200, &crate::schema::schema()))
    }
}
