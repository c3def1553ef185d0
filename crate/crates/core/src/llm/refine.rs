//! Speaker profiling, message refinement and tree normalization.

use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::GenerationConfig;
use super::constraints::RefinementConstraints;
use super::prompts::{self, Prompt};
use super::transport::{ChatTransport, TransportError};
use crate::clock::Clock;
use crate::draft::{DraftConversation, DraftError, EditEntry, EditKind, Provenance};
use crate::tree::{parse_discussion, ReplyTree, SpeakerProfile, TreeError};

/// Draft turns needed before profiling uses the conversation instead of the tree.
pub const DRAFT_EVIDENCE_THRESHOLD: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("model returned an empty completion")]
    EmptyCompletion,
    #[error("speaker {0} has no messages to use as evidence")]
    NoEvidence(String),
    #[error("unknown speaker: {0}")]
    UnknownSpeaker(String),
    #[error("model output is still not a valid discussion file: {0}")]
    UnrepairableStructure(TreeError),
    #[error("a modified decision needs the edited text")]
    MissingEditedText,
    #[error("suggestion was already decided")]
    NotPending,
    #[error("turn {0} changed since the suggestion was made")]
    StaleSuggestion(usize),
    #[error(transparent)]
    Draft(#[from] DraftError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Pending,
    Accepted,
    Modified,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementSuggestion {
    pub suggestion_id: String,
    pub turn_index: usize,
    pub original_text: String,
    pub suggested_text: String,
    pub constraints: RefinementConstraints,
    pub decision: Decision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_text: Option<String>,
    /// Wall time of the transport call.
    pub latency_ms: u64,
    /// Whitespace-delimited tokens of the final text; zero until decided.
    pub token_count: usize,
    pub requested_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_at: Option<DateTime<Utc>>,
}

pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

fn call(transport: &dyn ChatTransport, preset: &GenerationConfig, prompt: &Prompt) -> Result<String, LlmError> {
    let text = transport.complete(preset, &prompt.system, &prompt.user)?;
    let text = text.trim();
    if text.is_empty() {
        return Err(LlmError::EmptyCompletion);
    }
    Ok(text.to_string())
}

/// Messages used as evidence when profiling `speaker_id`.
///
/// With at least three turns in the draft those turns are used, in draft order;
/// otherwise every node the speaker wrote in the tree, in pre-order.
pub fn select_profile_evidence(
    draft: &DraftConversation,
    tree: &ReplyTree,
    speaker_id: &str,
) -> Result<Vec<String>, LlmError> {
    if !tree.users.contains_key(speaker_id) {
        return Err(LlmError::UnknownSpeaker(speaker_id.to_string()));
    }
    let from_draft: Vec<String> =
        draft.turns.iter().filter(|t| t.speaker_id == speaker_id).map(|t| t.text.clone()).collect();
    if from_draft.len() >= DRAFT_EVIDENCE_THRESHOLD {
        return Ok(from_draft);
    }
    let from_tree: Vec<String> =
        tree.preorder().filter(|n| n.author_id == speaker_id).map(|n| n.text.clone()).collect();
    match (from_tree.is_empty(), from_draft.is_empty()) {
        (false, _) => Ok(from_tree),
        // free-text speakers have nothing in the tree; a short draft is all there is
        (true, false) => Ok(from_draft),
        (true, true) => Err(LlmError::NoEvidence(speaker_id.to_string())),
    }
}

/// Asks the model for an updated description; the old one is kept for audit.
pub fn refine_profile(
    transport: &dyn ChatTransport,
    profile: &SpeakerProfile,
    evidence: &[String],
) -> Result<SpeakerProfile, LlmError> {
    if evidence.is_empty() {
        return Err(LlmError::NoEvidence(profile.speaker_id.clone()));
    }
    let prompt = prompts::build_profile_prompt(profile, evidence);
    let description = call(transport, &GenerationConfig::PROFILE, &prompt)?;
    Ok(SpeakerProfile { previous_description: Some(profile.description.clone()), description, ..profile.clone() })
}

/// Requests a rewrite of one turn. The suggestion stays pending until a human decides.
pub fn refine_message(
    transport: &dyn ChatTransport,
    draft: &DraftConversation,
    tree: &ReplyTree,
    turn_index: usize,
    constraints: RefinementConstraints,
    clock: &dyn Clock,
) -> Result<RefinementSuggestion, LlmError> {
    let turn =
        draft.turns.get(turn_index).ok_or(DraftError::IndexOutOfRange { index: turn_index, len: draft.turns.len() })?;
    let profile = tree.users.get(&turn.speaker_id).ok_or_else(|| LlmError::UnknownSpeaker(turn.speaker_id.clone()))?;
    let prompt = prompts::build_refinement_prompt(&turn.text, &draft.turns[..turn_index], profile, &constraints);
    let requested_at = clock.now();
    let started = Instant::now();
    let suggested_text = call(transport, &GenerationConfig::REFINE, &prompt)?;
    let latency_ms = started.elapsed().as_millis() as u64;
    Ok(RefinementSuggestion {
        suggestion_id: uuid::Uuid::new_v4().to_string(),
        turn_index,
        original_text: turn.text.clone(),
        suggested_text,
        constraints,
        decision: Decision::Pending,
        final_text: None,
        latency_ms,
        token_count: 0,
        requested_at,
        decided_at: None,
    })
}

/// Records the annotator's verdict on a suggestion and applies it to the draft.
///
/// Rejecting leaves the draft untouched.
pub fn apply_decision(
    draft: &mut DraftConversation,
    suggestion: &mut RefinementSuggestion,
    decision: Decision,
    edited_text: Option<&str>,
    clock: &dyn Clock,
) -> Result<(), LlmError> {
    if suggestion.decision != Decision::Pending {
        return Err(LlmError::NotPending);
    }
    let index = suggestion.turn_index;
    let len = draft.turns.len();
    let turn = draft.turns.get(index).ok_or(DraftError::IndexOutOfRange { index, len })?;
    if turn.text != suggestion.original_text {
        return Err(LlmError::StaleSuggestion(index));
    }
    let (final_text, provenance, kind) = match decision {
        Decision::Pending => return Err(LlmError::NotPending),
        Decision::Rejected => {
            suggestion.decision = Decision::Rejected;
            suggestion.decided_at = Some(clock.now());
            return Ok(());
        }
        Decision::Accepted => (suggestion.suggested_text.clone(), Provenance::LlmAccepted, EditKind::LlmAccepted),
        Decision::Modified => {
            let text = edited_text.filter(|t| !t.trim().is_empty()).ok_or(LlmError::MissingEditedText)?;
            (text.to_string(), Provenance::LlmModified, EditKind::LlmModified)
        }
    };
    let now = clock.now();
    let turn = &mut draft.turns[index];
    turn.text = final_text.clone();
    turn.provenance = provenance;
    turn.edit_log.push(EditEntry { timestamp: now, kind });
    suggestion.token_count = whitespace_tokens(&final_text);
    suggestion.final_text = Some(final_text);
    suggestion.decision = decision;
    suggestion.decided_at = Some(now);
    Ok(())
}

/// Removes a surrounding Markdown code fence, if any.
pub fn strip_code_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let body = match rest.find('\n') {
        Some(nl) => &rest[nl + 1..],
        None => rest,
    };
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

/// Sends a possibly broken dump to the model and parses the repaired document.
///
/// One retry is made, with the parse error appended to the instructions.
pub fn normalize_tree(transport: &dyn ChatTransport, raw: &[u8]) -> Result<ReplyTree, LlmError> {
    let user = String::from_utf8_lossy(raw).into_owned();
    let mut last_error: Option<TreeError> = None;
    for _ in 0..2 {
        let system = prompts::normalize_system(last_error.as_ref().map(|e| e.to_string()).as_deref());
        let completion = transport.complete(&GenerationConfig::NORMALIZE, &system, &user)?;
        match parse_discussion(strip_code_fence(&completion).as_bytes()) {
            Ok(tree) => return Ok(tree.ensure_users()),
            Err(e) => last_error = Some(e),
        }
    }
    Err(LlmError::UnrepairableStructure(last_error.unwrap_or(TreeError::MalformedInput("no completion".into()))))
}
