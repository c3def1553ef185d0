//! Linearized conversations built by hand from a reply tree.
//!
//! A [`DraftConversation`] is an ordered list of [`Turn`]s. Each turn either
//! quotes a tree node or carries free text, names its speaker and addressees,
//! and remembers how its text came to be ([`Provenance`]). Edits go through
//! methods that keep indices dense and validate speakers against the tree.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::llm::refine::RefinementSuggestion;
use crate::tree::{ReplyTree, SpeakerProfile};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DraftError {
    #[error("unknown tree: {0}")]
    UnknownTree(String),
    #[error("draft belongs to tree {expected}, got {actual}")]
    TreeMismatch { expected: String, actual: String },
    #[error("unknown node: {0}")]
    UnknownNode(String),
    #[error("unknown speaker: {0}")]
    UnknownSpeaker(String),
    #[error("free-text turns need an explicit speaker")]
    MissingSpeaker,
    #[error("turn text must not be empty")]
    EmptyText,
    #[error("turn index {index} out of range for {len} turns")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("addressee set must not be empty")]
    EmptyAddresseeSet,
    #[error("speaker {0} cannot address themself")]
    SelfAddressed(String),
    #[error("node {0} is already used by another turn")]
    DuplicateSource(String),
    #[error("draft is not final; force the export to proceed")]
    NotFinal,
    #[error("malformed draft: {0}")]
    Malformed(String),
}

/// Who a turn is directed at.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "AddresseesRepr", into = "AddresseesRepr")]
pub enum Addressees {
    Everyone,
    Speakers(BTreeSet<String>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum AddresseesRepr {
    Tag(String),
    List(Vec<String>),
}

impl TryFrom<AddresseesRepr> for Addressees {
    type Error = String;

    fn try_from(repr: AddresseesRepr) -> Result<Self, Self::Error> {
        match repr {
            AddresseesRepr::Tag(t) if t == "everyone" => Ok(Addressees::Everyone),
            AddresseesRepr::Tag(t) => Err(format!("expected \"everyone\" or a list, got {t:?}")),
            AddresseesRepr::List(ids) => Ok(Addressees::Speakers(ids.into_iter().collect())),
        }
    }
}

impl From<Addressees> for AddresseesRepr {
    fn from(a: Addressees) -> Self {
        match a {
            Addressees::Everyone => AddresseesRepr::Tag("everyone".into()),
            Addressees::Speakers(ids) => AddresseesRepr::List(ids.into_iter().collect()),
        }
    }
}

impl Addressees {
    pub fn one(id: impl Into<String>) -> Self {
        Addressees::Speakers(BTreeSet::from([id.into()]))
    }

    pub fn of<I, S>(ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Addressees::Speakers(ids.into_iter().map(Into::into).collect())
    }

    pub fn is_everyone(&self) -> bool {
        matches!(self, Addressees::Everyone)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    HumanEdited,
    LlmAccepted,
    LlmModified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    TextEdit,
    Addressees,
    Reorder,
    LlmAccepted,
    LlmModified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditEntry {
    pub timestamp: DateTime<Utc>,
    pub kind: EditKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_node_id: Option<String>,
    #[serde(rename = "speaker")]
    pub speaker_id: String,
    pub addressees: Addressees,
    pub text: String,
    pub provenance: Provenance,
    /// Marks a free-standing opening message that does not quote the tree root.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub opener: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edit_log: Vec<EditEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DraftStatus {
    InProgress,
    Final,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub turn_added_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftConversation {
    pub draft_id: String,
    pub source_tree_id: String,
    pub title: String,
    pub status: DraftStatus,
    #[serde(default)]
    pub version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_at: Option<DateTime<Utc>>,
    pub turns: Vec<Turn>,
    #[serde(default)]
    pub timing: Vec<TimingEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refinements: Vec<RefinementSuggestion>,
}

/// Where the text of a new turn comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TurnSource {
    Node(String),
    Text(String),
}

/// Looks trees up by id.
pub trait TreeCatalog {
    fn tree(&self, tree_id: &str) -> Option<ReplyTree>;
}

impl TreeCatalog for BTreeMap<String, ReplyTree> {
    fn tree(&self, tree_id: &str) -> Option<ReplyTree> {
        self.get(tree_id).cloned()
    }
}

impl TreeCatalog for ReplyTree {
    fn tree(&self, tree_id: &str) -> Option<ReplyTree> {
        (self.tree_id == tree_id).then(|| self.clone())
    }
}

pub fn create_draft(
    catalog: &impl TreeCatalog,
    tree_id: &str,
    title: &str,
    clock: &dyn Clock,
) -> Result<DraftConversation, DraftError> {
    if catalog.tree(tree_id).is_none() {
        return Err(DraftError::UnknownTree(tree_id.to_string()));
    }
    Ok(DraftConversation {
        draft_id: uuid::Uuid::new_v4().to_string(),
        source_tree_id: tree_id.to_string(),
        title: title.to_string(),
        status: DraftStatus::InProgress,
        version: 0,
        created_at: Some(clock.now()),
        turns: Vec::new(),
        timing: Vec::new(),
        refinements: Vec::new(),
    })
}

/// One step of a draft edit session, as sent by clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum DraftCommand {
    Append {
        #[serde(default)]
        node_id: Option<String>,
        #[serde(default)]
        text: Option<String>,
        #[serde(default)]
        speaker: Option<String>,
        #[serde(default)]
        addressees: Option<Addressees>,
        #[serde(default)]
        opener: bool,
    },
    Reorder {
        from: usize,
        to: usize,
    },
    SetAddressees {
        index: usize,
        addressees: Addressees,
    },
    EditText {
        index: usize,
        text: String,
    },
    Remove {
        index: usize,
    },
    SetOpener {
        index: usize,
        opener: bool,
    },
    SetStatus {
        status: DraftStatus,
    },
    SetTitle {
        title: String,
    },
}

fn check_speaker(tree: &ReplyTree, id: &str) -> Result<(), DraftError> {
    if tree.users.contains_key(id) {
        Ok(())
    } else {
        Err(DraftError::UnknownSpeaker(id.to_string()))
    }
}

fn check_addressees(tree: &ReplyTree, speaker: &str, addressees: &Addressees) -> Result<(), DraftError> {
    match addressees {
        Addressees::Everyone => Ok(()),
        Addressees::Speakers(ids) => {
            if ids.is_empty() {
                return Err(DraftError::EmptyAddresseeSet);
            }
            if ids.contains(speaker) {
                return Err(DraftError::SelfAddressed(speaker.to_string()));
            }
            ids.iter().try_for_each(|id| check_speaker(tree, id))
        }
    }
}

/// Author of the closest ancestor written by someone other than `speaker`.
fn default_addressees(tree: &ReplyTree, node_id: &str, speaker: &str) -> Result<Addressees, DraftError> {
    let chain = tree.ancestry(node_id).map_err(|_| DraftError::UnknownNode(node_id.to_string()))?;
    Ok(chain
        .iter()
        .rev()
        .skip(1)
        .find(|n| n.author_id != speaker)
        .map(|n| Addressees::one(n.author_id.clone()))
        .unwrap_or(Addressees::Everyone))
}

impl DraftConversation {
    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    fn check_index(&self, index: usize) -> Result<(), DraftError> {
        if index < self.turns.len() {
            Ok(())
        } else {
            Err(DraftError::IndexOutOfRange { index, len: self.turns.len() })
        }
    }

    fn reindex(&mut self) {
        for (i, t) in self.turns.iter_mut().enumerate() {
            t.index = i;
        }
    }

    fn check_tree(&self, tree: &ReplyTree) -> Result<(), DraftError> {
        if tree.tree_id == self.source_tree_id {
            Ok(())
        } else {
            Err(DraftError::TreeMismatch { expected: self.source_tree_id.clone(), actual: tree.tree_id.clone() })
        }
    }

    /// Appends a turn and returns its index.
    ///
    /// Node-sourced turns default to the node's author as speaker and to the
    /// nearest ancestor written by someone else as addressee (everyone when
    /// there is none, as for the root).
    pub fn append_turn(
        &mut self,
        tree: &ReplyTree,
        source: TurnSource,
        speaker: Option<&str>,
        addressees: Option<Addressees>,
        clock: &dyn Clock,
    ) -> Result<usize, DraftError> {
        self.check_tree(tree)?;
        let (source_node_id, speaker, text, provenance) = match source {
            TurnSource::Node(node_id) => {
                let node = tree.nodes.get(&node_id).ok_or_else(|| DraftError::UnknownNode(node_id.clone()))?;
                if self.turns.iter().any(|t| t.source_node_id.as_deref() == Some(node_id.as_str())) {
                    return Err(DraftError::DuplicateSource(node_id));
                }
                let speaker = speaker.unwrap_or(&node.author_id).to_string();
                (Some(node_id), speaker, node.text.clone(), Provenance::Original)
            }
            TurnSource::Text(text) => {
                let speaker = speaker.ok_or(DraftError::MissingSpeaker)?.to_string();
                (None, speaker, text, Provenance::HumanEdited)
            }
        };
        check_speaker(tree, &speaker)?;
        if text.trim().is_empty() {
            return Err(DraftError::EmptyText);
        }
        let addressees = match (addressees, &source_node_id) {
            (Some(a), _) => a,
            (None, Some(node_id)) => default_addressees(tree, node_id, &speaker)?,
            (None, None) => Addressees::Everyone,
        };
        check_addressees(tree, &speaker, &addressees)?;

        let now = clock.now();
        let index = self.turns.len();
        self.turns.push(Turn {
            index,
            source_node_id,
            speaker_id: speaker,
            addressees,
            text,
            provenance,
            opener: false,
            edit_log: Vec::new(),
        });
        self.timing.push(TimingEntry { turn_added_at: now });
        Ok(index)
    }

    /// Moves the turn at `from` so it ends up at position `to`.
    pub fn reorder_turn(&mut self, from: usize, to: usize, clock: &dyn Clock) -> Result<(), DraftError> {
        self.check_index(from)?;
        self.check_index(to)?;
        if from == to {
            return Ok(());
        }
        let mut turn = self.turns.remove(from);
        turn.edit_log.push(EditEntry { timestamp: clock.now(), kind: EditKind::Reorder });
        self.turns.insert(to, turn);
        self.reindex();
        Ok(())
    }

    pub fn set_addressees(
        &mut self,
        tree: &ReplyTree,
        index: usize,
        addressees: Addressees,
        clock: &dyn Clock,
    ) -> Result<(), DraftError> {
        self.check_index(index)?;
        check_addressees(tree, &self.turns[index].speaker_id, &addressees)?;
        let turn = &mut self.turns[index];
        if turn.addressees != addressees {
            turn.addressees = addressees;
            turn.edit_log.push(EditEntry { timestamp: clock.now(), kind: EditKind::Addressees });
        }
        Ok(())
    }

    pub fn edit_text(&mut self, index: usize, text: &str, clock: &dyn Clock) -> Result<(), DraftError> {
        self.check_index(index)?;
        if text.trim().is_empty() {
            return Err(DraftError::EmptyText);
        }
        let turn = &mut self.turns[index];
        if turn.text == text {
            return Ok(());
        }
        turn.text = text.to_string();
        turn.provenance = match turn.provenance {
            Provenance::Original | Provenance::HumanEdited => Provenance::HumanEdited,
            Provenance::LlmAccepted | Provenance::LlmModified => Provenance::LlmModified,
        };
        turn.edit_log.push(EditEntry { timestamp: clock.now(), kind: EditKind::TextEdit });
        Ok(())
    }

    pub fn remove_turn(&mut self, index: usize) -> Result<Turn, DraftError> {
        self.check_index(index)?;
        let turn = self.turns.remove(index);
        self.reindex();
        Ok(turn)
    }

    pub fn set_opener(&mut self, index: usize, opener: bool) -> Result<(), DraftError> {
        self.check_index(index)?;
        self.turns[index].opener = opener;
        Ok(())
    }

    pub fn apply(&mut self, tree: &ReplyTree, command: DraftCommand, clock: &dyn Clock) -> Result<(), DraftError> {
        match command {
            DraftCommand::Append { node_id, text, speaker, addressees, opener } => {
                let source = match (node_id, text) {
                    (Some(n), None) => TurnSource::Node(n),
                    (None, Some(t)) => TurnSource::Text(t),
                    _ => return Err(DraftError::Malformed("append needs exactly one of node_id or text".into())),
                };
                let index = self.append_turn(tree, source, speaker.as_deref(), addressees, clock)?;
                self.turns[index].opener = opener;
            }
            DraftCommand::Reorder { from, to } => self.reorder_turn(from, to, clock)?,
            DraftCommand::SetAddressees { index, addressees } => self.set_addressees(tree, index, addressees, clock)?,
            DraftCommand::EditText { index, text } => self.edit_text(index, &text, clock)?,
            DraftCommand::Remove { index } => {
                self.remove_turn(index)?;
            }
            DraftCommand::SetOpener { index, opener } => self.set_opener(index, opener)?,
            DraftCommand::SetStatus { status } => self.status = status,
            DraftCommand::SetTitle { title } => self.title = title,
        }
        Ok(())
    }

    /// Applies every command or none of them.
    pub fn apply_all(
        &mut self,
        tree: &ReplyTree,
        commands: impl IntoIterator<Item = DraftCommand>,
        clock: &dyn Clock,
    ) -> Result<(), DraftError> {
        let mut next = self.clone();
        for command in commands {
            next.apply(tree, command, clock)?;
        }
        *self = next;
        Ok(())
    }

    /// Checks a draft loaded from disk against its tree.
    pub fn validate(&self, tree: &ReplyTree) -> Result<(), DraftError> {
        self.check_tree(tree)?;
        let mut sources = BTreeSet::new();
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.index != i {
                return Err(DraftError::Malformed(format!("turn at position {i} has index {}", turn.index)));
            }
            if let Some(node) = &turn.source_node_id {
                if !tree.nodes.contains_key(node) {
                    return Err(DraftError::UnknownNode(node.clone()));
                }
                if !sources.insert(node.as_str()) {
                    return Err(DraftError::DuplicateSource(node.clone()));
                }
            }
            check_speaker(tree, &turn.speaker_id)?;
            check_addressees(tree, &turn.speaker_id, &turn.addressees)?;
            if turn.text.trim().is_empty() {
                return Err(DraftError::EmptyText);
            }
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, DraftError> {
        let draft: DraftConversation =
            serde_json::from_slice(bytes).map_err(|e| DraftError::Malformed(e.to_string()))?;
        if let Some((i, t)) = draft.turns.iter().enumerate().find(|(i, t)| t.index != *i) {
            return Err(DraftError::Malformed(format!("turn at position {i} has index {}", t.index)));
        }
        Ok(draft)
    }

    /// Serializes to the draft-file format.
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(self).expect("draft serialization is infallible")
    }

    /// Equality on conversation content, ignoring timestamps, version and session logs.
    pub fn content_eq(&self, other: &DraftConversation) -> bool {
        let strip = |t: &Turn| Turn { edit_log: Vec::new(), ..t.clone() };
        self.draft_id == other.draft_id
            && self.source_tree_id == other.source_tree_id
            && self.title == other.title
            && self.status == other.status
            && self.turns.len() == other.turns.len()
            && self.turns.iter().zip(&other.turns).all(|(a, b)| strip(a) == strip(b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LintRule {
    R1,
    R2,
    R3,
    R4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintFinding {
    pub rule: LintRule,
    pub severity: Severity,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locus: Option<usize>,
}

impl std::fmt::Display for LintFinding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.locus {
            Some(i) => write!(f, "{:?} warning (turn {i}): {}", self.rule, self.message),
            None => write!(f, "{:?} warning: {}", self.rule, self.message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LintConfig {
    pub min_turns: usize,
    pub max_turns: usize,
    /// Fraction of non-original turns above which the minimal-edit advisory fires.
    pub max_edited_fraction: f64,
}

impl Default for LintConfig {
    fn default() -> Self {
        LintConfig { min_turns: 10, max_turns: 15, max_edited_fraction: 0.5 }
    }
}

fn finding(rule: LintRule, locus: Option<usize>, message: String) -> LintFinding {
    LintFinding { rule, severity: Severity::Warning, message, locus }
}

/// Checks the soft construction rules. Findings are sorted by rule, then turn.
pub fn lint_draft(draft: &DraftConversation, tree: &ReplyTree, config: &LintConfig) -> Vec<LintFinding> {
    let mut out = Vec::new();

    match draft.turns.first() {
        None => out.push(finding(LintRule::R1, None, "conversation has no opening turn".into())),
        Some(first) => {
            let from_root = first.source_node_id.as_deref() == Some(tree.root_id.as_str());
            if !from_root && !first.opener {
                out.push(finding(
                    LintRule::R1,
                    Some(0),
                    "opening turn neither quotes the root message nor is marked as a new opener".into(),
                ));
            }
            if !first.addressees.is_everyone() {
                out.push(finding(LintRule::R1, Some(0), "opening turn must be addressed to everyone".into()));
            }
        }
    }

    let n = draft.turns.len();
    if n < config.min_turns || n > config.max_turns {
        out.push(finding(
            LintRule::R2,
            None,
            format!("conversation has {n} turns; expected between {} and {}", config.min_turns, config.max_turns),
        ));
    }

    let speakers: BTreeSet<&str> = draft.turns.iter().map(|t| t.speaker_id.as_str()).collect();
    for user in tree.users.keys().filter(|u| !speakers.contains(u.as_str())) {
        out.push(finding(LintRule::R3, None, format!("user {user} never speaks")));
    }

    if n > 0 {
        let edited = draft.turns.iter().filter(|t| t.provenance != Provenance::Original).count();
        let fraction = edited as f64 / n as f64;
        if fraction > config.max_edited_fraction {
            out.push(finding(
                LintRule::R4,
                None,
                format!(
                    "{edited} of {n} turns are edited, above the minimal-edit limit of {:.0}%",
                    config.max_edited_fraction * 100.0
                ),
            ));
        }
    }

    out.sort_by(|a, b| (a.rule, a.locus, &a.message).cmp(&(b.rule, b.locus, &b.message)));
    out
}

#[derive(Serialize)]
struct ExportTurn<'a> {
    index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_node_id: Option<&'a str>,
    speaker: &'a str,
    addressees: &'a Addressees,
    text: &'a str,
    provenance: Provenance,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    opener: bool,
}

#[derive(Serialize)]
struct ExportDocument<'a> {
    draft_id: &'a str,
    source_tree_id: &'a str,
    title: &'a str,
    status: DraftStatus,
    turns: Vec<ExportTurn<'a>>,
    users: Vec<&'a SpeakerProfile>,
}

/// Serializes a finished conversation with the profiles of everyone it mentions.
pub fn export_conversation(draft: &DraftConversation, tree: &ReplyTree, force: bool) -> Result<Vec<u8>, DraftError> {
    if draft.status != DraftStatus::Final && !force {
        return Err(DraftError::NotFinal);
    }
    draft.check_tree(tree)?;
    let mut mentioned = BTreeSet::new();
    for turn in &draft.turns {
        mentioned.insert(turn.speaker_id.as_str());
        if let Addressees::Speakers(ids) = &turn.addressees {
            mentioned.extend(ids.iter().map(String::as_str));
        }
    }
    let doc = ExportDocument {
        draft_id: &draft.draft_id,
        source_tree_id: &draft.source_tree_id,
        title: &draft.title,
        status: draft.status,
        turns: draft
            .turns
            .iter()
            .map(|t| ExportTurn {
                index: t.index,
                source_node_id: t.source_node_id.as_deref(),
                speaker: &t.speaker_id,
                addressees: &t.addressees,
                text: &t.text,
                provenance: t.provenance,
                opener: t.opener,
            })
            .collect(),
        users: mentioned.iter().filter_map(|id| tree.users.get(*id)).collect(),
    };
    Ok(serde_json::to_vec_pretty(&doc).expect("export serialization is infallible"))
}
