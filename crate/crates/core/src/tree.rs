//! Rooted reply trees parsed from discussion dumps.
//!
//! A discussion file is a JSON document with a `users` list and a flat `nodes`
//! list where every node names its parent. Parsing resolves those links into a
//! [`ReplyTree`], assigns dotted-path ids (`"1"`, `"1.2"`, `"1.2.4"`) to nodes
//! that arrive without one, and rejects structurally broken inputs with an
//! error that names the offending nodes.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Description assigned to speakers that arrive without a profile.
pub const DEFAULT_USER_DESCRIPTION: &str = "This is a telegram user";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("malformed discussion file: {0}")]
    MalformedInput(String),
    #[error("no root node (exactly one node must have no parent)")]
    MissingRoot,
    #[error("more than one root node: {}", .0.join(", "))]
    MultipleRoots(Vec<String>),
    #[error("duplicate node id: {}", .0.join(", "))]
    DuplicateId(Vec<String>),
    #[error("duplicate user id: {0}")]
    DuplicateUser(String),
    #[error("reply cycle among nodes: {}", .0.join(", "))]
    CycleDetected(Vec<String>),
    #[error("node {node} replies to missing parent {parent}")]
    DanglingParent { node: String, parent: String },
    #[error("unknown node: {0}")]
    UnknownNode(String),
    #[error("unknown speaker: {0}")]
    UnknownSpeaker(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum ParseWarning {
    EmptyText { node_id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stance {
    Pro,
    Counter,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerProfile {
    #[serde(rename = "id")]
    pub speaker_id: String,
    #[serde(rename = "name", default)]
    pub display_name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance: Option<Stance>,
    /// Description in place before the last LLM refinement.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous_description: Option<String>,
    #[serde(flatten)]
    pub attrs: BTreeMap<String, Value>,
}

impl SpeakerProfile {
    pub fn new(speaker_id: impl Into<String>, description: impl Into<String>) -> Self {
        let speaker_id = speaker_id.into();
        SpeakerProfile {
            display_name: speaker_id.clone(),
            speaker_id,
            description: description.into(),
            stance: None,
            previous_description: None,
            attrs: BTreeMap::new(),
        }
    }

    pub fn default_for(speaker_id: impl Into<String>) -> Self {
        Self::new(speaker_id, DEFAULT_USER_DESCRIPTION)
    }

    pub fn with_stance(mut self, stance: Stance) -> Self {
        self.stance = Some(stance);
        self
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.display_name = name.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MessageNode {
    pub id: String,
    #[serde(rename = "author")]
    pub author_id: String,
    pub text: String,
    #[serde(rename = "parent", skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    #[serde(skip)]
    pub child_ids: Vec<String>,
    #[serde(flatten)]
    pub attrs: BTreeMap<String, Value>,
}

impl MessageNode {
    pub fn new(id: impl Into<String>, author_id: impl Into<String>, text: impl Into<String>) -> Self {
        MessageNode {
            id: id.into(),
            author_id: author_id.into(),
            text: text.into(),
            parent_id: None,
            child_ids: Vec::new(),
            attrs: BTreeMap::new(),
        }
    }

    pub fn is_root(&self) -> bool {
        self.parent_id.is_none()
    }

    pub fn is_leaf(&self) -> bool {
        self.child_ids.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplyTree {
    pub tree_id: String,
    pub root_id: String,
    pub nodes: BTreeMap<String, MessageNode>,
    pub users: BTreeMap<String, SpeakerProfile>,
    pub topic: Option<String>,
}

/// A node together with its immediate neighbourhood.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FocusedView<'a> {
    pub parent: Option<&'a MessageNode>,
    pub node: &'a MessageNode,
    pub children: Vec<&'a MessageNode>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ParentRef {
    Id(String),
    Index(usize),
}

#[derive(Debug, Deserialize)]
struct RawNode {
    #[serde(default)]
    id: Option<String>,
    author: String,
    text: String,
    #[serde(default)]
    parent: Option<ParentRef>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Debug, Deserialize)]
struct RawDiscussion {
    #[serde(default)]
    tree_id: Option<String>,
    #[serde(default)]
    topic: Option<String>,
    #[serde(default)]
    users: Option<Vec<SpeakerProfile>>,
    nodes: Vec<RawNode>,
}

#[derive(Serialize)]
struct DiscussionOut<'a> {
    tree_id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    topic: Option<&'a str>,
    users: Vec<&'a SpeakerProfile>,
    nodes: Vec<&'a MessageNode>,
}

fn raw_label(raw: &RawNode, index: usize) -> String {
    raw.id.clone().unwrap_or_else(|| format!("#{index}"))
}

/// Parses a discussion file, discarding warnings.
pub fn parse_discussion(raw: &[u8]) -> Result<ReplyTree, TreeError> {
    parse_discussion_with_warnings(raw).map(|(tree, _)| tree)
}

/// Parses a discussion file and reports non-fatal issues alongside the tree.
pub fn parse_discussion_with_warnings(raw: &[u8]) -> Result<(ReplyTree, Vec<ParseWarning>), TreeError> {
    let doc: RawDiscussion = serde_json::from_slice(raw).map_err(|e| TreeError::MalformedInput(e.to_string()))?;
    let nodes = doc.nodes;

    let mut by_explicit_id: HashMap<&str, usize> = HashMap::new();
    let mut dupes: Vec<String> = Vec::new();
    for (i, node) in nodes.iter().enumerate() {
        if let Some(id) = node.id.as_deref() {
            if by_explicit_id.insert(id, i).is_some() && !dupes.iter().any(|d| d == id) {
                dupes.push(id.to_string());
            }
        }
    }
    if !dupes.is_empty() {
        return Err(TreeError::DuplicateId(dupes));
    }

    // Parent index of every node; None for roots.
    let mut parent_of: Vec<Option<usize>> = Vec::with_capacity(nodes.len());
    for (i, node) in nodes.iter().enumerate() {
        let parent = match &node.parent {
            None => None,
            Some(ParentRef::Id(pid)) => match by_explicit_id.get(pid.as_str()) {
                Some(&p) => Some(p),
                None => return Err(TreeError::DanglingParent { node: raw_label(node, i), parent: pid.clone() }),
            },
            Some(ParentRef::Index(p)) => {
                if *p >= nodes.len() {
                    return Err(TreeError::DanglingParent { node: raw_label(node, i), parent: format!("#{p}") });
                }
                Some(*p)
            }
        };
        parent_of.push(parent);
    }

    let roots: Vec<usize> = (0..nodes.len()).filter(|&i| parent_of[i].is_none()).collect();
    let root = match roots.as_slice() {
        [] => return Err(TreeError::MissingRoot),
        [r] => *r,
        many => return Err(TreeError::MultipleRoots(many.iter().map(|&i| raw_label(&nodes[i], i)).collect())),
    };

    let mut children: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (i, p) in parent_of.iter().enumerate() {
        if let Some(p) = p {
            children[*p].push(i);
        }
    }

    // Pre-order walk from the root, assigning dotted ids to anonymous nodes.
    let mut final_ids: Vec<Option<String>> = vec![None; nodes.len()];
    let mut order: Vec<usize> = Vec::with_capacity(nodes.len());
    let mut stack = vec![root];
    while let Some(i) = stack.pop() {
        if final_ids[i].is_none() {
            let id = match (&nodes[i].id, parent_of[i]) {
                (Some(id), _) => id.clone(),
                (None, None) => "1".to_string(),
                (None, Some(p)) => {
                    let pos = children[p].iter().position(|&c| c == i).unwrap_or(0) + 1;
                    format!("{}.{}", final_ids[p].as_deref().unwrap_or("1"), pos)
                }
            };
            final_ids[i] = Some(id);
        }
        order.push(i);
        for &c in children[i].iter().rev() {
            stack.push(c);
        }
    }

    if order.len() != nodes.len() {
        let cyclic: Vec<String> =
            (0..nodes.len()).filter(|&i| final_ids[i].is_none()).map(|i| raw_label(&nodes[i], i)).collect();
        return Err(TreeError::CycleDetected(cyclic));
    }

    let final_ids: Vec<String> = final_ids.into_iter().map(|id| id.unwrap_or_default()).collect();
    let mut seen: HashMap<&str, ()> = HashMap::new();
    let mut collisions = Vec::new();
    for id in &final_ids {
        if seen.insert(id.as_str(), ()).is_some() {
            collisions.push(id.clone());
        }
    }
    if !collisions.is_empty() {
        return Err(TreeError::DuplicateId(collisions));
    }

    let mut warnings = Vec::new();
    let mut tree_nodes = BTreeMap::new();
    for (i, raw_node) in nodes.into_iter().enumerate() {
        let id = final_ids[i].clone();
        if raw_node.text.is_empty() {
            warnings.push(ParseWarning::EmptyText { node_id: id.clone() });
        }
        tree_nodes.insert(
            id.clone(),
            MessageNode {
                id,
                author_id: raw_node.author,
                text: raw_node.text,
                parent_id: parent_of[i].map(|p| final_ids[p].clone()),
                child_ids: children[i].iter().map(|&c| final_ids[c].clone()).collect(),
                attrs: raw_node.extra,
            },
        );
    }

    let mut users = BTreeMap::new();
    for mut profile in doc.users.unwrap_or_default() {
        if profile.display_name.is_empty() {
            profile.display_name = profile.speaker_id.clone();
        }
        let id = profile.speaker_id.clone();
        if users.insert(id.clone(), profile).is_some() {
            return Err(TreeError::DuplicateUser(id));
        }
    }

    let tree_id = doc.tree_id.unwrap_or_else(|| {
        let digest = Sha256::digest(raw);
        hex::encode(&digest[..8])
    });

    Ok((ReplyTree { tree_id, root_id: final_ids[root].clone(), nodes: tree_nodes, users, topic: doc.topic }, warnings))
}

impl ReplyTree {
    /// Starts a tree containing only its root message.
    pub fn with_root(tree_id: impl Into<String>, root: MessageNode) -> Self {
        let mut root = root;
        root.parent_id = None;
        root.child_ids.clear();
        let root_id = root.id.clone();
        let mut nodes = BTreeMap::new();
        nodes.insert(root_id.clone(), root);
        ReplyTree { tree_id: tree_id.into(), root_id, nodes, users: BTreeMap::new(), topic: None }
    }

    /// Appends `child` as the last reply to `parent_id`.
    pub fn push_child(&mut self, parent_id: &str, child: MessageNode) -> Result<(), TreeError> {
        if self.nodes.contains_key(&child.id) {
            return Err(TreeError::DuplicateId(vec![child.id]));
        }
        let parent = self.nodes.get_mut(parent_id).ok_or_else(|| TreeError::UnknownNode(parent_id.to_string()))?;
        parent.child_ids.push(child.id.clone());
        let mut child = child;
        child.parent_id = Some(parent_id.to_string());
        child.child_ids.clear();
        self.nodes.insert(child.id.clone(), child);
        Ok(())
    }

    pub fn root(&self) -> &MessageNode {
        &self.nodes[&self.root_id]
    }

    pub fn node(&self, id: &str) -> Result<&MessageNode, TreeError> {
        self.nodes.get(id).ok_or_else(|| TreeError::UnknownNode(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Depth-first pre-order walk starting at the root, children in stored order.
    pub fn preorder(&self) -> Preorder<'_> {
        self.preorder_from(&self.root_id)
    }

    fn preorder_from(&self, start: &str) -> Preorder<'_> {
        Preorder { tree: self, stack: vec![start.to_string()] }
    }

    /// Number of levels from the root down to `id`; the root is depth 1.
    pub fn depth_of(&self, id: &str) -> Result<usize, TreeError> {
        Ok(self.ancestry(id)?.len())
    }

    /// Nodes on the path from the root to `id`, both ends included.
    pub fn ancestry(&self, id: &str) -> Result<Vec<&MessageNode>, TreeError> {
        let mut chain = vec![self.node(id)?];
        while let Some(pid) = chain.last().and_then(|n| n.parent_id.as_deref()) {
            match self.nodes.get(pid) {
                Some(p) if chain.len() <= self.nodes.len() => chain.push(p),
                _ => break,
            }
        }
        chain.reverse();
        Ok(chain)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &MessageNode> {
        self.preorder().filter(|n| n.is_leaf())
    }

    /// Distinct authors in pre-order of first appearance.
    pub fn authors(&self) -> Vec<&str> {
        let mut seen = Vec::new();
        for node in self.preorder() {
            if !seen.contains(&node.author_id.as_str()) {
                seen.push(node.author_id.as_str());
            }
        }
        seen
    }

    /// Adds a default profile for every author lacking one.
    pub fn ensure_users(mut self) -> Self {
        let authors: Vec<String> = self.nodes.values().map(|n| n.author_id.clone()).collect();
        for author in authors {
            self.users.entry(author.clone()).or_insert_with(|| SpeakerProfile::default_for(author));
        }
        for profile in self.users.values_mut() {
            if profile.description.trim().is_empty() {
                profile.description = DEFAULT_USER_DESCRIPTION.to_string();
            }
        }
        self
    }

    /// Copy of the tree restricted to `node_id` and its descendants.
    pub fn subtree(&self, node_id: &str) -> Result<ReplyTree, TreeError> {
        self.node(node_id)?;
        let mut nodes = BTreeMap::new();
        for node in self.preorder_from(node_id) {
            nodes.insert(node.id.clone(), node.clone());
        }
        if let Some(root) = nodes.get_mut(node_id) {
            root.parent_id = None;
        }
        Ok(ReplyTree {
            tree_id: self.tree_id.clone(),
            root_id: node_id.to_string(),
            nodes,
            users: self.users.clone(),
            topic: self.topic.clone(),
        })
    }

    pub fn focused_view(&self, node_id: &str) -> Result<FocusedView<'_>, TreeError> {
        let node = self.node(node_id)?;
        let parent = node.parent_id.as_deref().and_then(|p| self.nodes.get(p));
        let children = node.child_ids.iter().filter_map(|c| self.nodes.get(c)).collect();
        Ok(FocusedView { parent, node, children })
    }

    /// The speaker's messages in pre-order.
    pub fn nodes_by_author(&self, speaker_id: &str) -> Result<Vec<&MessageNode>, TreeError> {
        if !self.users.contains_key(speaker_id) {
            return Err(TreeError::UnknownSpeaker(speaker_id.to_string()));
        }
        Ok(self.preorder().filter(|n| n.author_id == speaker_id).collect())
    }

    /// Serializes to the discussion-file format: users sorted by id, nodes in pre-order.
    pub fn to_json(&self) -> Vec<u8> {
        let out = DiscussionOut {
            tree_id: &self.tree_id,
            topic: self.topic.as_deref(),
            users: self.users.values().collect(),
            nodes: self.preorder().collect(),
        };
        serde_json::to_vec_pretty(&out).expect("discussion serialization is infallible")
    }

    /// Re-checks the structural invariants on an already-built tree.
    pub fn validate(&self) -> Result<(), TreeError> {
        let root = self.node(&self.root_id)?;
        if root.parent_id.is_some() {
            return Err(TreeError::MissingRoot);
        }
        for node in self.nodes.values() {
            if let Some(pid) = &node.parent_id {
                let parent = self
                    .nodes
                    .get(pid)
                    .ok_or_else(|| TreeError::DanglingParent { node: node.id.clone(), parent: pid.clone() })?;
                if !parent.child_ids.contains(&node.id) {
                    return Err(TreeError::MalformedInput(format!(
                        "node {} is not listed among the children of {}",
                        node.id, pid
                    )));
                }
            } else if node.id != self.root_id {
                return Err(TreeError::MultipleRoots(vec![self.root_id.clone(), node.id.clone()]));
            }
            for child in &node.child_ids {
                match self.nodes.get(child) {
                    Some(c) if c.parent_id.as_deref() == Some(node.id.as_str()) => {}
                    _ => {
                        return Err(TreeError::MalformedInput(format!(
                            "child link {} -> {} has no matching parent link",
                            node.id, child
                        )))
                    }
                }
            }
        }
        let visited = self.preorder().take(self.nodes.len() + 1).count();
        if visited != self.nodes.len() {
            let reachable: Vec<&str> = self.preorder().map(|n| n.id.as_str()).collect();
            let stray = self.nodes.keys().filter(|k| !reachable.contains(&k.as_str())).cloned().collect();
            return Err(TreeError::CycleDetected(stray));
        }
        Ok(())
    }
}

pub struct Preorder<'a> {
    tree: &'a ReplyTree,
    stack: Vec<String>,
}

impl<'a> Iterator for Preorder<'a> {
    type Item = &'a MessageNode;

    fn next(&mut self) -> Option<Self::Item> {
        let id = self.stack.pop()?;
        let node = self.tree.nodes.get(&id)?;
        self.stack.extend(node.child_ids.iter().rev().cloned());
        Some(node)
    }
}
