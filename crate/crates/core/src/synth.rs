//! Synthetic debate trees.
//!
//! A debate has `m` participants and `d` levels. The root is written by a
//! randomly drawn participant; every node above the last level then receives
//! exactly one reply from each participant, self-replies included, so a full
//! tree holds `1 + m + m^2 + ... + m^(d-1)` messages.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::llm::config::GenerationConfig;
use crate::llm::constraints::{Length, RefinementConstraints, Style, Temperament};
use crate::llm::prompts;
use crate::llm::refine::strip_code_fence;
use crate::llm::transport::{ChatTransport, TransportError};
use crate::tree::{MessageNode, ReplyTree, SpeakerProfile, Stance};

/// Upper bound on generated tree size.
pub const MAX_NODES: u64 = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid generation spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("model returned an empty completion")]
    EmptyCompletion,
    #[error("expected {expected} user profiles, model returned {got}")]
    WrongUserCount { expected: usize, got: usize },
    #[error("user definitions are not valid JSON: {0}")]
    MalformedUsers(String),
    #[error("partial tree does not belong to this spec: {0}")]
    IncompatiblePartial(String),
}

/// Spec-file form: `{topic, m, d, stances: {...}, seed}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationSpec {
    pub topic: String,
    #[serde(rename = "m")]
    pub users: usize,
    #[serde(rename = "d")]
    pub depth: usize,
    /// Speaker id to stance. Left empty, ids `u1..um` are created, first half pro.
    #[serde(rename = "stances", default)]
    pub stance_split: BTreeMap<String, Stance>,
    #[serde(rename = "seed", default)]
    pub rng_seed: u64,
}

impl GenerationSpec {
    pub fn new(topic: impl Into<String>, users: usize, depth: usize, rng_seed: u64) -> Self {
        GenerationSpec { topic: topic.into(), users, depth, stance_split: BTreeMap::new(), rng_seed }
            .with_default_stances()
    }

    /// Four participants, two per side, four levels.
    pub fn debate_preset(topic: impl Into<String>, rng_seed: u64) -> Self {
        Self::new(topic, 4, 4, rng_seed)
    }

    pub fn with_default_stances(mut self) -> Self {
        if self.stance_split.is_empty() {
            let pro = self.users.div_ceil(2);
            self.stance_split = (1..=self.users)
                .map(|i| (format!("u{i}"), if i <= pro { Stance::Pro } else { Stance::Counter }))
                .collect();
        }
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.users == 0 {
            return Err(SynthError::InvalidSpec("m must be at least 1".into()));
        }
        if self.depth == 0 {
            return Err(SynthError::InvalidSpec("d must be at least 1".into()));
        }
        if self.stance_split.len() != self.users {
            return Err(SynthError::InvalidSpec(format!(
                "{} stances given for {} users",
                self.stance_split.len(),
                self.users
            )));
        }
        if self.stance_split.values().any(|s| *s == Stance::None) {
            return Err(SynthError::InvalidSpec("every participant needs a pro or counter stance".into()));
        }
        match checked_node_count(self.users as u64, self.depth as u64) {
            Some(n) if n <= MAX_NODES => Ok(()),
            _ => Err(SynthError::InvalidSpec(format!("tree would exceed {MAX_NODES} nodes"))),
        }
    }

    /// Speaker ids in the order children are attached.
    pub fn speaker_ids(&self) -> Vec<String> {
        self.stance_split.keys().cloned().collect()
    }

    /// Reads a spec file, filling in default stances and validating.
    pub fn from_json(bytes: &[u8]) -> Result<Self, SynthError> {
        let spec: GenerationSpec = serde_json::from_slice(bytes).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        let spec = spec.with_default_stances();
        spec.validate()?;
        Ok(spec)
    }
}

fn checked_node_count(m: u64, d: u64) -> Option<u64> {
    let mut total: u64 = 0;
    let mut level: u64 = 1;
    for i in 0..d {
        total = total.checked_add(level)?;
        if i + 1 < d {
            level = level.checked_mul(m)?;
        }
    }
    Some(total)
}

/// Messages in a complete tree with `m` participants and `d` levels.
///
/// Panics if the count does not fit in a `u64`.
pub fn expected_node_count(m: u64, d: u64) -> u64 {
    checked_node_count(m, d).expect("node count overflows u64")
}

#[derive(Deserialize)]
struct UserDefinition {
    #[serde(default)]
    name: String,
    #[serde(default)]
    description: String,
}

/// Asks the model for one profile per participant, in speaker-id order.
pub fn define_users(transport: &dyn ChatTransport, spec: &GenerationSpec) -> Result<Vec<SpeakerProfile>, SynthError> {
    spec.validate()?;
    let participants: Vec<(String, Stance)> = spec.stance_split.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let prompt = prompts::build_users_prompt(&spec.topic, &participants);
    let completion = transport.complete(&GenerationConfig::PROFILE, &prompt.system, &prompt.user)?;
    let defs: Vec<UserDefinition> =
        serde_json::from_str(strip_code_fence(&completion)).map_err(|e| SynthError::MalformedUsers(e.to_string()))?;
    if defs.len() != spec.users {
        return Err(SynthError::WrongUserCount { expected: spec.users, got: defs.len() });
    }
    participants
        .into_iter()
        .zip(defs)
        .map(|((id, stance), def)| {
            let description = def.description.trim().to_string();
            if description.is_empty() {
                return Err(SynthError::EmptyCompletion);
            }
            let name = if def.name.trim().is_empty() { id.clone() } else { def.name.trim().to_string() };
            Ok(SpeakerProfile::new(id, description).with_name(name).with_stance(stance))
        })
        .collect()
}

/// Per-node seed so each message depends only on the spec and its position.
fn node_seed(rng_seed: u64, node_id: &str) -> i64 {
    let mut h = Sha256::new();
    h.update(rng_seed.to_le_bytes());
    h.update(node_id.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    // keep it positive; some providers reject negative seeds
    (u64::from_le_bytes(bytes) >> 1) as i64
}

fn tree_id_for(spec: &GenerationSpec) -> String {
    let digest = Sha256::digest(format!("{}\u{0}{}", spec.topic, spec.rng_seed).as_bytes());
    format!("synth-{}", hex::encode(&digest[..6]))
}

/// Index of the participant who writes the opening message.
pub fn root_author_index(spec: &GenerationSpec) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    rng.random_range(0..spec.users)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationProgress {
    pub tree: ReplyTree,
    pub complete: bool,
    /// Transport calls made in this run.
    pub calls: usize,
}

fn generate_text(
    transport: &dyn ChatTransport,
    spec: &GenerationSpec,
    tree: Option<&ReplyTree>,
    parent_id: Option<&str>,
    node_id: &str,
    speaker: &SpeakerProfile,
) -> Result<String, SynthError> {
    let chain: Vec<(String, String)> = match (tree, parent_id) {
        (Some(tree), Some(pid)) => tree
            .ancestry(pid)
            .map_err(|e| SynthError::IncompatiblePartial(e.to_string()))?
            .into_iter()
            .map(|n| {
                let who =
                    tree.users.get(&n.author_id).map(|p| p.display_name.clone()).unwrap_or_else(|| n.author_id.clone());
                (who, n.text.clone())
            })
            .collect(),
        _ => Vec::new(),
    };
    let prompt = prompts::build_debate_prompt(&spec.topic, speaker, &chain);
    let config = GenerationConfig::GENERATE.with_seed(node_seed(spec.rng_seed, node_id));
    let text = transport.complete(&config, &prompt.system, &prompt.user)?;
    let text = text.trim();
    if text.is_empty() {
        return Err(SynthError::EmptyCompletion);
    }
    Ok(text.to_string())
}

/// Generates a full debate tree.
pub fn generate_tree(transport: &dyn ChatTransport, spec: &GenerationSpec) -> Result<ReplyTree, SynthError> {
    let progress = generate_tree_resumable(transport, spec, None, None)?;
    debug_assert!(progress.complete);
    Ok(progress.tree)
}

/// Generates breadth-first, stopping after `max_calls` transport calls.
///
/// Passing the tree of an interrupted run as `partial` continues where it
/// stopped; nodes already present are not regenerated.
pub fn generate_tree_resumable(
    transport: &dyn ChatTransport,
    spec: &GenerationSpec,
    partial: Option<ReplyTree>,
    max_calls: Option<usize>,
) -> Result<GenerationProgress, SynthError> {
    spec.validate()?;
    let budget = max_calls.unwrap_or(usize::MAX);
    let mut calls = 0usize;
    let ids = spec.speaker_ids();

    let users: BTreeMap<String, SpeakerProfile> = match &partial {
        Some(t) if !t.users.is_empty() => {
            if t.users.keys().cloned().collect::<Vec<_>>() != ids {
                return Err(SynthError::IncompatiblePartial("participants differ".into()));
            }
            t.users.clone()
        }
        _ => {
            if calls >= budget {
                let tree = partial.unwrap_or_else(|| empty_placeholder(spec));
                return Ok(GenerationProgress { tree, complete: false, calls });
            }
            calls += 1;
            define_users(transport, spec)?.into_iter().map(|p| (p.speaker_id.clone(), p)).collect()
        }
    };

    let mut tree = match partial.filter(|t| !t.nodes.is_empty() && t.tree_id != PLACEHOLDER_ID) {
        Some(mut t) => {
            t.users = users;
            t
        }
        None => {
            if calls >= budget {
                let mut t = empty_placeholder(spec);
                t.users = users;
                return Ok(GenerationProgress { tree: t, complete: false, calls });
            }
            let author = &ids[root_author_index(spec)];
            calls += 1;
            let text = generate_text(transport, spec, None, None, "1", &users[author])?;
            let mut t = ReplyTree::with_root(tree_id_for(spec), MessageNode::new("1", author.clone(), text));
            t.users = users;
            t.topic = Some(spec.topic.clone());
            t
        }
    };

    let mut frontier = vec![tree.root_id.clone()];
    for _level in 1..spec.depth {
        let mut next = Vec::with_capacity(frontier.len() * ids.len());
        for parent in &frontier {
            for (k, author) in ids.iter().enumerate() {
                let child_id = format!("{parent}.{}", k + 1);
                if !tree.nodes.contains_key(&child_id) {
                    if calls >= budget {
                        return Ok(GenerationProgress { tree, complete: false, calls });
                    }
                    calls += 1;
                    let text =
                        generate_text(transport, spec, Some(&tree), Some(parent), &child_id, &tree.users[author])?;
                    tree.push_child(parent, MessageNode::new(child_id.clone(), author.clone(), text))
                        .map_err(|e| SynthError::IncompatiblePartial(e.to_string()))?;
                }
                next.push(child_id);
            }
        }
        frontier = next;
    }
    Ok(GenerationProgress { tree, complete: true, calls })
}

const PLACEHOLDER_ID: &str = "synth-pending";

// A run can be cut off before the root exists; this keeps the user table around.
fn empty_placeholder(spec: &GenerationSpec) -> ReplyTree {
    ReplyTree {
        tree_id: PLACEHOLDER_ID.to_string(),
        root_id: String::new(),
        nodes: BTreeMap::new(),
        users: BTreeMap::new(),
        topic: Some(spec.topic.clone()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PresetTopic {
    pub label: &'static str,
    pub topic: &'static str,
    pub constraints: RefinementConstraints,
}

/// The four study topics and the tutorial topic, each with its refinement combination.
pub fn preset_topics() -> Vec<PresetTopic> {
    vec![
        PresetTopic {
            label: "T1",
            topic: "Legalization of marijuana in Italy",
            constraints: RefinementConstraints::new(Style::Aggressive, Temperament::Informal, Length::MuchLonger),
        },
        PresetTopic {
            label: "T2",
            topic: "Legalization of euthanasia in Italy",
            constraints: RefinementConstraints::new(Style::Exuberant, Temperament::Expressive, Length::SameLength),
        },
        PresetTopic {
            label: "T3",
            topic: "Introduction of a four-day work week",
            constraints: RefinementConstraints::new(Style::Cynic, Temperament::Concise, Length::SlightlyShorter),
        },
        PresetTopic {
            label: "T4",
            topic: "Serie A clubs should promote more Italian players rather than foreign stars",
            constraints: RefinementConstraints::new(Style::Detached, Temperament::Formal, Length::SlightlyLonger),
        },
        PresetTopic {
            label: "tutorial",
            topic: "Coca-Cola is better than Fanta",
            constraints: RefinementConstraints::new(Style::Sarcastic, Temperament::Neutral, Length::MuchShorter),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::mock::{CannedTransport, FnTransport, SpyTransport};

    /// Answers the user-definition prompt with `n` profiles and everything else with a fixed line.
    pub(crate) fn scripted(n: usize) -> impl ChatTransport {
        let users_system = prompts::build_users_prompt("", &[]).system;
        FnTransport(move |_: &GenerationConfig, system: &str, _: &str| {
            if system == users_system {
                let defs: Vec<_> = (0..n)
                    .map(|i| serde_json::json!({"name": format!("P{i}"), "description": format!("person {i}")}))
                    .collect();
                Ok(serde_json::to_string(&defs).unwrap())
            } else {
                Ok("a message".to_string())
            }
        })
    }

    #[test]
    fn node_count_oracle() {
        // direct summation by loop
        let brute = |m: u64, d: u64| (0..d).map(|i| m.pow(i as u32)).sum::<u64>();
        assert_eq!(expected_node_count(4, 4), 85);
        assert_eq!(expected_node_count(7, 1), 1);
        assert_eq!(expected_node_count(1, 3), 3);
        for m in 1..6 {
            for d in 1..6 {
                assert_eq!(expected_node_count(m, d), brute(m, d));
            }
        }
    }

    #[test]
    fn default_stances_split_evenly() {
        let spec = GenerationSpec::debate_preset("x", 1);
        let pro = spec.stance_split.values().filter(|s| **s == Stance::Pro).count();
        assert_eq!(pro, 2);
        assert_eq!(spec.stance_split.len(), 4);
    }

    #[test]
    fn define_users_counts() {
        let spec = GenerationSpec::debate_preset("x", 1);
        let users = define_users(&scripted(4), &spec).unwrap();
        assert_eq!(users.len(), 4);
        assert_eq!(users.iter().filter(|u| u.stance == Some(Stance::Pro)).count(), 2);
        assert_eq!(users.iter().filter(|u| u.stance == Some(Stance::Counter)).count(), 2);
        assert_eq!(define_users(&scripted(3), &spec), Err(SynthError::WrongUserCount { expected: 4, got: 3 }));
        let one = GenerationSpec::new("x", 1, 2, 0);
        assert_eq!(define_users(&scripted(1), &one).unwrap().len(), 1);
    }

    #[test]
    fn small_trees() {
        let spy = SpyTransport::new(scripted(2));
        let t = generate_tree(&spy, &GenerationSpec::new("x", 2, 2, 3)).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(spy.calls().len(), 1 + 3);
        let authors: Vec<_> = t.root().child_ids.iter().map(|c| t.nodes[c].author_id.clone()).collect();
        assert_eq!(authors, ["u1", "u2"]);

        let spy = SpyTransport::new(scripted(3));
        let t = generate_tree(&spy, &GenerationSpec::new("x", 3, 1, 3)).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(spy.calls().len(), 2);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let spec = GenerationSpec::new("topic", 3, 3, 11);
        let full = generate_tree(&scripted(3), &spec).unwrap();
        let mut partial: Option<ReplyTree> = None;
        let mut rounds = 0;
        loop {
            let p = generate_tree_resumable(&scripted(3), &spec, partial.take(), Some(2)).unwrap();
            rounds += 1;
            if p.complete {
                assert_eq!(p.tree, full);
                break;
            }
            partial = Some(p.tree);
        }
        assert!(rounds > 5);
    }

    #[test]
    fn invalid_specs() {
        assert!(GenerationSpec::new("x", 0, 1, 0).validate().is_err());
        assert!(GenerationSpec::new("x", 1, 0, 0).validate().is_err());
        assert!(GenerationSpec::new("x", 100, 100, 0).validate().is_err());
        let empty = CannedTransport("   ".into());
        let spec = GenerationSpec::new("x", 1, 1, 0);
        assert!(generate_tree(&empty, &spec).is_err());
    }

    #[test]
    fn presets() {
        let p = preset_topics();
        assert_eq!(p.len(), 5);
        assert_eq!(
            p[1].constraints,
            RefinementConstraints::new(Style::Exuberant, Temperament::Expressive, Length::SameLength)
        );
        assert_eq!(
            p[4].constraints,
            RefinementConstraints::new(Style::Sarcastic, Temperament::Neutral, Length::MuchShorter)
        );
    }
}
