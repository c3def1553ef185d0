//! Fixed prompt templates with named slots.
//!
//! Templates live in `templates/*.vN.txt` and are compiled in, so a given
//! build always produces byte-identical prompts for identical inputs.

use serde::Serialize;

use super::constraints::RefinementConstraints;
use crate::draft::{Addressees, Turn};
use crate::tree::{SpeakerProfile, Stance};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! template {
    ($name:literal) => {
        Template { name: $name, text: include_str!(concat!("../../templates/", $name, ".txt")) }
    };
}

pub const PROFILE_SYSTEM: Template = template!("profile_system.v1");
pub const PROFILE_USER: Template = template!("profile_user.v1");
pub const REFINE_SYSTEM: Template = template!("refine_system.v1");
pub const REFINE_USER: Template = template!("refine_user.v1");
pub const NORMALIZE_SYSTEM: Template = template!("normalize_system.v1");
pub const NORMALIZE_RETRY: Template = template!("normalize_retry.v1");
pub const USERS_SYSTEM: Template = template!("users_system.v1");
pub const USERS_USER: Template = template!("users_user.v1");
pub const REPLY_SYSTEM: Template = template!("reply_system.v1");
pub const OPENER_USER: Template = template!("opener_user.v1");
pub const REPLY_USER: Template = template!("reply_user.v1");

pub const ALL_TEMPLATES: &[Template] = &[
    PROFILE_SYSTEM,
    PROFILE_USER,
    REFINE_SYSTEM,
    REFINE_USER,
    NORMALIZE_SYSTEM,
    NORMALIZE_RETRY,
    USERS_SYSTEM,
    USERS_USER,
    REPLY_SYSTEM,
    OPENER_USER,
    REPLY_USER,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

/// Replaces `{SLOT}` markers in a single pass; slot values are never rescanned.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let replaced = after.find('}').and_then(|close| {
            let name = &after[..close];
            slots.iter().find(|(slot, _)| *slot == name).map(|(_, value)| (value, close))
        });
        match replaced {
            Some((value, close)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out.trim_end().to_string()
}

fn stance_label(stance: Option<Stance>) -> &'static str {
    match stance {
        Some(Stance::Pro) => "in favour",
        Some(Stance::Counter) => "against",
        Some(Stance::None) | None => "no fixed position",
    }
}

pub fn render_evidence(evidence: &[String]) -> String {
    evidence.iter().enumerate().map(|(i, text)| format!("{}. {}", i + 1, text)).collect::<Vec<_>>().join("\n")
}

pub fn render_turn(turn: &Turn) -> String {
    let to = match &turn.addressees {
        Addressees::Everyone => "everyone".to_string(),
        Addressees::Speakers(ids) => ids.iter().cloned().collect::<Vec<_>>().join(", "),
    };
    format!("[{}] {} (to {}): {}", turn.index, turn.speaker_id, to, turn.text)
}

pub const EMPTY_CONTEXT: &str = "(no earlier messages)";

pub fn render_context(context: &[Turn]) -> String {
    if context.is_empty() {
        EMPTY_CONTEXT.to_string()
    } else {
        context.iter().map(render_turn).collect::<Vec<_>>().join("\n")
    }
}

/// Prompt asking the model to merge message evidence into an existing profile.
pub fn build_profile_prompt(profile: &SpeakerProfile, evidence: &[String]) -> Prompt {
    Prompt {
        system: fill(PROFILE_SYSTEM.text, &[]),
        user: fill(PROFILE_USER.text, &[("PROFILE", &profile.description), ("EVIDENCE", &render_evidence(evidence))]),
    }
}

/// Prompt for rewriting one message given every turn before it.
pub fn build_refinement_prompt(
    message: &str,
    context: &[Turn],
    profile: &SpeakerProfile,
    constraints: &RefinementConstraints,
) -> Prompt {
    Prompt {
        system: fill(REFINE_SYSTEM.text, &[]),
        user: fill(
            REFINE_USER.text,
            &[
                ("PROFILE", &profile.description),
                ("CONTEXT", &render_context(context)),
                ("CONSTRAINTS", &constraints.render()),
                ("MESSAGE", message),
            ],
        ),
    }
}

pub fn normalize_system(previous_error: Option<&str>) -> String {
    let base = fill(NORMALIZE_SYSTEM.text, &[]);
    match previous_error {
        None => base,
        Some(err) => format!("{base}\n{}", fill(NORMALIZE_RETRY.text, &[("ERROR", err)])),
    }
}

pub fn build_users_prompt(topic: &str, participants: &[(String, Stance)]) -> Prompt {
    let list = participants
        .iter()
        .enumerate()
        .map(|(i, (id, stance))| format!("{}. {} ({})", i + 1, id, stance_label(Some(*stance))))
        .collect::<Vec<_>>()
        .join("\n");
    Prompt {
        system: fill(USERS_SYSTEM.text, &[]),
        user: fill(USERS_USER.text, &[("TOPIC", topic), ("PARTICIPANTS", &list)]),
    }
}

/// Prompt for a debate message. An empty `chain` asks for the opening message.
pub fn build_debate_prompt(topic: &str, speaker: &SpeakerProfile, chain: &[(String, String)]) -> Prompt {
    let name = if speaker.display_name.is_empty() { &speaker.speaker_id } else { &speaker.display_name };
    let stance = stance_label(speaker.stance);
    let user = if chain.is_empty() {
        fill(
            OPENER_USER.text,
            &[("TOPIC", topic), ("SPEAKER", name), ("PROFILE", &speaker.description), ("STANCE", stance)],
        )
    } else {
        let context = chain.iter().map(|(who, text)| format!("{who}: {text}")).collect::<Vec<_>>().join("\n");
        fill(
            REPLY_USER.text,
            &[
                ("TOPIC", topic),
                ("SPEAKER", name),
                ("PROFILE", &speaker.description),
                ("STANCE", stance),
                ("CONTEXT", &context),
            ],
        )
    };
    Prompt { system: fill(REPLY_SYSTEM.text, &[]), user }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_is_single_pass() {
        let out = fill("a {X} b {Y} {Z}", &[("X", "{Y}"), ("Y", "y")]);
        assert_eq!(out, "a {Y} b y {Z}");
    }

    #[test]
    fn templates_are_nonempty() {
        for t in ALL_TEMPLATES {
            assert!(!t.text.trim().is_empty(), "{}", t.name);
        }
    }

    #[test]
    fn profile_prompt_numbers_evidence_in_order() {
        let p = build_profile_prompt(&SpeakerProfile::default_for("u"), &["first".to_string(), "second".to_string()]);
        assert!(p.user.contains("This is a telegram user"));
        let a = p.user.find("1. first").unwrap();
        let b = p.user.find("2. second").unwrap();
        assert!(a < b);
        assert!(p.system.contains("stylistic patterns and conversational temperament"));
    }
}
