use std::collections::BTreeSet;

use serde_json::Value;
use threadsmith_core::clock::ManualClock;
use threadsmith_core::draft::{export_conversation, lint_draft, DraftCommand, DraftConversation, LintConfig, LintRule};
use threadsmith_core::eval::{build_report, read_judgments, render_report, WeightScheme};
use threadsmith_core::llm::mock::{FixtureTransport, FnTransport, RecordingTransport, SpyTransport};
use threadsmith_core::llm::prompts::{self, PROFILE_SYSTEM, USERS_SYSTEM};
use threadsmith_core::llm::refine::{normalize_tree, refine_message, refine_profile, select_profile_evidence};
use threadsmith_core::llm::{
    GenerationConfig, Length, RefinementConstraints, RetryPolicy, RetryingTransport, Style, Temperament, TransportError,
};
use threadsmith_core::synth::{generate_tree, GenerationSpec};
use threadsmith_core::tree::{parse_discussion, ReplyTree, SpeakerProfile, DEFAULT_USER_DESCRIPTION};

const TREE: &str = include_str!("fixtures/debate_tree.json");
const DRAFT: &str = include_str!("fixtures/compliant_draft.json");
const JUDGMENTS: &str = include_str!("fixtures/naturalness_32.csv");

fn fixtures() -> (ReplyTree, DraftConversation) {
    let tree = parse_discussion(TREE.as_bytes()).unwrap().ensure_users();
    let draft = DraftConversation::from_json(DRAFT.as_bytes()).unwrap();
    draft.validate(&tree).unwrap();
    (tree, draft)
}

fn rules(draft: &DraftConversation, tree: &ReplyTree) -> Vec<(LintRule, Option<usize>)> {
    lint_draft(draft, tree, &LintConfig::default()).into_iter().map(|f| (f.rule, f.locus)).collect()
}

#[test]
fn compliant_fixture_has_no_findings() {
    let (tree, draft) = fixtures();
    assert_eq!(draft.turns.len(), 12);
    assert!(lint_draft(&draft, &tree, &LintConfig::default()).is_empty());
}

#[test]
fn each_rule_fires_alone() {
    let (tree, draft) = fixtures();
    let clock = ManualClock::at_epoch_secs(0);

    // R1: the opening turn neither comes from the root nor is flagged as an opener
    let mut d = draft.clone();
    d.apply(&tree, DraftCommand::Reorder { from: 0, to: 11 }, &clock).unwrap();
    d.apply(&tree, DraftCommand::Reorder { from: 0, to: 10 }, &clock).unwrap();
    let first = d.turns[0].source_node_id.clone().unwrap();
    assert_eq!(tree.nodes[&first].parent_id.as_deref(), Some("1.2"));
    d.apply(
        &tree,
        DraftCommand::SetAddressees { index: 0, addressees: threadsmith_core::Addressees::Everyone },
        &clock,
    )
    .unwrap();
    assert_eq!(rules(&d, &tree), [(LintRule::R1, Some(0))]);
    d.apply(&tree, DraftCommand::SetOpener { index: 0, opener: true }, &clock).unwrap();
    assert!(rules(&d, &tree).is_empty());

    // R1 again: opening from the root but directed at one person
    let mut d = draft.clone();
    d.apply(
        &tree,
        DraftCommand::SetAddressees { index: 0, addressees: threadsmith_core::Addressees::one("ben") },
        &clock,
    )
    .unwrap();
    assert_eq!(rules(&d, &tree), [(LintRule::R1, Some(0))]);

    // R2: nine turns
    let mut d = draft.clone();
    for _ in 0..3 {
        let last = d.turns.len() - 1;
        d.apply(&tree, DraftCommand::Remove { index: last }, &clock).unwrap();
    }
    assert_eq!(rules(&d, &tree), [(LintRule::R2, None)]);

    // R2: sixteen turns
    let mut d = draft.clone();
    for text in ["one", "two", "three", "four"] {
        d.apply(
            &tree,
            DraftCommand::Append {
                node_id: None,
                text: Some(text.into()),
                speaker: Some("ben".into()),
                addressees: None,
                opener: false,
            },
            &clock,
        )
        .unwrap();
    }
    // free-text turns count as edited: 5 of 16 is still under half
    assert_eq!(rules(&d, &tree), [(LintRule::R2, None)]);

    // R3: a profiled participant who never speaks
    let mut t = tree.clone();
    t.users.insert("dan".into(), SpeakerProfile::default_for("dan"));
    let findings = lint_draft(&draft, &t, &LintConfig::default());
    assert_eq!(findings.len(), 1);
    assert_eq!(findings[0].rule, LintRule::R3);
    assert_eq!(findings[0].message, "user dan never speaks");

    // R4: seven of twelve turns changed
    let mut d = draft.clone();
    for i in [0, 1, 2, 3, 5, 6] {
        d.apply(&tree, DraftCommand::EditText { index: i, text: format!("rewritten {i}") }, &clock).unwrap();
    }
    assert_eq!(rules(&d, &tree), [(LintRule::R4, None)]);
    // six of twelve is exactly half and passes
    d.apply(&tree, DraftCommand::Remove { index: 0 }, &clock).unwrap();
    d.apply(&tree, DraftCommand::SetOpener { index: 0, opener: true }, &clock).unwrap();
    d.apply(
        &tree,
        DraftCommand::SetAddressees { index: 0, addressees: threadsmith_core::Addressees::Everyone },
        &clock,
    )
    .unwrap();
    d.apply(
        &tree,
        DraftCommand::Append { node_id: Some("1".into()), text: None, speaker: None, addressees: None, opener: false },
        &clock,
    )
    .unwrap();
    assert!(rules(&d, &tree).is_empty(), "{:?}", rules(&d, &tree));
}

#[test]
fn export_is_stable_and_carries_mentioned_profiles() {
    let (tree, draft) = fixtures();
    let a = export_conversation(&draft, &tree, false).unwrap();
    let b = export_conversation(&draft, &tree, false).unwrap();
    assert_eq!(a, b);
    let doc: Value = serde_json::from_slice(&a).unwrap();
    let users: BTreeSet<&str> = doc["users"].as_array().unwrap().iter().map(|u| u["id"].as_str().unwrap()).collect();
    assert_eq!(users, BTreeSet::from(["ana", "ben", "cleo"]));
    let ben = doc["users"].as_array().unwrap().iter().find(|u| u["id"] == "ben").unwrap();
    assert_eq!(ben["description"], DEFAULT_USER_DESCRIPTION);
    assert!(doc["turns"][4].get("edit_log").is_none());
}

#[test]
fn every_llm_call_path_uses_its_preset() {
    let (tree, draft) = fixtures();
    let clock = ManualClock::at_epoch_secs(0);
    let flaky_then_ok = {
        let calls = std::sync::atomic::AtomicUsize::new(0);
        FnTransport(move |_: &GenerationConfig, system: &str, _: &str| {
            if calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst).is_multiple_of(2) {
                return Err(TransportError::retryable("busy"));
            }
            if system.starts_with(&prompts::normalize_system(None)) {
                Ok(TREE.to_string())
            } else {
                Ok("fine".to_string())
            }
        })
    };
    let spy = SpyTransport::new(flaky_then_ok);
    let retrying = RetryingTransport::new(&spy, RetryPolicy::no_delay(2));

    normalize_tree(&retrying, TREE.as_bytes()).unwrap();
    let evidence = select_profile_evidence(&draft, &tree, "ben").unwrap();
    refine_profile(&retrying, &tree.users["ben"], &evidence).unwrap();
    let c = RefinementConstraints::new(Style::Exuberant, Temperament::Expressive, Length::SameLength);
    refine_message(&retrying, &draft, &tree, 3, c, &clock).unwrap();

    let configs = spy.configs();
    assert_eq!(configs.len(), 6);
    let expected = [
        GenerationConfig::NORMALIZE,
        GenerationConfig::NORMALIZE,
        GenerationConfig::PROFILE,
        GenerationConfig::PROFILE,
        GenerationConfig::REFINE,
        GenerationConfig::REFINE,
    ];
    assert_eq!(configs, expected);
    let t = |c: GenerationConfig| (c.temperature, c.top_p, c.max_tokens, c.seed);
    assert_eq!(t(GenerationConfig::NORMALIZE), (0.0, 0.7, 8192, 42));
    assert_eq!(t(GenerationConfig::PROFILE), (1.2, 0.9, 2048, 42));
    assert_eq!(t(GenerationConfig::REFINE), (0.7, 0.9, 512, 42));
}

fn scripted_generator() -> FnTransport<impl Fn(&GenerationConfig, &str, &str) -> Result<String, TransportError>> {
    let users_system = prompts::fill(USERS_SYSTEM.text, &[]);
    FnTransport(move |cfg: &GenerationConfig, system: &str, user: &str| {
        if system == users_system {
            let n = user.lines().filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit())).count();
            let defs: Vec<Value> = (0..n)
                .map(|i| serde_json::json!({"name": format!("P{i}"), "description": format!("persona {i}")}))
                .collect();
            Ok(Value::Array(defs).to_string())
        } else {
            Ok(format!("message with seed {}", cfg.seed))
        }
    })
}

#[test]
fn recorded_generation_replays_from_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let spec = GenerationSpec::new("Four-day week", 3, 3, 11);
    let recorder = RecordingTransport::new(scripted_generator(), dir.path());
    let live = generate_tree(&recorder, &spec).unwrap();
    assert_eq!(live.len(), 13);
    let replay = generate_tree(&FixtureTransport::new(dir.path()), &spec).unwrap();
    assert_eq!(live, replay);
    let reparsed = parse_discussion(&live.to_json()).unwrap();
    assert_eq!(reparsed, live);
    assert_ne!(prompts::fill(PROFILE_SYSTEM.text, &[]), prompts::fill(USERS_SYSTEM.text, &[]));
}

#[test]
fn judgment_fixture_report() {
    let judgments = read_judgments(JUDGMENTS.as_bytes()).unwrap();
    assert_eq!(judgments.len(), 32);
    let report = build_report(&judgments, WeightScheme::Linear, &[]);
    assert_eq!(report.rows.len(), 1);
    let row = &report.rows[0];
    assert_eq!((row.pct_a, row.pct_b, row.pct_tie), (65.62, 28.13, 6.25));
    let text = render_report(&report);
    assert!(text.lines().nth(1).unwrap().contains("65.62"));
}
