//! Input builders shared by the criterion benchmarks.

use threadsmith_core::eval::Verdict;
use threadsmith_core::llm::mock::FnTransport;
use threadsmith_core::llm::prompts::{fill, USERS_SYSTEM};
use threadsmith_core::llm::{ChatTransport, GenerationConfig};

pub const DEBATE_TREE: &str = include_str!("../../core/tests/fixtures/debate_tree.json");
pub const COMPLIANT_DRAFT: &str = include_str!("../../core/tests/fixtures/compliant_draft.json");

/// A discussion file where node `i` replies to node `(i - 1) / fanout`.
pub fn wide_discussion(nodes: usize, fanout: usize) -> String {
    let items: Vec<String> = (0..nodes)
        .map(|i| {
            let parent = if i == 0 { String::new() } else { format!(",\"parent\":\"n{}\"", (i - 1) / fanout) };
            format!("{{\"id\":\"n{i}\",\"author\":\"u{}\",\"text\":\"message number {i}\"{parent}}}", i % 7)
        })
        .collect();
    format!("{{\"tree_id\":\"bench\",\"nodes\":[{}]}}", items.join(","))
}

/// Deterministic verdict sequence for two raters.
pub fn verdict_pairs(n: usize) -> (Vec<Verdict>, Vec<Verdict>) {
    let pick = |x: usize| Verdict::ALL[x % 3];
    (0..n).map(|i| (pick(i * 7 + 1), pick(i * 5 + i / 3))).unzip()
}

/// Offline model: persona lists for user definition, a seed-stamped line otherwise.
pub fn offline_generator() -> impl ChatTransport {
    let users_system = fill(USERS_SYSTEM.text, &[]);
    FnTransport(move |cfg: &GenerationConfig, system: &str, user: &str| {
        if system == users_system {
            let n = user.lines().filter(|l| l.starts_with(|c: char| c.is_ascii_digit())).count();
            let defs: Vec<String> =
                (0..n).map(|i| format!("{{\"name\":\"P{i}\",\"description\":\"persona {i}\"}}")).collect();
            Ok(format!("[{}]", defs.join(",")))
        } else {
            Ok(format!("message {}", cfg.seed))
        }
    })
}
