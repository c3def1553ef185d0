//! Reply trees, conversation drafts, LLM-assisted refinement, synthetic debate
//! generation and annotator agreement metrics.

pub mod clock;
pub mod draft;
pub mod eval;
pub mod llm;
pub mod synth;
pub mod tree;

pub use clock::{Clock, ManualClock, SystemClock};
pub use draft::{
    create_draft, export_conversation, lint_draft, Addressees, DraftCommand, DraftConversation, DraftError,
    DraftStatus, LintConfig, LintFinding, LintRule, Provenance, Turn, TurnSource,
};
pub use eval::{
    build_report, preference_percentages, render_report, token_speed, turn_speed, weighted_cohen_kappa,
    AgreementReport, Dimension, EvalError, PairwiseJudgment, SessionRecord, Verdict, WeightScheme,
};
pub use llm::refine::{Decision, LlmError, RefinementSuggestion};
pub use synth::{expected_node_count, generate_tree, GenerationSpec, SynthError};
pub use tree::{parse_discussion, MessageNode, ReplyTree, SpeakerProfile, Stance, TreeError, DEFAULT_USER_DESCRIPTION};
