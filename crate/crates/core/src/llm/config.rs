use serde::{Deserialize, Serialize};

/// Sampling parameters sent with every completion request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    pub seed: i64,
}

impl GenerationConfig {
    /// Tree repair: deterministic, long output.
    pub const NORMALIZE: GenerationConfig =
        GenerationConfig { temperature: 0.0, top_p: 0.7, max_tokens: 8192, seed: 42 };

    /// Speaker profiling: expressive.
    pub const PROFILE: GenerationConfig = GenerationConfig { temperature: 1.2, top_p: 0.9, max_tokens: 2048, seed: 42 };

    /// Single-message rewrite.
    pub const REFINE: GenerationConfig = GenerationConfig { temperature: 0.7, top_p: 0.9, max_tokens: 512, seed: 42 };

    /// Synthetic debate replies. The seed is replaced per node.
    pub const GENERATE: GenerationConfig = GenerationConfig { temperature: 1.0, top_p: 0.9, max_tokens: 512, seed: 42 };

    pub fn with_seed(self, seed: i64) -> Self {
        GenerationConfig { seed, ..self }
    }

    pub fn is_valid(&self) -> bool {
        self.temperature >= 0.0 && self.top_p > 0.0 && self.top_p <= 1.0 && self.max_tokens > 0
    }
}
