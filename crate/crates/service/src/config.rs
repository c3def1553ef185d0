//! Service settings from `LLMBERJACK_*` environment variables and an optional TOML file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_BASE_URL: &str = "https://api.groq.com/openai/v1";
pub const DEFAULT_MODEL: &str = "meta-llama/llama-4-maverick-17b-128e-instruct";

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: String,
    pub llm_base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    /// Allowed browser origins; empty means any.
    pub cors_origins: Vec<String>,
    /// Replay completions from this directory instead of calling the API.
    pub mock_fixtures: Option<PathBuf>,
    pub timeout_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            data_dir: PathBuf::from("data"),
            bind: DEFAULT_BIND.to_string(),
            llm_base_url: DEFAULT_BASE_URL.to_string(),
            model: DEFAULT_MODEL.to_string(),
            api_key: None,
            cors_origins: Vec::new(),
            mock_fixtures: None,
            timeout_secs: 60,
        }
    }
}

/// Keys accepted in the config file; every one is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileOverrides {
    data_dir: Option<PathBuf>,
    bind: Option<String>,
    llm_base_url: Option<String>,
    model: Option<String>,
    api_key: Option<String>,
    cors_origins: Option<Vec<String>>,
    mock_fixtures: Option<PathBuf>,
    timeout_secs: Option<u64>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl ServiceConfig {
    /// Reads settings through `lookup`, so tests need not touch the process environment.
    pub fn from_vars(lookup: impl Fn(&str) -> Option<String>) -> Self {
        let mut c = ServiceConfig::default();
        let get = |k: &str| lookup(k).filter(|v| !v.trim().is_empty());
        if let Some(v) = get("LLMBERJACK_DATA_DIR") {
            c.data_dir = PathBuf::from(v);
        }
        if let Some(v) = get("LLMBERJACK_BIND") {
            c.bind = v;
        }
        if let Some(v) = get("LLMBERJACK_LLM_BASE_URL") {
            c.llm_base_url = v;
        }
        if let Some(v) = get("LLMBERJACK_MODEL") {
            c.model = v;
        }
        c.api_key = get("LLMBERJACK_API_KEY");
        c
    }

    pub fn from_env() -> Self {
        Self::from_vars(|k| std::env::var(k).ok())
    }

    /// Applies the keys present in a TOML document on top of `self`.
    pub fn merge_toml(mut self, text: &str) -> Result<Self, ConfigError> {
        let o: FileOverrides = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        if let Some(v) = o.data_dir {
            self.data_dir = v;
        }
        if let Some(v) = o.bind {
            self.bind = v;
        }
        if let Some(v) = o.llm_base_url {
            self.llm_base_url = v;
        }
        if let Some(v) = o.model {
            self.model = v;
        }
        if let Some(v) = o.api_key {
            self.api_key = Some(v);
        }
        if let Some(v) = o.cors_origins {
            self.cors_origins = v;
        }
        if let Some(v) = o.mock_fixtures {
            self.mock_fixtures = Some(v);
        }
        if let Some(v) = o.timeout_secs {
            self.timeout_secs = v;
        }
        Ok(self)
    }

    pub fn load(file: Option<&Path>) -> Result<Self, ConfigError> {
        let base = Self::from_env();
        match file {
            None => Ok(base),
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|e| ConfigError(format!("cannot read {}: {e}", p.display())))?;
                base.merge_toml(&text)
            }
        }
    }
}
