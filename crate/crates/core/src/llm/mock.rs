//! Deterministic transports for tests, demos and offline runs.
//!
//! Fixture directories hold one `<key>.txt` file per canned completion. The
//! key is the SHA-256 of `system`, a NUL byte, and `user`; a file keyed by the
//! hash of `system` alone acts as a fallback for every prompt of that template.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::config::GenerationConfig;
use super::transport::{ChatTransport, TransportError};

pub fn prompt_key(system: &str, user: &str) -> String {
    let mut h = Sha256::new();
    h.update(system.as_bytes());
    h.update([0u8]);
    h.update(user.as_bytes());
    hex::encode(h.finalize())
}

pub fn system_key(system: &str) -> String {
    hex::encode(Sha256::digest(system.as_bytes()))
}

/// Replays completions from a fixture directory.
#[derive(Debug, Clone)]
pub struct FixtureTransport {
    dir: PathBuf,
}

impl FixtureTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureTransport { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn lookup(&self, system: &str, user: &str) -> Option<String> {
        [prompt_key(system, user), system_key(system)]
            .iter()
            .map(|k| self.dir.join(format!("{k}.txt")))
            .find_map(|p| fs::read_to_string(p).ok())
    }

    pub fn write_fixture(dir: &Path, key: &str, completion: &str) -> std::io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("{key}.txt"));
        fs::write(&path, completion)?;
        Ok(path)
    }
}

impl ChatTransport for FixtureTransport {
    fn complete(&self, _config: &GenerationConfig, system: &str, user: &str) -> Result<String, TransportError> {
        self.lookup(system, user).ok_or_else(|| {
            TransportError::fatal(format!("no fixture {} in {}", prompt_key(system, user), self.dir.display()))
        })
    }
}

/// Passes calls through and stores each completion as a fixture.
pub struct RecordingTransport<T> {
    inner: T,
    dir: PathBuf,
}

impl<T> RecordingTransport<T> {
    pub fn new(inner: T, dir: impl Into<PathBuf>) -> Self {
        RecordingTransport { inner, dir: dir.into() }
    }
}

impl<T: ChatTransport> ChatTransport for RecordingTransport<T> {
    fn complete(&self, config: &GenerationConfig, system: &str, user: &str) -> Result<String, TransportError> {
        let text = self.inner.complete(config, system, user)?;
        FixtureTransport::write_fixture(&self.dir, &prompt_key(system, user), &text)
            .map_err(|e| TransportError::fatal(format!("cannot record fixture: {e}")))?;
        Ok(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedCall {
    pub config: GenerationConfig,
    pub system: String,
    pub user: String,
}

/// Records every call before delegating.
pub struct SpyTransport<T> {
    inner: T,
    calls: Mutex<Vec<RecordedCall>>,
}

impl<T> SpyTransport<T> {
    pub fn new(inner: T) -> Self {
        SpyTransport { inner, calls: Mutex::new(Vec::new()) }
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.calls.lock().unwrap().clone()
    }

    pub fn configs(&self) -> Vec<GenerationConfig> {
        self.calls.lock().unwrap().iter().map(|c| c.config).collect()
    }
}

impl<T: ChatTransport> ChatTransport for SpyTransport<T> {
    fn complete(&self, config: &GenerationConfig, system: &str, user: &str) -> Result<String, TransportError> {
        self.calls.lock().unwrap().push(RecordedCall {
            config: *config,
            system: system.to_string(),
            user: user.to_string(),
        });
        self.inner.complete(config, system, user)
    }
}

/// Closure-backed transport.
pub struct FnTransport<F>(pub F);

impl<F> ChatTransport for FnTransport<F>
where
    F: Fn(&GenerationConfig, &str, &str) -> Result<String, TransportError> + Send + Sync,
{
    fn complete(&self, config: &GenerationConfig, system: &str, user: &str) -> Result<String, TransportError> {
        (self.0)(config, system, user)
    }
}

/// Always returns the same text.
#[derive(Debug, Clone)]
pub struct CannedTransport(pub String);

impl ChatTransport for CannedTransport {
    fn complete(&self, _: &GenerationConfig, _: &str, _: &str) -> Result<String, TransportError> {
        Ok(self.0.clone())
    }
}

/// Returns the user prompt unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoUserTransport;

impl ChatTransport for EchoUserTransport {
    fn complete(&self, _: &GenerationConfig, _: &str, user: &str) -> Result<String, TransportError> {
        Ok(user.to_string())
    }
}

/// Fails every call with the given error.
#[derive(Debug, Clone)]
pub struct FailingTransport(pub TransportError);

impl ChatTransport for FailingTransport {
    fn complete(&self, _: &GenerationConfig, _: &str, _: &str) -> Result<String, TransportError> {
        Err(self.0.clone())
    }
}
