//! Flat-file document store: one JSON document plus one entry record per file.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    Discussion,
    Draft,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub file_id: String,
    pub kind: FileKind,
    pub name: String,
    pub created_at: DateTime<Utc>,
    pub version: u64,
}

#[derive(Debug)]
pub enum StoreError {
    Exists(String),
    Missing(String),
    InvalidId(String),
    Io(io::Error),
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        StoreError::Io(e)
    }
}

impl std::fmt::Display for StoreError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StoreError::Exists(id) => write!(f, "file {id} already exists"),
            StoreError::Missing(id) => write!(f, "file {id} not found"),
            StoreError::InvalidId(id) => write!(f, "invalid file id {id:?}"),
            StoreError::Io(e) => write!(f, "storage error: {e}"),
        }
    }
}

impl std::error::Error for StoreError {}

/// Ids double as file names, so only a conservative character set is accepted.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

#[derive(Debug, Clone)]
pub struct FileStore {
    root: PathBuf,
}

impl FileStore {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("files"))?;
        fs::create_dir_all(root.join("raw"))?;
        Ok(FileStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn doc_path(&self, id: &str) -> PathBuf {
        self.root.join("files").join(format!("{id}.json"))
    }

    fn entry_path(&self, id: &str) -> PathBuf {
        self.root.join("files").join(format!("{id}.entry.json"))
    }

    fn raw_path(&self, id: &str) -> PathBuf {
        self.root.join("raw").join(format!("{id}.json"))
    }

    fn check(id: &str) -> Result<(), StoreError> {
        if valid_id(id) {
            Ok(())
        } else {
            Err(StoreError::InvalidId(id.to_string()))
        }
    }

    pub fn entry(&self, id: &str) -> Result<FileEntry, StoreError> {
        Self::check(id)?;
        match fs::read(self.entry_path(id)) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| StoreError::Io(io::Error::new(io::ErrorKind::InvalidData, e))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::Missing(id.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    pub fn contains(&self, id: &str) -> bool {
        valid_id(id) && self.entry_path(id).exists()
    }

    pub fn read(&self, id: &str) -> Result<(FileEntry, Vec<u8>), StoreError> {
        let entry = self.entry(id)?;
        let bytes = fs::read(self.doc_path(id))?;
        Ok((entry, bytes))
    }

    /// Entries ordered by creation time, then id.
    pub fn list(&self) -> Result<Vec<FileEntry>, StoreError> {
        let mut out = Vec::new();
        for item in fs::read_dir(self.root.join("files"))? {
            let name = item?.file_name();
            let Some(id) = name.to_str().and_then(|n| n.strip_suffix(".entry.json")) else {
                continue;
            };
            out.push(self.entry(id)?);
        }
        out.sort_by(|a, b| (a.created_at, &a.file_id).cmp(&(b.created_at, &b.file_id)));
        Ok(out)
    }

    pub fn create(
        &self,
        kind: FileKind,
        id: &str,
        name: &str,
        bytes: &[u8],
        version: u64,
        now: DateTime<Utc>,
    ) -> Result<FileEntry, StoreError> {
        Self::check(id)?;
        if self.contains(id) {
            return Err(StoreError::Exists(id.to_string()));
        }
        let entry = FileEntry { file_id: id.to_string(), kind, name: name.to_string(), created_at: now, version };
        write_atomic(&self.doc_path(id), bytes)?;
        write_atomic(&self.entry_path(id), &serde_json::to_vec_pretty(&entry).expect("entry serializes"))?;
        Ok(entry)
    }

    /// Replaces the document and records `version`.
    pub fn update(&self, id: &str, bytes: &[u8], version: u64) -> Result<FileEntry, StoreError> {
        let mut entry = self.entry(id)?;
        entry.version = version;
        write_atomic(&self.doc_path(id), bytes)?;
        write_atomic(&self.entry_path(id), &serde_json::to_vec_pretty(&entry).expect("entry serializes"))?;
        Ok(entry)
    }

    pub fn put_raw(&self, id: &str, bytes: &[u8]) -> Result<(), StoreError> {
        Self::check(id)?;
        write_atomic(&self.raw_path(id), bytes)?;
        Ok(())
    }

    pub fn read_raw(&self, id: &str) -> Result<Vec<u8>, StoreError> {
        Self::check(id)?;
        match fs::read(self.raw_path(id)) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::Missing(id.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    /// Hash over every stored byte, for detecting unintended writes.
    pub fn digest(&self) -> io::Result<String> {
        let mut paths = Vec::new();
        for sub in ["files", "raw"] {
            for item in fs::read_dir(self.root.join(sub))? {
                paths.push(item?.path());
            }
        }
        paths.sort();
        let mut h = Sha256::new();
        for p in paths {
            h.update(p.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(fs::read(&p)?);
            h.update([0]);
        }
        Ok(hex::encode(h.finalize()))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", uuid::Uuid::new_v4().simple()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn now() -> DateTime<Utc> {
        DateTime::from_timestamp(1_700_000_000, 0).unwrap()
    }

    #[test]
    fn create_read_update_list() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        let e = store.create(FileKind::Discussion, "t1", "first", b"{}", 0, now()).unwrap();
        assert_eq!(e.version, 0);
        assert!(matches!(
            store.create(FileKind::Discussion, "t1", "again", b"{}", 0, now()),
            Err(StoreError::Exists(_))
        ));
        store.update("t1", b"{\"a\":1}", 1).unwrap();
        let (entry, bytes) = store.read("t1").unwrap();
        assert_eq!(entry.version, 1);
        assert_eq!(bytes, b"{\"a\":1}");
        assert_eq!(store.list().unwrap().len(), 1);
    }

    #[test]
    fn rejects_path_like_ids() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        for bad in ["../x", "a/b", "", ".hidden"] {
            assert!(matches!(store.entry(bad), Err(StoreError::InvalidId(_))), "{bad}");
        }
        assert!(matches!(store.entry("nope"), Err(StoreError::Missing(_))));
    }

    #[test]
    fn digest_tracks_writes() {
        let dir = tempfile::tempdir().unwrap();
        let store = FileStore::open(dir.path()).unwrap();
        let before = store.digest().unwrap();
        assert_eq!(before, store.digest().unwrap());
        store.put_raw("r", b"x").unwrap();
        assert_ne!(before, store.digest().unwrap());
    }
}
