use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Error)]
pub enum CassetteError {
    #[error("cassette io at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cassette index {path} is malformed: {reason}")]
    Index { path: PathBuf, reason: String },
    #[error("`{0}` is not a request digest")]
    BadDigest(String),
}

/// Metadata kept in the index for each recorded reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub kind: String,
    pub model: String,
    pub prompt_sha256: String,
    pub bytes: u64,
    /// Sampling parameters in force; we always send provider defaults.
    pub sampling: String,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Index {
    entries: BTreeMap<String, CassetteEntry>,
}

/// Directory of recorded replies: one file per request digest holding the raw
/// reply bytes, plus `index.json` describing each entry.
#[derive(Debug, Clone)]
pub struct Cassette {
    dir: PathBuf,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CassetteError + '_ {
    move |source| CassetteError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn check_digest(digest: &str) -> Result<(), CassetteError> {
    if digest.len() == 64 && digest.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()) {
        Ok(())
    } else {
        Err(CassetteError::BadDigest(digest.to_string()))
    }
}

impl Cassette {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn get(&self, digest: &str) -> Result<Option<Vec<u8>>, CassetteError> {
        check_digest(digest)?;
        let path = self.dir.join(digest);
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    pub fn put(&self, digest: &str, body: &[u8], entry: CassetteEntry) -> Result<(), CassetteError> {
        check_digest(digest)?;
        fs::create_dir_all(&self.dir).map_err(io_err(&self.dir))?;
        write_atomic(&self.dir.join(digest), body)?;
        let mut index = self.read_index()?;
        index.entries.insert(digest.to_string(), entry);
        let json = serde_json::to_vec_pretty(&index).expect("index serializes");
        write_atomic(&self.dir.join(INDEX_FILE), &json)
    }

    pub fn entries(&self) -> Result<BTreeMap<String, CassetteEntry>, CassetteError> {
        Ok(self.read_index()?.entries)
    }

    fn read_index(&self) -> Result<Index, CassetteError> {
        let path = self.dir.join(INDEX_FILE);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| CassetteError::Index {
                path,
                reason: e.to_string(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Index::default()),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CassetteError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}
