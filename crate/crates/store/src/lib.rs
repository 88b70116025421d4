//! Workspace persistence.
//!
//! Layout under the store root, one directory per workspace:
//!
//! ```text
//! <root>/<workspace_id>/
//!     manifest.json          current state, rasters replaced by file names
//!     drawing.png
//!     notation.png
//!     frames/<index>.png
//!     history/<digest>.snap  canonical workspace JSON, named by its SHA-256
//!     history/meta/<snapshot_id>.json
//!     .lock                  present while a writer holds the workspace
//! ```
//!
//! Every file is written to a temporary name and renamed into place. Snapshot
//! blobs and metadata are never rewritten once created.

use std::fs;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use notana_core::digest::sha256_hex;
use notana_core::raster::Raster;
use notana_core::workspace::{is_valid_workspace_id, Workspace, WorkspaceError};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DRAWING_FILE: &str = "drawing.png";
pub const NOTATION_FILE: &str = "notation.png";
pub const LOCK_FILE: &str = ".lock";
pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("snapshot {snapshot_id} failed its integrity check: recorded digest {expected}, content digest {actual}")]
    Integrity {
        snapshot_id: String,
        expected: String,
        actual: String,
    },
    #[error("workspace {0} is locked by another writer")]
    Locked(String),
    #[error("storage full while writing {0}")]
    StorageFull(PathBuf),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serialization(String),
    #[error(transparent)]
    Invalid(#[from] WorkspaceError),
}

fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| match source.kind() {
        ErrorKind::StorageFull => StoreError::StorageFull(path.to_path_buf()),
        ErrorKind::NotFound => StoreError::NotFound(path.display().to_string()),
        _ => StoreError::Io {
            path: path.to_path_buf(),
            source,
        },
    }
}

/// Source of timestamps; injectable so demos and tests are reproducible.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Starts at a fixed instant and advances one second per reading.
#[derive(Debug)]
pub struct SteppingClock {
    start: DateTime<Utc>,
    ticks: AtomicI64,
}

impl SteppingClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self {
            start,
            ticks: AtomicI64::new(0),
        }
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> DateTime<Utc> {
        self.start + Duration::seconds(self.ticks.fetch_add(1, Ordering::SeqCst))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub snapshot_id: String,
    pub workspace_id: String,
    pub taken_at: DateTime<Utc>,
    /// SHA-256 of the canonical workspace serialization.
    pub digest: String,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub meta: SnapshotMeta,
    pub workspace: Workspace,
}

/// Holds a workspace's advisory lock; released on drop.
#[derive(Debug)]
pub struct WriteLock {
    path: PathBuf,
}

impl Drop for WriteLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Clone)]
pub struct Store {
    root: PathBuf,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish()
    }
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Self::with_clock(root, Arc::new(SystemClock))
    }

    pub fn with_clock(root: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_at(&root))?;
        Ok(Self { root, clock })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn dir(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !is_valid_workspace_id(id) {
            return Err(StoreError::Invalid(WorkspaceError::InvalidId(id.to_string())));
        }
        Ok(self.root.join(id))
    }

    pub fn exists(&self, id: &str) -> bool {
        self.dir(id).is_ok_and(|d| d.join(MANIFEST_FILE).is_file())
    }

    /// Ids of every stored workspace, sorted.
    pub fn list_workspaces(&self) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(io_at(&self.root))? {
            let entry = entry.map_err(io_at(&self.root))?;
            let name = entry.file_name().to_string_lossy().to_string();
            if self.exists(&name) {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Takes the single-writer lock for a workspace.
    pub fn lock(&self, id: &str) -> Result<WriteLock, StoreError> {
        let dir = self.dir(id)?;
        fs::create_dir_all(&dir).map_err(io_at(&dir))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WriteLock { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(StoreError::Locked(id.to_string())),
            Err(e) => Err(io_at(&path)(e)),
        }
    }

    /// Writes the current state (manifest plus PNG files).
    pub fn write(&self, ws: &Workspace) -> Result<(), StoreError> {
        ws.validate()?;
        let _lock = self.lock(&ws.id)?;
        self.write_unlocked(ws)
    }

    fn write_unlocked(&self, ws: &Workspace) -> Result<(), StoreError> {
        let dir = self.dir(&ws.id)?;
        let frames_dir = dir.join("frames");
        fs::create_dir_all(&frames_dir).map_err(io_at(&frames_dir))?;
        write_atomic(&dir.join(DRAWING_FILE), &encode(&ws.drawing)?)?;
        write_atomic(&dir.join(NOTATION_FILE), &encode(&ws.notation)?)?;
        let mut keep = Vec::new();
        for frame in &ws.frames {
            if let Some(image) = &frame.image {
                let name = format!("{}.png", frame.index);
                write_atomic(&frames_dir.join(&name), &encode(image)?)?;
                keep.push(name);
            }
        }
        for entry in fs::read_dir(&frames_dir).map_err(io_at(&frames_dir))? {
            let entry = entry.map_err(io_at(&frames_dir))?;
            let name = entry.file_name().to_string_lossy().to_string();
            if !keep.contains(&name) {
                let _ = fs::remove_file(entry.path());
            }
        }
        let manifest = manifest_value(ws)?;
        let bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| StoreError::Serialization(e.to_string()))?;
        write_atomic(&dir.join(MANIFEST_FILE), &bytes)
    }

    /// Reads the current state back.
    pub fn read(&self, id: &str) -> Result<Workspace, StoreError> {
        let dir = self.dir(id)?;
        let path = dir.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            ErrorKind::NotFound => StoreError::NotFound(format!("workspace {id}")),
            _ => io_at(&path)(e),
        })?;
        let mut manifest: Value =
            serde_json::from_slice(&bytes).map_err(|e| StoreError::Serialization(e.to_string()))?;
        let object = manifest
            .as_object_mut()
            .ok_or_else(|| StoreError::Serialization("manifest is not an object".into()))?;
        object.remove("format");
        for key in ["drawing", "notation"] {
            let file = object
                .get(key)
                .and_then(Value::as_str)
                .ok_or_else(|| StoreError::Serialization(format!("manifest lacks {key}")))?
                .to_string();
            object.insert(key.to_string(), raster_value(&dir.join(file))?);
        }
        if let Some(frames) = object.get_mut("frames").and_then(Value::as_array_mut) {
            for frame in frames {
                if let Some(file) = frame.get("image").and_then(Value::as_str).map(str::to_string) {
                    frame["image"] = raster_value(&dir.join(file))?;
                }
            }
        }
        let ws: Workspace =
            serde_json::from_value(manifest).map_err(|e| StoreError::Serialization(e.to_string()))?;
        Ok(ws)
    }

    /// Writes the current state and appends an immutable history snapshot.
    pub fn save(&self, ws: &Workspace) -> Result<SnapshotMeta, StoreError> {
        ws.validate()?;
        let _lock = self.lock(&ws.id)?;
        self.write_unlocked(ws)?;

        let dir = self.dir(&ws.id)?;
        let meta_dir = dir.join("history").join("meta");
        fs::create_dir_all(&meta_dir).map_err(io_at(&meta_dir))?;
        let blob = ws.canonical_bytes();
        let digest = sha256_hex(&blob);
        let blob_path = dir.join("history").join(format!("{digest}.snap"));
        if !blob_path.exists() {
            write_atomic(&blob_path, &blob)?;
        }

        let seq = self.history_metas(&ws.id)?.iter().map(|m| m.seq).max().unwrap_or(0) + 1;
        let meta = SnapshotMeta {
            snapshot_id: format!("snap-{seq:04}"),
            workspace_id: ws.id.clone(),
            taken_at: self.clock.now(),
            digest,
            seq,
        };
        let path = meta_dir.join(format!("{}.json", meta.snapshot_id));
        let bytes = serde_json::to_vec_pretty(&meta).map_err(|e| StoreError::Serialization(e.to_string()))?;
        let mut f = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(io_at(&path))?;
        f.write_all(&bytes).map_err(io_at(&path))?;
        f.sync_all().map_err(io_at(&path))?;
        Ok(meta)
    }

    fn history_metas(&self, id: &str) -> Result<Vec<SnapshotMeta>, StoreError> {
        let meta_dir = self.dir(id)?.join("history").join("meta");
        let entries = match fs::read_dir(&meta_dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_at(&meta_dir)(e)),
        };
        let mut metas = Vec::new();
        for entry in entries {
            let path = entry.map_err(io_at(&meta_dir))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let bytes = fs::read(&path).map_err(io_at(&path))?;
                let meta: SnapshotMeta = serde_json::from_slice(&bytes)
                    .map_err(|e| StoreError::Serialization(format!("{}: {e}", path.display())))?;
                metas.push(meta);
            }
        }
        Ok(metas)
    }

    /// Snapshot metadata, newest first.
    pub fn list_history(&self, id: &str) -> Result<Vec<SnapshotMeta>, StoreError> {
        let mut metas = self.history_metas(id)?;
        metas.sort_by(|a, b| b.taken_at.cmp(&a.taken_at).then(b.seq.cmp(&a.seq)));
        Ok(metas)
    }

    /// Loads a snapshot after checking its content against the recorded digest.
    pub fn load(&self, id: &str, snapshot_id: &str) -> Result<Snapshot, StoreError> {
        let meta = self
            .history_metas(id)?
            .into_iter()
            .find(|m| m.snapshot_id == snapshot_id)
            .ok_or_else(|| StoreError::NotFound(format!("snapshot {snapshot_id} of workspace {id}")))?;
        if meta.digest.len() != 64 || !meta.digest.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(StoreError::Integrity {
                snapshot_id: meta.snapshot_id,
                expected: meta.digest,
                actual: "unreadable digest".into(),
            });
        }
        let path = self.dir(id)?.join("history").join(format!("{}.snap", meta.digest));
        let blob = fs::read(&path).map_err(io_at(&path))?;
        let actual = sha256_hex(&blob);
        if actual != meta.digest {
            return Err(StoreError::Integrity {
                snapshot_id: meta.snapshot_id,
                expected: meta.digest,
                actual,
            });
        }
        let workspace: Workspace =
            serde_json::from_slice(&blob).map_err(|e| StoreError::Serialization(e.to_string()))?;
        Ok(Snapshot { meta, workspace })
    }

    /// Path of a stored frame PNG.
    pub fn frame_path(&self, id: &str, index: usize) -> Result<PathBuf, StoreError> {
        Ok(self.dir(id)?.join("frames").join(format!("{index}.png")))
    }
}

fn encode(r: &Raster) -> Result<Vec<u8>, StoreError> {
    r.encode_png().map_err(|e| StoreError::Serialization(e.to_string()))
}

/// Workspace JSON with rasters swapped for file names.
fn manifest_value(ws: &Workspace) -> Result<Value, StoreError> {
    let mut value = serde_json::to_value(ws).map_err(|e| StoreError::Serialization(e.to_string()))?;
    value["drawing"] = Value::from(DRAWING_FILE);
    value["notation"] = Value::from(NOTATION_FILE);
    value["format"] = Value::from(MANIFEST_FORMAT);
    if let Some(frames) = value["frames"].as_array_mut() {
        for frame in frames {
            if !frame["image"].is_null() {
                let index = frame["index"].as_u64().unwrap_or_default();
                frame["image"] = Value::from(format!("frames/{index}.png"));
            }
        }
    }
    Ok(value)
}

fn raster_value(path: &Path) -> Result<Value, StoreError> {
    let bytes = fs::read(path).map_err(io_at(path))?;
    let raster = Raster::decode_png(&bytes).map_err(|e| StoreError::Serialization(format!("{}: {e}", path.display())))?;
    serde_json::to_value(&raster).map_err(|e| StoreError::Serialization(e.to_string()))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    let mut f = fs::File::create(&tmp).map_err(io_at(&tmp))?;
    f.write_all(bytes).map_err(io_at(&tmp))?;
    f.sync_all().map_err(io_at(&tmp))?;
    drop(f);
    fs::rename(&tmp, path).map_err(io_at(path))
}
