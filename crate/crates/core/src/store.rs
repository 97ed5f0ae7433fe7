//! On-disk dataset directories and the append-only spec store.
//!
//! A dataset directory holds `schema.json`, `records.ndjson` (both in
//! ingestible form) and `dataset.json` with the handle metadata. Specs live
//! under `specs/<id>/<version>.json` as canonical text.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ingest, Dataset, IngestError};
use crate::spec::{serialize_spec, MatrixSpec};

pub const SCHEMA_FILE: &str = "schema.json";
pub const RECORDS_FILE: &str = "records.ndjson";
pub const META_FILE: &str = "dataset.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Ingest {
        path: PathBuf,
        source: IngestError,
    },
    #[error("{path}: malformed metadata: {source}")]
    Meta {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid spec id {0:?}")]
    InvalidSpecId(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Metadata identifying a stored dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHandle {
    pub id: String,
    pub name: String,
    pub n: usize,
    pub schema_digest: String,
}

impl DatasetHandle {
    pub fn for_dataset(id: impl Into<String>, name: impl Into<String>, ds: &Dataset) -> Self {
        DatasetHandle {
            id: id.into(),
            name: name.into(),
            n: ds.len(),
            schema_digest: ds.schema_digest(),
        }
    }
}

pub fn write_dataset_dir(dir: &Path, ds: &Dataset, handle: &DatasetHandle) -> Result<(), StoreError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let schema = dir.join(SCHEMA_FILE);
    fs::write(&schema, ds.schema_json()).map_err(io_err(&schema))?;
    let records = dir.join(RECORDS_FILE);
    let file = fs::File::create(&records).map_err(io_err(&records))?;
    let mut out = BufWriter::new(file);
    ds.write_records(&mut out)
        .and_then(|_| out.flush())
        .map_err(io_err(&records))?;
    let meta = dir.join(META_FILE);
    let text = serde_json::to_string(handle).expect("handle serializes");
    fs::write(&meta, text).map_err(io_err(&meta))
}

/// Loads a dataset directory. Without `dataset.json` (for example a
/// directory assembled by hand) id and name are the directory name.
pub fn load_dataset_dir(dir: &Path) -> Result<(Dataset, DatasetHandle), StoreError> {
    let schema_path = dir.join(SCHEMA_FILE);
    let records_path = dir.join(RECORDS_FILE);
    let schema = fs::read(&schema_path).map_err(io_err(&schema_path))?;
    let records = fs::read(&records_path).map_err(io_err(&records_path))?;
    let ds = ingest(&schema, &records).map_err(|source| StoreError::Ingest {
        path: dir.to_path_buf(),
        source,
    })?;
    let meta_path = dir.join(META_FILE);
    let handle = match fs::read(&meta_path) {
        Ok(bytes) => {
            let mut handle: DatasetHandle =
                serde_json::from_slice(&bytes).map_err(|source| StoreError::Meta {
                    path: meta_path.clone(),
                    source,
                })?;
            handle.n = ds.len();
            handle.schema_digest = ds.schema_digest();
            handle
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let id = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            DatasetHandle::for_dataset(id.clone(), id, &ds)
        }
        Err(e) => return Err(io_err(&meta_path)(e)),
    };
    Ok((ds, handle))
}

pub fn valid_spec_id(id: &str) -> bool {
    (1..=128).contains(&id.len())
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Versioned spec storage. Saving never overwrites an earlier version.
#[derive(Debug, Clone)]
pub struct SpecStore {
    root: PathBuf,
}

impl SpecStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        SpecStore { root: root.into() }
    }

    fn dir(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !valid_spec_id(id) {
            return Err(StoreError::InvalidSpecId(id.to_string()));
        }
        Ok(self.root.join(id))
    }

    pub fn versions(&self, id: &str) -> Result<Vec<u64>, StoreError> {
        let dir = self.dir(id)?;
        let entries = match fs::read_dir(&dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        let mut versions: Vec<u64> = entries
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                e.file_name()
                    .to_str()?
                    .strip_suffix(".json")?
                    .parse()
                    .ok()
            })
            .collect();
        versions.sort_unstable();
        Ok(versions)
    }

    /// Stores `spec` as the next version and returns its number (from 1).
    pub fn put(&self, id: &str, spec: &MatrixSpec) -> Result<u64, StoreError> {
        let dir = self.dir(id)?;
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let text = serialize_spec(spec);
        let mut version = self.versions(id)?.last().copied().unwrap_or(0) + 1;
        loop {
            let path = dir.join(format!("{version}.json"));
            match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut file) => {
                    file.write_all(text.as_bytes()).map_err(io_err(&path))?;
                    return Ok(version);
                }
                // lost a race with a concurrent writer
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => version += 1,
                Err(e) => return Err(io_err(&path)(e)),
            }
        }
    }

    /// Canonical text of a version, or of the latest when `version` is `None`.
    pub fn get(&self, id: &str, version: Option<u64>) -> Result<Option<(u64, String)>, StoreError> {
        let version = match version {
            Some(v) => v,
            None => match self.versions(id)?.last() {
                Some(&v) => v,
                None => return Ok(None),
            },
        };
        let path = self.dir(id)?.join(format!("{version}.json"));
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some((version, text))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}
