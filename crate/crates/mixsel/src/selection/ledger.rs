//! Append-only, hash-chained run ledger.
//!
//! Every line is a JSON record carrying the SHA-256 of the previous line, so
//! any edit to history breaks the chain. The first record is the run header;
//! decisions and round summaries follow. A partially written final line
//! (crash mid-append) is dropped on open; anything else that fails
//! verification is corruption.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{DecisionRecord, RoundRecord, RunHeader};

pub const GENESIS: &str = "0000000000000000000000000000000000000000000000000000000000000000";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LedgerRecord {
    Header(RunHeader),
    Decision(DecisionRecord),
    RoundComplete(RoundRecord),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LedgerLine {
    prev: String,
    #[serde(flatten)]
    record: LedgerRecord,
}

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("io error on ledger {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("ledger {path} is corrupt at line {line}: {reason}")]
    Corrupt {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("ledger {0} already exists")]
    AlreadyExists(String),
    #[error("ledger {0} is locked by another process")]
    Locked(String),
    #[error("ledger {0} is empty or missing its header record")]
    MissingHeader(String),
}

fn io_err(path: &Path, source: std::io::Error) -> LedgerError {
    LedgerError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn line_digest(line: &str) -> String {
    hex::encode(Sha256::digest(line.as_bytes()))
}

/// Verified ledger contents plus where the valid prefix ends.
pub struct LedgerContents {
    pub records: Vec<LedgerRecord>,
    pub last_digest: String,
    /// Byte length of the verified prefix; a torn trailing line sits past it.
    pub valid_len: u64,
}

/// Reads and verifies the whole chain. A final line that does not parse is
/// treated as a torn append and ignored; any mid-file damage is an error.
pub fn read_ledger(path: impl AsRef<Path>) -> Result<LedgerContents, LedgerError> {
    let path = path.as_ref();
    let contents = std::fs::read_to_string(path).map_err(|source| io_err(path, source))?;
    let mut records = Vec::new();
    let mut prev_digest = GENESIS.to_string();
    let mut valid_len = 0u64;
    let mut offset = 0usize;

    let segments: Vec<&str> = contents.split('\n').collect();
    let last_segment = segments.len().saturating_sub(1);
    for (idx, segment) in segments.iter().enumerate() {
        let is_last = idx == last_segment;
        let line_start = offset;
        offset += segment.len() + 1;
        if segment.is_empty() {
            continue;
        }
        let parsed: Result<LedgerLine, _> = serde_json::from_str(segment);
        let line = match parsed {
            Ok(line) => line,
            Err(err) if is_last => {
                // torn tail from an interrupted append; drop it
                let _ = err;
                break;
            }
            Err(err) => {
                return Err(LedgerError::Corrupt {
                    path: path.display().to_string(),
                    line: idx + 1,
                    reason: format!("unparseable record: {err}"),
                });
            }
        };
        if line.prev != prev_digest {
            return Err(LedgerError::Corrupt {
                path: path.display().to_string(),
                line: idx + 1,
                reason: "hash chain mismatch".to_string(),
            });
        }
        prev_digest = line_digest(segment);
        valid_len = (line_start + segment.len() + 1) as u64;
        records.push(line.record);
    }

    Ok(LedgerContents {
        records,
        last_digest: prev_digest,
        valid_len,
    })
}

/// Open handle for appending records. Holds an exclusive advisory lock for
/// its lifetime, so two processes cannot write the same run.
pub struct Ledger {
    path: PathBuf,
    file: File,
    last_digest: String,
}

impl Ledger {
    /// Creates a fresh ledger; refuses to clobber an existing one.
    pub fn create(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        let path = path.as_ref();
        if path.exists() {
            return Err(LedgerError::AlreadyExists(path.display().to_string()));
        }
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|source| io_err(path, source))?;
            }
        }
        let file = OpenOptions::new()
            .create_new(true)
            .write(true)
            .open(path)
            .map_err(|source| io_err(path, source))?;
        lock_exclusive(&file, path)?;
        Ok(Ledger {
            path: path.to_path_buf(),
            file,
            last_digest: GENESIS.to_string(),
        })
    }

    /// Opens an existing ledger for appending, truncating a torn final line
    /// left by a crash.
    pub fn open_append(path: impl AsRef<Path>) -> Result<(Self, Vec<LedgerRecord>), LedgerError> {
        let path = path.as_ref();
        let contents = read_ledger(path)?;
        let file = OpenOptions::new()
            .write(true)
            .open(path)
            .map_err(|source| io_err(path, source))?;
        lock_exclusive(&file, path)?;
        file.set_len(contents.valid_len)
            .map_err(|source| io_err(path, source))?;
        let mut file = file;
        use std::io::Seek;
        file.seek(std::io::SeekFrom::End(0))
            .map_err(|source| io_err(path, source))?;
        Ok((
            Ledger {
                path: path.to_path_buf(),
                file,
                last_digest: contents.last_digest,
            },
            contents.records,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, record: LedgerRecord) -> Result<(), LedgerError> {
        let line = LedgerLine {
            prev: self.last_digest.clone(),
            record,
        };
        let serialized = serde_json::to_string(&line).expect("ledger records serialize");
        self.file
            .write_all(serialized.as_bytes())
            .and_then(|_| self.file.write_all(b"\n"))
            .and_then(|_| self.file.flush())
            .map_err(|source| io_err(&self.path, source))?;
        self.last_digest = line_digest(&serialized);
        Ok(())
    }
}

#[cfg(unix)]
fn lock_exclusive(file: &File, path: &Path) -> Result<(), LedgerError> {
    use std::os::unix::io::AsRawFd;
    let rc = unsafe { libc::flock(file.as_raw_fd(), libc::LOCK_EX | libc::LOCK_NB) };
    if rc != 0 {
        return Err(LedgerError::Locked(path.display().to_string()));
    }
    Ok(())
}

#[cfg(not(unix))]
fn lock_exclusive(_file: &File, _path: &Path) -> Result<(), LedgerError> {
    Ok(())
}
