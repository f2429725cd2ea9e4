//! Append-only, hash-chained release ledger.
//!
//! The ledger file holds one record per line as canonical compact JSON.
//! Record `i` stores the hash of record `i − 1` (32 zero bytes for the
//! first), and its own hash over all other fields, so editing, dropping or
//! reordering any line breaks verification at that line.

pub mod account;
pub mod record;

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use account::{Account, AccountBook, AccountId, FeeSchedule};
pub use record::{query_id_for, RecordDraft, ReleaseRecord};

use crate::digest::Hash256;
use crate::fault::FaultPoint;
use crate::query::{canonical_key, QueryKey};

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("ledger I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("ledger is broken at record {index}: {reason}")]
    Broken { index: u64, reason: String },
    #[error("record does not extend the chain: {0}")]
    InvalidRecord(String),
    #[error("insufficient funds in {account}: balance {balance}, fee {fee}")]
    InsufficientFunds {
        account: AccountId,
        balance: f64,
        fee: f64,
    },
    #[error("unknown account {0}")]
    UnknownAccount(AccountId),
    #[error("invalid account id {0:?}")]
    InvalidAccountId(String),
    #[error("invalid fee {0}")]
    InvalidFee(f64),
}

impl LedgerError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        LedgerError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

/// Result of checking a chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status")]
pub enum Verification {
    Ok {
        records: u64,
    },
    Broken {
        first_bad_index: u64,
        reason: String,
    },
}

impl Verification {
    pub fn is_ok(&self) -> bool {
        matches!(self, Verification::Ok { .. })
    }
}

/// Parses and checks `bytes` as a ledger file. Returns the records that
/// form a valid prefix along with the verdict for the whole input.
pub fn scan(bytes: &[u8]) -> (Vec<ReleaseRecord>, Verification) {
    let mut records = Vec::new();
    let mut prev = Hash256::ZERO;
    let mut rest = bytes;
    let mut index = 0u64;
    let broken = |records, index, reason: String| {
        (
            records,
            Verification::Broken {
                first_bad_index: index,
                reason,
            },
        )
    };
    while !rest.is_empty() {
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return broken(records, index, "truncated record (missing newline)".into());
        };
        let line = &rest[..nl];
        rest = &rest[nl + 1..];
        let Ok(text) = std::str::from_utf8(line) else {
            return broken(records, index, "invalid UTF-8".into());
        };
        let rec: ReleaseRecord = match serde_json::from_str(text) {
            Ok(r) => r,
            Err(e) => return broken(records, index, format!("unparseable record: {e}")),
        };
        if rec.to_json() != text {
            return broken(records, index, "non-canonical encoding".into());
        }
        if rec.index != index {
            return broken(records, index, format!("index field is {}", rec.index));
        }
        if rec.query_id != query_id_for(index) {
            return broken(
                records,
                index,
                format!("query id {:?} does not match index", rec.query_id),
            );
        }
        if rec.prev_hash != prev {
            return broken(
                records,
                index,
                "prev_hash does not match the previous record".into(),
            );
        }
        if rec.compute_hash() != rec.record_hash {
            return broken(records, index, "record_hash mismatch".into());
        }
        if canonical_key(&rec.query_descriptor) != rec.query_key {
            return broken(records, index, "query_key does not match descriptor".into());
        }
        prev = rec.record_hash;
        records.push(rec);
        index += 1;
    }
    (records, Verification::Ok { records: index })
}

pub fn verify_bytes(bytes: &[u8]) -> Verification {
    scan(bytes).1
}

pub fn verify_file(path: impl AsRef<Path>) -> Result<Verification, LedgerError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| LedgerError::io(path, e))?;
    Ok(verify_bytes(&bytes))
}

/// Loads every record of a ledger file, failing if the chain is broken.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<ReleaseRecord>, LedgerError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| LedgerError::io(path, e))?;
    match scan(&bytes) {
        (records, Verification::Ok { .. }) => Ok(records),
        (
            _,
            Verification::Broken {
                first_bad_index,
                reason,
            },
        ) => Err(LedgerError::Broken {
            index: first_bad_index,
            reason,
        }),
    }
}

/// Open handle on a ledger file with its records cached in memory.
#[derive(Debug)]
pub struct Ledger {
    path: PathBuf,
    file: File,
    records: Vec<ReleaseRecord>,
    by_key: HashMap<QueryKey, Vec<usize>>,
    committed_len: u64,
    sync: bool,
}

impl Ledger {
    /// Opens or creates the ledger at `path`. Any defect, including a
    /// partially written final line, is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        Self::open_inner(path.as_ref(), None)
    }

    /// Like [`open`](Ledger::open), but a partial final line is dropped when
    /// it belongs to record `pending`, the append that was in flight at
    /// crash time. Returns whether anything was truncated.
    pub fn open_recovering(
        path: impl AsRef<Path>,
        pending: Option<u64>,
    ) -> Result<(Self, bool), LedgerError> {
        let path = path.as_ref();
        let existed = path.exists();
        let ledger = Self::open_inner(path, pending)?;
        let truncated = existed
            && ledger
                .file
                .metadata()
                .map_err(|e| LedgerError::io(path, e))?
                .len()
                != ledger.committed_len;
        if truncated {
            ledger
                .file
                .set_len(ledger.committed_len)
                .map_err(|e| LedgerError::io(path, e))?;
            ledger
                .file
                .sync_all()
                .map_err(|e| LedgerError::io(path, e))?;
            tracing::warn!(index = pending, "dropped partially written ledger record");
        }
        Ok((ledger, truncated))
    }

    fn open_inner(path: &Path, pending: Option<u64>) -> Result<Self, LedgerError> {
        let created = !path.exists();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)
            .map_err(|e| LedgerError::io(path, e))?;
        if created {
            sync_parent(path)?;
        }
        let mut bytes = Vec::new();
        file.seek(SeekFrom::Start(0))
            .map_err(|e| LedgerError::io(path, e))?;
        file.read_to_end(&mut bytes)
            .map_err(|e| LedgerError::io(path, e))?;

        let complete = match bytes.iter().rposition(|&b| b == b'\n') {
            Some(p) => p + 1,
            None => 0,
        };
        let (records, verdict) = scan(&bytes);
        let (records, committed_len) = match verdict {
            Verification::Ok { .. } => (records, bytes.len() as u64),
            Verification::Broken {
                first_bad_index,
                reason,
            } => {
                // Only a torn tail of the in-flight record is recoverable.
                let torn_tail = complete < bytes.len()
                    && pending == Some(first_bad_index)
                    && records.len() as u64 == first_bad_index
                    && scan(&bytes[..complete]).1.is_ok();
                if !torn_tail {
                    return Err(LedgerError::Broken {
                        index: first_bad_index,
                        reason,
                    });
                }
                (records, complete as u64)
            }
        };

        let mut by_key: HashMap<QueryKey, Vec<usize>> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            by_key.entry(r.query_key).or_default().push(i);
        }
        Ok(Ledger {
            path: path.to_owned(),
            file,
            records,
            by_key,
            committed_len,
            sync: true,
        })
    }

    /// Disables fsync after each append. Only for throwaway ledgers.
    pub fn set_sync(&mut self, sync: bool) {
        self.sync = sync;
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ReleaseRecord] {
        &self.records
    }

    pub fn get(&self, index: u64) -> Option<&ReleaseRecord> {
        self.records.get(index as usize)
    }

    pub fn head_hash(&self) -> Hash256 {
        self.records
            .last()
            .map(|r| r.record_hash)
            .unwrap_or(Hash256::ZERO)
    }

    /// Bytes of the file covered by committed records.
    pub fn committed_len(&self) -> u64 {
        self.committed_len
    }

    /// Records for `key`, in append order.
    pub fn history(&self, key: &QueryKey) -> Vec<&ReleaseRecord> {
        self.by_key
            .get(key)
            .map(|ix| ix.iter().map(|&i| &self.records[i]).collect())
            .unwrap_or_default()
    }

    /// Seals `draft` as the next record without writing it.
    pub fn seal(&self, draft: RecordDraft) -> ReleaseRecord {
        ReleaseRecord::seal(draft, self.len(), self.head_hash())
    }

    /// Durably appends a record produced by [`seal`](Ledger::seal).
    pub fn append(&mut self, record: ReleaseRecord) -> Result<(u64, Hash256), LedgerError> {
        self.append_with(record, &|_| {})
    }

    pub(crate) fn append_with(
        &mut self,
        record: ReleaseRecord,
        fault: &dyn Fn(FaultPoint),
    ) -> Result<(u64, Hash256), LedgerError> {
        if record.index != self.len() {
            return Err(LedgerError::InvalidRecord(format!(
                "index {} but next is {}",
                record.index,
                self.len()
            )));
        }
        if record.prev_hash != self.head_hash() {
            return Err(LedgerError::InvalidRecord(
                "prev_hash is not the current head".into(),
            ));
        }
        if record.query_id != query_id_for(record.index)
            || record.compute_hash() != record.record_hash
        {
            return Err(LedgerError::InvalidRecord("record is not sealed".into()));
        }
        let mut line = record.to_json();
        line.push('\n');
        let bytes = line.as_bytes();

        let written = (|| -> std::io::Result<()> {
            let (head, tail) = bytes.split_at(bytes.len() / 2);
            self.file.write_all(head)?;
            self.file.flush()?;
            fault(FaultPoint::TornLedgerWrite);
            self.file.write_all(tail)?;
            if self.sync {
                self.file.sync_data()?;
            }
            Ok(())
        })();
        if let Err(e) = written {
            // Best effort: drop whatever part of the line reached the file.
            let _ = self.file.set_len(self.committed_len);
            return Err(LedgerError::io(&self.path, e));
        }

        self.committed_len += bytes.len() as u64;
        let out = (record.index, record.record_hash);
        self.by_key
            .entry(record.query_key)
            .or_default()
            .push(self.records.len());
        self.records.push(record);
        Ok(out)
    }

    /// Re-reads the committed prefix of the file and checks it.
    pub fn verify(&self) -> Result<Verification, LedgerError> {
        verify_prefix(&self.path, self.committed_len)
    }
}

/// Checks the first `len` bytes of a ledger file. A writer may be appending
/// past `len` concurrently.
pub fn verify_prefix(path: &Path, len: u64) -> Result<Verification, LedgerError> {
    let mut file = File::open(path).map_err(|e| LedgerError::io(path, e))?;
    let mut bytes = Vec::with_capacity(len as usize);
    (&mut file)
        .take(len)
        .read_to_end(&mut bytes)
        .map_err(|e| LedgerError::io(path, e))?;
    if (bytes.len() as u64) < len {
        return Ok(Verification::Broken {
            first_bad_index: scan(&bytes).0.len() as u64,
            reason: "ledger file shorter than committed length".into(),
        });
    }
    Ok(verify_bytes(&bytes))
}

pub(crate) fn sync_parent(path: &Path) -> Result<(), LedgerError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        File::open(dir)
            .and_then(|d| d.sync_all())
            .map_err(|e| LedgerError::io(dir, e))?;
    }
    Ok(())
}
