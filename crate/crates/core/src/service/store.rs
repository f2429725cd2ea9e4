//! Durable service state next to the ledger.
//!
//! The ledger file is the commit point for a query. Two small files sit
//! beside it:
//!
//! - `state.json`: account balances and budget totals, plus how many ledger
//!   records they reflect. Replaced atomically (write temp, fsync, rename).
//! - `journal.json`: the single in-flight query, written before its record
//!   is appended and removed once `state.json` includes it.
//!
//! On restart, a journaled query whose record never reached the ledger is
//! discarded, and ledger records newer than `state.json` are rolled forward.

use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::accountant::{BudgetState, Cost};
use crate::digest::Hash256;
use crate::fault::FaultPoint;
use crate::ledger::{AccountBook, AccountId, ReleaseRecord};
use crate::service::ServiceError;

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const STATE_FILE: &str = "state.json";
pub const JOURNAL_FILE: &str = "journal.json";
const STATE_TEMP: &str = "state.json.tmp";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    /// Number of ledger records reflected in `accounts` and `budget`.
    pub applied_through: u64,
    pub initial_accounts: AccountBook,
    pub accounts: AccountBook,
    pub budget: BudgetState,
}

impl StateSnapshot {
    pub fn new(accounts: AccountBook, budget: BudgetState) -> Self {
        StateSnapshot {
            applied_through: 0,
            initial_accounts: accounts.clone(),
            accounts,
            budget,
        }
    }

    /// Applies a committed record's fee and charge. Budget limits are not
    /// re-checked; the record was admitted when it was appended.
    pub fn apply_record(&mut self, rec: &ReleaseRecord) -> Result<(), ServiceError> {
        if rec.index != self.applied_through {
            return Err(ServiceError::Storage(format!(
                "record {} applied out of order (expected {})",
                rec.index, self.applied_through
            )));
        }
        let acct = self.accounts.get(&rec.account_id).ok_or_else(|| {
            ServiceError::Storage(format!(
                "record {} names unknown account {}",
                rec.index, rec.account_id
            ))
        })?;
        let mut acct = acct.clone();
        acct.balance -= rec.fee;
        self.accounts.insert(acct);
        self.budget = self.budget.applied(
            Cost::new(rec.charged_epsilon, rec.charged_delta),
            Cost::new(rec.requested_epsilon, rec.requested_delta),
        );
        self.applied_through += 1;
        Ok(())
    }

    /// State implied by starting from `initial_accounts` and a fresh budget
    /// and applying every record in order.
    pub fn replay(&self, records: &[ReleaseRecord]) -> Result<StateSnapshot, ServiceError> {
        let budget = BudgetState::new(self.budget.epsilon_budget, self.budget.delta_budget)
            .map_err(|e| ServiceError::Storage(e.to_string()))?;
        let mut s = StateSnapshot::new(self.initial_accounts.clone(), budget);
        for rec in records {
            s.apply_record(rec)?;
        }
        Ok(s)
    }
}

/// The in-flight query, as journaled before its ledger append.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingEntry {
    pub index: u64,
    pub record_hash: Hash256,
    pub account_id: AccountId,
    pub fee: f64,
    pub charged: Cost,
    pub naive: Cost,
}

#[derive(Debug, Clone)]
pub struct Store {
    dir: PathBuf,
    sync: bool,
}

impl Store {
    pub fn new(dir: impl Into<PathBuf>, sync: bool) -> Self {
        Store {
            dir: dir.into(),
            sync,
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.dir.join(LEDGER_FILE)
    }

    pub fn read_state(&self) -> Result<Option<StateSnapshot>, ServiceError> {
        read_json(&self.dir.join(STATE_FILE))
    }

    pub fn write_state(
        &self,
        state: &StateSnapshot,
        fault: &dyn Fn(FaultPoint),
    ) -> Result<(), ServiceError> {
        let tmp = self.dir.join(STATE_TEMP);
        self.write_file(
            &tmp,
            &serde_json::to_vec_pretty(state).expect("state serializes"),
        )?;
        fault(FaultPoint::AfterStateTemp);
        fs::rename(&tmp, self.dir.join(STATE_FILE)).map_err(|e| io_err(&tmp, e))?;
        self.sync_dir()
    }

    pub fn read_journal(&self) -> Result<Option<PendingEntry>, ServiceError> {
        read_json(&self.dir.join(JOURNAL_FILE))
    }

    pub fn write_journal(&self, entry: &PendingEntry) -> Result<(), ServiceError> {
        let path = self.dir.join(JOURNAL_FILE);
        self.write_file(
            &path,
            &serde_json::to_vec(entry).expect("journal serializes"),
        )?;
        self.sync_dir()
    }

    pub fn clear_journal(&self) -> Result<(), ServiceError> {
        let path = self.dir.join(JOURNAL_FILE);
        match fs::remove_file(&path) {
            Ok(()) => self.sync_dir(),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(io_err(&path, e)),
        }
    }

    /// Removes a state temp file left by a crash before its rename.
    pub fn discard_temp(&self) -> Result<(), ServiceError> {
        let tmp = self.dir.join(STATE_TEMP);
        match fs::remove_file(&tmp) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(io_err(&tmp, e)),
        }
    }

    fn write_file(&self, path: &Path, bytes: &[u8]) -> Result<(), ServiceError> {
        let mut f = File::create(path).map_err(|e| io_err(path, e))?;
        f.write_all(bytes).map_err(|e| io_err(path, e))?;
        if self.sync {
            f.sync_all().map_err(|e| io_err(path, e))?;
        }
        Ok(())
    }

    fn sync_dir(&self) -> Result<(), ServiceError> {
        if self.sync {
            File::open(&self.dir)
                .and_then(|d| d.sync_all())
                .map_err(|e| io_err(&self.dir, e))?;
        }
        Ok(())
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Option<T>, ServiceError> {
    match fs::read(path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| ServiceError::Storage(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(io_err(path, e)),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> ServiceError {
    ServiceError::Storage(format!("{}: {e}", path.display()))
}
