//! End-to-end query pipeline and its HTTP surface.
//!
//! A submission runs, under one lock per dataset:
//! validate → σ → reuse decision → fee → debit → budget charge →
//! evaluate/execute → journal → ledger append → state snapshot.
//! Nothing is visible to other callers until the ledger append succeeds.

pub mod api;
pub mod config;
pub mod store;

use std::sync::{Mutex, MutexGuard, PoisonError};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

pub use config::{AccountConfig, BudgetConfig, ServiceConfig};
pub use store::{PendingEntry, StateSnapshot, Store};

use crate::accountant::{BudgetDimension, BudgetError, BudgetState, Cost, CostReport};
use crate::dataset::{Dataset, DatasetError};
use crate::dp::{compute_sigma, sensitivity_of, ParamError, PrivacyParams, Schema, MAX_DELTA};
use crate::fault::{FaultHook, FaultPoint};
use crate::ledger::{
    self, Account, AccountBook, AccountId, FeeSchedule, Ledger, LedgerError, RecordDraft,
    ReleaseRecord, Verification,
};
use crate::query::{canonical_key, Comparator, QueryDescriptor, QueryError, QueryKey, QueryKind};
use crate::reuse::{decide, execute, HistoryEntry, HistoryIndex, ReuseError, ReuseKind};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("invalid request: {0}")]
    Validation(String),
    #[error("unknown account {0}")]
    UnknownAccount(String),
    #[error("insufficient funds in {account}: balance {balance}, fee {fee}")]
    InsufficientFunds {
        account: String,
        balance: f64,
        fee: f64,
    },
    #[error("privacy budget exceeded: {which} remaining {remaining}, requested {requested}")]
    BudgetExceeded {
        which: BudgetDimension,
        remaining: f64,
        requested: f64,
    },
    #[error("storage: {0}")]
    Storage(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl ServiceError {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Config(_) => "config",
            ServiceError::Params(_) => "invalid_params",
            ServiceError::Query(_) => "invalid_query",
            ServiceError::Dataset(DatasetError::EmptySelection) => "empty_selection",
            ServiceError::Dataset(_) => "dataset",
            ServiceError::Validation(_) => "bad_request",
            ServiceError::UnknownAccount(_) => "unknown_account",
            ServiceError::InsufficientFunds { .. } => "insufficient_funds",
            ServiceError::BudgetExceeded { .. } => "budget_exceeded",
            ServiceError::Storage(_) => "storage",
            ServiceError::Internal(_) => "internal",
        }
    }

    pub fn http_status(&self) -> u16 {
        match self {
            ServiceError::Params(_)
            | ServiceError::Query(_)
            | ServiceError::Validation(_)
            | ServiceError::Dataset(DatasetError::EmptySelection) => 400,
            ServiceError::UnknownAccount(_) => 404,
            ServiceError::InsufficientFunds { .. } => 402,
            ServiceError::BudgetExceeded { .. } => 429,
            ServiceError::Config(_)
            | ServiceError::Dataset(_)
            | ServiceError::Storage(_)
            | ServiceError::Internal(_) => 500,
        }
    }
}

impl From<LedgerError> for ServiceError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::InsufficientFunds {
                account,
                balance,
                fee,
            } => ServiceError::InsufficientFunds {
                account: account.to_string(),
                balance,
                fee,
            },
            LedgerError::UnknownAccount(id) => ServiceError::UnknownAccount(id.to_string()),
            LedgerError::InvalidAccountId(s) => {
                ServiceError::Validation(format!("invalid account id {s:?}"))
            }
            other => ServiceError::Storage(other.to_string()),
        }
    }
}

impl From<BudgetError> for ServiceError {
    fn from(e: BudgetError) -> Self {
        match e {
            BudgetError::Exceeded {
                which,
                remaining,
                requested,
            } => ServiceError::BudgetExceeded {
                which,
                remaining,
                requested,
            },
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

impl From<ReuseError> for ServiceError {
    fn from(e: ReuseError) -> Self {
        ServiceError::Internal(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    pub account_id: String,
    pub descriptor: QueryDescriptor,
    pub epsilon: f64,
    pub delta: f64,
}

/// The output card for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub query_id: String,
    pub query_type: String,
    pub noisy_response: f64,
    pub sigma: f64,
    pub blockchain_price: f64,
    pub privacy_cost_epsilon: f64,
    pub remaining_budget_epsilon: f64,
    pub reuse_kind: ReuseKind,
    pub record_index: u64,
    pub query_key: QueryKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetView {
    pub epsilon_budget: f64,
    pub delta_budget: f64,
    pub epsilon_spent: f64,
    pub delta_spent: f64,
    pub remaining_epsilon: f64,
    pub remaining_delta: f64,
    pub report: CostReport,
}

impl From<&BudgetState> for BudgetView {
    fn from(b: &BudgetState) -> Self {
        BudgetView {
            epsilon_budget: b.epsilon_budget,
            delta_budget: b.delta_budget,
            epsilon_spent: b.epsilon_spent,
            delta_spent: b.delta_spent,
            remaining_epsilon: b.remaining_epsilon(),
            remaining_delta: b.remaining_delta(),
            report: b.report(),
        }
    }
}

/// What a client needs to build a query form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Meta {
    pub schema: Schema,
    pub rows: usize,
    pub query_kinds: Vec<QueryKind>,
    pub comparators: Vec<&'static str>,
    pub fees: FeeSchedule,
    pub max_delta: f64,
    pub ledger_records: u64,
}

struct Inner {
    ledger: Ledger,
    state: StateSnapshot,
    history: HistoryIndex,
}

pub struct QueryService {
    inner: Mutex<Inner>,
    dataset: Dataset,
    fees: FeeSchedule,
    store: Store,
    seed: u64,
    fault: Option<FaultHook>,
}

impl std::fmt::Debug for QueryService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QueryService")
            .field("data_dir", &self.store.dir())
            .finish_non_exhaustive()
    }
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl QueryService {
    /// Loads the dataset, opens (or initializes) the data directory and
    /// recovers from any interrupted submission.
    pub fn open(config: &ServiceConfig) -> Result<Self, ServiceError> {
        Self::open_with_fault(config, None)
    }

    pub fn open_with_fault(
        config: &ServiceConfig,
        fault: Option<FaultHook>,
    ) -> Result<Self, ServiceError> {
        let dataset = Dataset::load_csv(&config.dataset, config.schema()?)?;
        Self::open_with_dataset(config, dataset, fault)
    }

    pub fn open_with_dataset(
        config: &ServiceConfig,
        dataset: Dataset,
        fault: Option<FaultHook>,
    ) -> Result<Self, ServiceError> {
        if dataset.schema() != &config.schema()? {
            return Err(ServiceError::Config(
                "dataset schema differs from configured schema".into(),
            ));
        }
        std::fs::create_dir_all(&config.data_dir)
            .map_err(|e| ServiceError::Storage(format!("{}: {e}", config.data_dir.display())))?;
        let store = Store::new(&config.data_dir, config.sync);
        store.discard_temp()?;

        let ledger_path = store.ledger_path();
        let pending = store.read_journal()?;
        let (mut ledger, truncated) =
            Ledger::open_recovering(&ledger_path, pending.as_ref().map(|p| p.index))?;
        ledger.set_sync(config.sync);

        let mut state = match store.read_state()? {
            Some(s) => s,
            None if ledger.is_empty() => {
                let s = initial_state(config)?;
                store.write_state(&s, &|_| {})?;
                s
            }
            None => {
                return Err(ServiceError::Storage(format!(
                    "{} holds {} records but the state file is missing",
                    ledger_path.display(),
                    ledger.len()
                )))
            }
        };

        if let Some(p) = &pending {
            match ledger.get(p.index) {
                Some(rec) if rec.record_hash != p.record_hash => {
                    return Err(ServiceError::Storage(format!(
                        "journaled record {} does not match the ledger",
                        p.index
                    )));
                }
                Some(_) => tracing::info!(
                    index = p.index,
                    "journaled query was committed; rolling forward"
                ),
                None => tracing::info!(
                    index = p.index,
                    truncated,
                    "journaled query never committed; rolling back"
                ),
            }
        }
        if state.applied_through > ledger.len() {
            return Err(ServiceError::Storage(format!(
                "state reflects {} records but the ledger holds {}",
                state.applied_through,
                ledger.len()
            )));
        }
        let behind = state.applied_through < ledger.len();
        for rec in &ledger.records()[state.applied_through as usize..] {
            state.apply_record(rec)?;
        }
        if behind {
            store.write_state(&state, &|_| {})?;
        }
        store.clear_journal()?;

        let mut history = HistoryIndex::new();
        for rec in ledger.records() {
            history.insert(
                rec.query_key,
                HistoryEntry {
                    record_index: rec.index,
                    sigma: rec.sigma,
                    answer: rec.noisy_answer,
                },
            );
        }

        Ok(QueryService {
            inner: Mutex::new(Inner {
                ledger,
                state,
                history,
            }),
            dataset,
            fees: config.fees,
            store,
            seed: config.seed.unwrap_or_else(rand::random),
            fault,
        })
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(PoisonError::into_inner)
    }

    fn fault(&self, point: FaultPoint) {
        if let Some(hook) = &self.fault {
            hook(point);
        }
    }

    /// Noise stream for the record at `index`; distinct per record and
    /// stable across restarts when the seed is fixed.
    fn rng_for(&self, index: u64) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn ledger_path(&self) -> std::path::PathBuf {
        self.store.ledger_path()
    }

    /// Answers one query. On any error, no balance, budget or ledger change
    /// persists.
    pub fn submit_query(&self, req: &QueryRequest) -> Result<QueryResponse, ServiceError> {
        let params = PrivacyParams::new(req.epsilon, req.delta)?;
        let account_id: AccountId = req.account_id.parse()?;
        let desc = &req.descriptor;
        let sens = sensitivity_of(desc, self.dataset.schema(), self.dataset.len() as u64)?;
        let sigma = compute_sigma(params, sens);
        let key = canonical_key(desc);

        let mut guard = self.lock();
        let inner = &mut *guard;
        let account = inner
            .state
            .accounts
            .get(&account_id)
            .ok_or_else(|| ServiceError::UnknownAccount(account_id.to_string()))?
            .clone();

        let decision = decide(&key, sigma, &inner.history);
        let index = inner.ledger.len();
        let mut draft = RecordDraft {
            query_key: key,
            query_descriptor: desc.clone(),
            sigma: decision.sigma().get(),
            noisy_answer: 0.0,
            reuse_kind: decision.kind(),
            base_record_index: decision.base_record_index(),
            requested_epsilon: params.epsilon(),
            requested_delta: params.delta(),
            charged_epsilon: 0.0,
            charged_delta: 0.0,
            fee: 0.0,
            account_id: account_id.clone(),
            timestamp_ms: now_ms(),
        };
        let fee = self
            .fees
            .price_of(inner.ledger.seal(draft.clone()).priced_size());
        let debited = account.debit(fee)?;
        let naive = Cost::new(params.epsilon(), params.delta());
        let budget = inner
            .state
            .budget
            .charge(decision.cost(params, sens), naive)?;

        let truth = if decision.needs_true_value() {
            Some(self.dataset.evaluate(desc)?)
        } else {
            None
        };
        let release = execute(decision, truth, params, sens, &mut self.rng_for(index))?;

        draft.noisy_answer = release.answer;
        draft.charged_epsilon = release.charged_epsilon;
        draft.charged_delta = release.charged_delta;
        draft.fee = fee;
        let record = inner.ledger.seal(draft);
        let record_hash = record.record_hash;

        self.fault(FaultPoint::BeforeJournal);
        self.store.write_journal(&PendingEntry {
            index,
            record_hash,
            account_id: account_id.clone(),
            fee,
            charged: Cost::new(release.charged_epsilon, release.charged_delta),
            naive,
        })?;
        self.fault(FaultPoint::AfterJournal);
        let fault = |p| self.fault(p);
        if let Err(e) = inner.ledger.append_with(record, &fault) {
            if let Err(clear) = self.store.clear_journal() {
                tracing::error!(%clear, "could not clear journal after failed append");
            }
            return Err(e.into());
        }
        self.fault(FaultPoint::AfterLedgerAppend);

        // Committed: the ledger now holds the record.
        inner.state.accounts.insert(debited);
        inner.state.budget = budget;
        inner.state.applied_through = index + 1;
        inner.history.insert(
            key,
            HistoryEntry {
                record_index: index,
                sigma: release.sigma.get(),
                answer: release.answer,
            },
        );
        match self.store.write_state(&inner.state, &fault) {
            Ok(()) => {
                self.fault(FaultPoint::AfterStateCommit);
                if let Err(e) = self.store.clear_journal() {
                    tracing::warn!(%e, "journal not cleared; it will be reconciled on restart");
                }
                self.fault(FaultPoint::AfterJournalClear);
            }
            // Restart rolls the snapshot forward from the ledger.
            Err(e) => tracing::warn!(%e, index, "state snapshot not persisted"),
        }

        Ok(QueryResponse {
            query_id: ledger::query_id_for(index),
            query_type: desc.to_string(),
            noisy_response: release.answer,
            sigma: release.sigma.get(),
            blockchain_price: fee,
            privacy_cost_epsilon: release.charged_epsilon,
            remaining_budget_epsilon: inner.state.budget.remaining_epsilon(),
            reuse_kind: release.decision.kind(),
            record_index: index,
            query_key: key,
        })
    }

    pub fn get_account(&self, id: &str) -> Result<Account, ServiceError> {
        let id: AccountId = id.parse()?;
        self.lock()
            .state
            .accounts
            .get(&id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownAccount(id.to_string()))
    }

    pub fn accounts(&self) -> Vec<Account> {
        self.lock().state.accounts.iter().cloned().collect()
    }

    pub fn budget(&self) -> BudgetView {
        BudgetView::from(&self.lock().state.budget)
    }

    /// Records for one key, or the whole ledger.
    pub fn history(&self, key: Option<&QueryKey>) -> Vec<ReleaseRecord> {
        let inner = self.lock();
        match key {
            Some(k) => inner.ledger.history(k).into_iter().cloned().collect(),
            None => inner.ledger.records().to_vec(),
        }
    }

    /// Checks the on-disk chain up to the last committed record.
    pub fn verify(&self) -> Result<Verification, ServiceError> {
        let (path, len) = {
            let inner = self.lock();
            (inner.ledger.path().to_owned(), inner.ledger.committed_len())
        };
        Ok(ledger::verify_prefix(&path, len)?)
    }

    pub fn meta(&self) -> Meta {
        Meta {
            schema: self.dataset.schema().clone(),
            rows: self.dataset.len(),
            query_kinds: QueryKind::ALL.to_vec(),
            comparators: Comparator::ALL.iter().map(|c| c.as_str()).collect(),
            fees: self.fees,
            max_delta: MAX_DELTA,
            ledger_records: self.lock().ledger.len(),
        }
    }

    pub fn state(&self) -> StateSnapshot {
        self.lock().state.clone()
    }

    pub fn history_index(&self) -> HistoryIndex {
        self.lock().history.clone()
    }
}

fn initial_state(config: &ServiceConfig) -> Result<StateSnapshot, ServiceError> {
    let budget = BudgetState::new(config.budget.epsilon, config.budget.delta)
        .map_err(|e| ServiceError::Config(e.to_string()))?;
    let mut book = AccountBook::new();
    let mut rng = rand::rng();
    for a in &config.accounts {
        if !(a.balance.is_finite() && a.balance >= 0.0) {
            return Err(ServiceError::Config(format!(
                "invalid initial balance {}",
                a.balance
            )));
        }
        let id = match &a.id {
            Some(s) => s
                .parse()
                .map_err(|e: LedgerError| ServiceError::Config(e.to_string()))?,
            None => AccountId::random(&mut rng),
        };
        book.insert(Account {
            id,
            balance: a.balance,
        });
    }
    Ok(StateSnapshot::new(book, budget))
}
