//! Differentially private query answering over a frozen tabular dataset.
//!
//! Queries are answered with the Gaussian mechanism. Every release is written
//! to an append-only, hash-chained ledger, and later queries with the same
//! descriptor may reuse previously released noise:
//!
//! - an identical `(query, σ)` pair returns the earlier answer verbatim,
//! - a request for *more* noise extends an earlier release with independent
//!   top-up noise (post-processing, no privacy cost),
//! - a request for *less* noise mixes a fraction of the earlier noise with a
//!   fresh draw and is charged only for the extra precision it reveals.
//!
//! The crate is split into pure layers ([`dp`], [`reuse`], [`accountant`]),
//! storage ([`ledger`], [`dataset`]) and the orchestrating [`service`], which
//! also exposes the HTTP API.

pub mod accountant;
pub mod dataset;
pub mod digest;
pub mod dp;
pub mod fault;
pub mod ledger;
pub mod query;
pub mod reuse;
pub mod service;

pub use accountant::{BudgetError, BudgetState, Cost, CostReport};
pub use dataset::{Dataset, DatasetError};
pub use digest::Hash256;
pub use dp::{
    compute_sigma, gaussian_mechanism, sensitivity_of, verify_dp_guarantee, Column, NoiseSource,
    ParamError, PrivacyParams, Schema, Sensitivity, Sigma,
};
pub use ledger::{
    Account, AccountBook, AccountId, FeeSchedule, Ledger, LedgerError, ReleaseRecord, Verification,
};
pub use query::{
    canonical_key, Comparator, Predicate, QueryDescriptor, QueryError, QueryKey, QueryKind,
};
pub use reuse::{decide, execute, partial_params, HistoryIndex, Release, ReuseDecision, ReuseKind};
pub use service::{QueryRequest, QueryResponse, QueryService, ServiceConfig, ServiceError};
