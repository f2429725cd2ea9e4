//! Fixtures shared by the benchmarks.

use dpledger_core::ledger::{AccountId, RecordDraft};
use dpledger_core::{canonical_key, Comparator, QueryDescriptor, ReuseKind};

/// A plausible release record draft; `i` varies the query and answer.
pub fn sample_draft(i: u64) -> RecordDraft {
    let descriptor = QueryDescriptor::sum("income").filter("age", Comparator::Ge, (i % 50) as f64);
    RecordDraft {
        query_key: canonical_key(&descriptor),
        query_descriptor: descriptor,
        sigma: 4.8448,
        noisy_answer: 1234.5 + i as f64,
        reuse_kind: ReuseKind::Fresh,
        base_record_index: None,
        requested_epsilon: 1.0,
        requested_delta: 1e-5,
        charged_epsilon: 1.0,
        charged_delta: 1e-5,
        fee: 0.0013,
        account_id: AccountId::from_bytes([0xaa; 20]),
        timestamp_ms: 1_700_000_000_000 + i,
    }
}
