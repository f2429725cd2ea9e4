use serde::{Deserialize, Serialize};

use crate::digest::{CanonicalWriter, Hash256};
use crate::ledger::account::AccountId;
use crate::query::{QueryDescriptor, QueryKey};
use crate::reuse::ReuseKind;

/// `Q` followed by the zero-padded ledger index, e.g. `Q000042`.
pub fn query_id_for(index: u64) -> String {
    format!("Q{index:06}")
}

/// One release on the ledger.
///
/// The persisted form is a single line of compact JSON with the fields in
/// declaration order. `record_hash` is SHA-256 over
/// [`canonical_bytes`](ReleaseRecord::canonical_bytes), which covers every
/// other field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReleaseRecord {
    pub index: u64,
    pub query_id: String,
    pub query_key: QueryKey,
    pub query_descriptor: QueryDescriptor,
    pub sigma: f64,
    pub noisy_answer: f64,
    pub reuse_kind: ReuseKind,
    pub base_record_index: Option<u64>,
    pub requested_epsilon: f64,
    pub requested_delta: f64,
    pub charged_epsilon: f64,
    pub charged_delta: f64,
    pub fee: f64,
    pub account_id: AccountId,
    pub timestamp_ms: u64,
    pub prev_hash: Hash256,
    pub record_hash: Hash256,
}

/// Everything the caller decides about a record; the ledger fills in the
/// position and hashes when sealing.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordDraft {
    pub query_key: QueryKey,
    pub query_descriptor: QueryDescriptor,
    pub sigma: f64,
    pub noisy_answer: f64,
    pub reuse_kind: ReuseKind,
    pub base_record_index: Option<u64>,
    pub requested_epsilon: f64,
    pub requested_delta: f64,
    pub charged_epsilon: f64,
    pub charged_delta: f64,
    pub fee: f64,
    pub account_id: AccountId,
    pub timestamp_ms: u64,
}

impl ReleaseRecord {
    pub fn seal(draft: RecordDraft, index: u64, prev_hash: Hash256) -> Self {
        let mut rec = ReleaseRecord {
            index,
            query_id: query_id_for(index),
            query_key: draft.query_key,
            query_descriptor: draft.query_descriptor,
            sigma: draft.sigma,
            noisy_answer: draft.noisy_answer,
            reuse_kind: draft.reuse_kind,
            base_record_index: draft.base_record_index,
            requested_epsilon: draft.requested_epsilon,
            requested_delta: draft.requested_delta,
            charged_epsilon: draft.charged_epsilon,
            charged_delta: draft.charged_delta,
            fee: draft.fee,
            account_id: draft.account_id,
            timestamp_ms: draft.timestamp_ms,
            prev_hash,
            record_hash: Hash256::ZERO,
        };
        rec.record_hash = rec.compute_hash();
        rec
    }

    /// Hash preimage: every field except `record_hash`, in declaration order.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut w = CanonicalWriter::new("dpledger/record/v1");
        w.u64(self.index)
            .str(&self.query_id)
            .bytes32(self.query_key.0.as_bytes());
        self.query_descriptor.write_canonical(&mut w);
        w.f64(self.sigma)
            .f64(self.noisy_answer)
            .u8(self.reuse_kind.tag())
            .opt_u64(self.base_record_index)
            .f64(self.requested_epsilon)
            .f64(self.requested_delta)
            .f64(self.charged_epsilon)
            .f64(self.charged_delta)
            .f64(self.fee)
            .str(self.account_id.as_str())
            .u64(self.timestamp_ms)
            .raw(self.prev_hash.as_bytes());
        w.finish()
    }

    pub fn compute_hash(&self) -> Hash256 {
        Hash256::of(&self.canonical_bytes())
    }

    /// Size used for fee pricing: the hash preimage plus the hash itself.
    /// Numeric fields are fixed-width there, so the size does not depend on
    /// the fee or the answer.
    pub fn priced_size(&self) -> usize {
        self.canonical_bytes().len() + 32
    }

    /// Canonical single-line JSON, without the trailing newline.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::canonical_key;

    fn draft() -> RecordDraft {
        let d = QueryDescriptor::count();
        RecordDraft {
            query_key: canonical_key(&d),
            query_descriptor: d,
            sigma: 4.84,
            noisy_answer: 12.5,
            reuse_kind: ReuseKind::Fresh,
            base_record_index: None,
            requested_epsilon: 1.0,
            requested_delta: 1e-5,
            charged_epsilon: 1.0,
            charged_delta: 1e-5,
            fee: 0.0015,
            account_id: AccountId::from_bytes([7u8; 20]),
            timestamp_ms: 1_700_000_000_000,
        }
    }

    #[test]
    fn query_ids_are_padded() {
        assert_eq!(query_id_for(42), "Q000042");
        assert_eq!(query_id_for(1_234_567), "Q1234567");
    }

    #[test]
    fn hash_covers_every_field() {
        let base = ReleaseRecord::seal(draft(), 3, Hash256::ZERO);
        assert_eq!(base.record_hash, base.compute_hash());
        type Mutation = Box<dyn Fn(&mut ReleaseRecord)>;
        let mutations: Vec<Mutation> = vec![
            Box::new(|r| r.index += 1),
            Box::new(|r| r.query_id.push('x')),
            Box::new(|r| r.query_key = canonical_key(&QueryDescriptor::sum("a"))),
            Box::new(|r| r.query_descriptor = QueryDescriptor::sum("a")),
            Box::new(|r| r.sigma += 1e-9),
            Box::new(|r| r.noisy_answer = -r.noisy_answer),
            Box::new(|r| r.reuse_kind = ReuseKind::ExactMatch),
            Box::new(|r| r.base_record_index = Some(0)),
            Box::new(|r| r.requested_epsilon = 2.0),
            Box::new(|r| r.requested_delta = 2e-5),
            Box::new(|r| r.charged_epsilon = 0.0),
            Box::new(|r| r.charged_delta = 0.0),
            Box::new(|r| r.fee = 0.0),
            Box::new(|r| r.account_id = AccountId::from_bytes([8u8; 20])),
            Box::new(|r| r.timestamp_ms += 1),
            Box::new(|r| r.prev_hash = Hash256([1u8; 32])),
        ];
        for (i, m) in mutations.iter().enumerate() {
            let mut r = base.clone();
            m(&mut r);
            assert_ne!(
                r.compute_hash(),
                base.record_hash,
                "mutation {i} not covered"
            );
        }
    }

    #[test]
    fn priced_size_ignores_values() {
        let a = ReleaseRecord::seal(draft(), 0, Hash256::ZERO);
        let mut d = draft();
        d.fee = 123.456;
        d.noisy_answer = -1e300;
        let b = ReleaseRecord::seal(d, 0, Hash256::ZERO);
        assert_eq!(a.priced_size(), b.priced_size());
    }

    #[test]
    fn json_round_trip_is_byte_stable() {
        let mut d = draft();
        d.noisy_answer = 0.1 + 0.2;
        d.sigma = 1.0 / 3.0;
        let r = ReleaseRecord::seal(d, 9, Hash256::of(b"prev"));
        let line = r.to_json();
        let back: ReleaseRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.to_json(), line);
        assert!(line.contains("\"prev_hash\":\""));
    }
}
