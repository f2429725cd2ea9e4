//! Noise reuse across releases of the same query.
//!
//! Given the releases already on the ledger for a query key and the σ a new
//! request calls for, [`decide`] picks one of four routes:
//!
//! | route        | when                                   | cost charged             |
//! |--------------|----------------------------------------|--------------------------|
//! | ExactMatch   | a release with the same σ exists       | none                     |
//! | FullReuse    | σ_new ≥ smallest released σ            | none                     |
//! | PartialReuse | σ_new < smallest released σ            | ε at σ_eff (see below)   |
//! | Fresh        | no release for this key                | requested (ε, δ)         |
//!
//! FullReuse adds independent noise with variance `σ_new² − σ_base²` to an
//! earlier answer. The sum of independent Gaussians is Gaussian, so the
//! result has exactly the requested distribution, and since it is computed
//! from released data it costs nothing.
//!
//! PartialReuse keeps a fraction `f = σ_new²/σ_old²` of the earlier noise
//! and adds fresh noise with variance `σ_new² − f²σ_old²`. Conditioned on
//! the earlier release, the new answer carries the same information as a
//! fresh release at `σ_eff`, where `1/σ_eff² = 1/σ_new² − 1/σ_old²`; the
//! charge is the ε that σ_eff would calibrate to. This accounting is a
//! conservative implementation choice rather than a published theorem, and
//! it is always below the charge for a fresh answer at σ_new.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::accountant::Cost;
use crate::dp::{epsilon_for_sigma, NoiseSource, PrivacyParams, Sensitivity, Sigma};
use crate::query::QueryKey;

/// Relative tolerance under which two σ values count as identical.
pub const SIGMA_MATCH_RTOL: f64 = 1e-12;

pub fn sigmas_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= SIGMA_MATCH_RTOL * a.abs().max(b.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReuseKind {
    Fresh,
    ExactMatch,
    FullReuse,
    PartialReuse,
}

impl ReuseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReuseKind::Fresh => "Fresh",
            ReuseKind::ExactMatch => "ExactMatch",
            ReuseKind::FullReuse => "FullReuse",
            ReuseKind::PartialReuse => "PartialReuse",
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            ReuseKind::Fresh => 0,
            ReuseKind::ExactMatch => 1,
            ReuseKind::FullReuse => 2,
            ReuseKind::PartialReuse => 3,
        }
    }
}

impl std::fmt::Display for ReuseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub record_index: u64,
    pub sigma: f64,
    pub answer: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct KeyHistory {
    entries: Vec<HistoryEntry>,
    // position of the earliest entry with the smallest sigma
    min_pos: usize,
}

/// Released `(record, σ, answer)` triples per query key, in ledger order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HistoryIndex {
    by_key: HashMap<QueryKey, KeyHistory>,
}

impl HistoryIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry. Entries for one key must arrive in increasing
    /// `record_index` order.
    pub fn insert(&mut self, key: QueryKey, entry: HistoryEntry) {
        let h = self.by_key.entry(key).or_default();
        debug_assert!(h
            .entries
            .last()
            .is_none_or(|e| e.record_index < entry.record_index));
        h.entries.push(entry);
        let pos = h.entries.len() - 1;
        if entry.sigma < h.entries[h.min_pos].sigma {
            h.min_pos = pos;
        }
    }

    pub fn entries(&self, key: &QueryKey) -> &[HistoryEntry] {
        self.by_key
            .get(key)
            .map(|h| h.entries.as_slice())
            .unwrap_or(&[])
    }

    /// Entry holding the smallest σ for `key` (earliest on ties).
    pub fn min_sigma(&self, key: &QueryKey) -> Option<&HistoryEntry> {
        self.by_key.get(key).map(|h| &h.entries[h.min_pos])
    }

    pub fn len(&self) -> usize {
        self.by_key.values().map(|h| h.entries.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_key.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum ReuseDecision {
    Fresh {
        sigma_new: f64,
    },
    ExactMatch {
        base_record_index: u64,
        sigma_base: f64,
        base_answer: f64,
    },
    FullReuse {
        base_record_index: u64,
        sigma_base: f64,
        base_answer: f64,
        sigma_new: f64,
        sigma_topup: f64,
    },
    PartialReuse {
        base_record_index: u64,
        sigma_base: f64,
        base_answer: f64,
        sigma_new: f64,
        fraction: f64,
        sigma_extra: f64,
        sigma_eff: f64,
    },
}

impl ReuseDecision {
    pub fn kind(&self) -> ReuseKind {
        match self {
            ReuseDecision::Fresh { .. } => ReuseKind::Fresh,
            ReuseDecision::ExactMatch { .. } => ReuseKind::ExactMatch,
            ReuseDecision::FullReuse { .. } => ReuseKind::FullReuse,
            ReuseDecision::PartialReuse { .. } => ReuseKind::PartialReuse,
        }
    }

    /// σ of the release this decision produces.
    pub fn sigma(&self) -> Sigma {
        let s = match *self {
            ReuseDecision::Fresh { sigma_new } => sigma_new,
            ReuseDecision::ExactMatch { sigma_base, .. } => sigma_base,
            ReuseDecision::FullReuse { sigma_new, .. } => sigma_new,
            ReuseDecision::PartialReuse { sigma_new, .. } => sigma_new,
        };
        Sigma::new(s).expect("decision sigmas are finite")
    }

    pub fn base_record_index(&self) -> Option<u64> {
        match *self {
            ReuseDecision::Fresh { .. } => None,
            ReuseDecision::ExactMatch {
                base_record_index, ..
            }
            | ReuseDecision::FullReuse {
                base_record_index, ..
            }
            | ReuseDecision::PartialReuse {
                base_record_index, ..
            } => Some(base_record_index),
        }
    }

    /// Fresh and PartialReuse read the true answer; the other routes only
    /// post-process released data.
    pub fn needs_true_value(&self) -> bool {
        matches!(
            self,
            ReuseDecision::Fresh { .. } | ReuseDecision::PartialReuse { .. }
        )
    }

    /// Privacy cost of executing this decision for `requested`.
    pub fn cost(&self, requested: PrivacyParams, sens: Sensitivity) -> Cost {
        match *self {
            ReuseDecision::Fresh { .. } => Cost::new(requested.epsilon(), requested.delta()),
            ReuseDecision::ExactMatch { .. } | ReuseDecision::FullReuse { .. } => Cost::ZERO,
            ReuseDecision::PartialReuse { sigma_eff, .. } => {
                // Mathematically below the request; the min absorbs rounding.
                let eps =
                    epsilon_for_sigma(requested.delta(), sens, sigma_eff).min(requested.epsilon());
                Cost::new(eps, requested.delta())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum ReuseError {
    #[error("partial reuse needs 0 < sigma_new < sigma_old, got sigma_new={sigma_new}, sigma_old={sigma_old}")]
    NotPartial { sigma_new: f64, sigma_old: f64 },
    #[error("{0} route needs the true query answer")]
    MissingTrueValue(ReuseKind),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartialParams {
    pub fraction: f64,
    pub sigma_extra: f64,
    pub sigma_eff: f64,
}

/// Mixing parameters for reaching `sigma_new` from an earlier release at
/// `sigma_old > sigma_new`.
///
/// `f = σ_new²/σ_old²` minimizes `(1 − f)/sqrt(σ_new² − f²σ_old²)` over
/// `f ∈ (0, σ_new/σ_old)`, i.e. it maximizes `σ_eff`.
pub fn partial_params(sigma_new: f64, sigma_old: f64) -> Result<PartialParams, ReuseError> {
    if !(sigma_new > 0.0 && sigma_new < sigma_old && sigma_old.is_finite()) {
        return Err(ReuseError::NotPartial {
            sigma_new,
            sigma_old,
        });
    }
    let ratio = sigma_new / sigma_old;
    let fraction = ratio * ratio;
    // sqrt(σ_new² − f²σ_old²) = σ_new · sqrt(1 − f)
    let sigma_extra = sigma_new * (1.0 - fraction).sqrt();
    let sigma_eff =
        sigma_old * sigma_new / ((sigma_old - sigma_new) * (sigma_old + sigma_new)).sqrt();
    Ok(PartialParams {
        fraction,
        sigma_extra,
        sigma_eff,
    })
}

/// Chooses the reuse route for a request needing `sigma_new`.
pub fn decide(key: &QueryKey, sigma_new: Sigma, index: &HistoryIndex) -> ReuseDecision {
    let sigma_new = sigma_new.get();
    let entries = index.entries(key);
    let Some(min) = index.min_sigma(key) else {
        return ReuseDecision::Fresh { sigma_new };
    };

    if let Some(e) = entries.iter().find(|e| sigmas_match(e.sigma, sigma_new)) {
        return ReuseDecision::ExactMatch {
            base_record_index: e.record_index,
            sigma_base: e.sigma,
            base_answer: e.answer,
        };
    }

    if sigma_new >= min.sigma {
        // Largest σ not above the target; earliest on ties.
        let base = entries
            .iter()
            .filter(|e| e.sigma <= sigma_new)
            .fold(None::<&HistoryEntry>, |best, e| match best {
                Some(b) if b.sigma >= e.sigma => Some(b),
                _ => Some(e),
            })
            .expect("min entry qualifies");
        let sigma_topup = ((sigma_new - base.sigma) * (sigma_new + base.sigma))
            .max(0.0)
            .sqrt();
        return ReuseDecision::FullReuse {
            base_record_index: base.record_index,
            sigma_base: base.sigma,
            base_answer: base.answer,
            sigma_new,
            sigma_topup,
        };
    }

    let p = partial_params(sigma_new, min.sigma).expect("sigma_new < sigma_min");
    ReuseDecision::PartialReuse {
        base_record_index: min.record_index,
        sigma_base: min.sigma,
        base_answer: min.answer,
        sigma_new,
        fraction: p.fraction,
        sigma_extra: p.sigma_extra,
        sigma_eff: p.sigma_eff,
    }
}

/// Outcome of executing a [`ReuseDecision`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Release {
    pub answer: f64,
    pub charged_epsilon: f64,
    pub charged_delta: f64,
    pub decision: ReuseDecision,
    pub sigma: Sigma,
}

/// Produces the released answer for `decision`.
///
/// `true_value` is only read by the Fresh and PartialReuse routes and may be
/// `None` for the others.
pub fn execute<N: NoiseSource + ?Sized>(
    decision: ReuseDecision,
    true_value: Option<f64>,
    requested: PrivacyParams,
    sens: Sensitivity,
    rng: &mut N,
) -> Result<Release, ReuseError> {
    let truth = || true_value.ok_or(ReuseError::MissingTrueValue(decision.kind()));
    let answer = match decision {
        ReuseDecision::Fresh { sigma_new } => truth()? + sigma_new * rng.standard_normal(),
        ReuseDecision::ExactMatch { base_answer, .. } => base_answer,
        ReuseDecision::FullReuse {
            base_answer,
            sigma_topup,
            ..
        } => base_answer + sigma_topup * rng.standard_normal(),
        ReuseDecision::PartialReuse {
            base_answer,
            fraction,
            sigma_extra,
            ..
        } => {
            let truth = truth()?;
            let old_noise = base_answer - truth;
            truth + fraction * old_noise + sigma_extra * rng.standard_normal()
        }
    };
    let cost = decision.cost(requested, sens);
    Ok(Release {
        answer,
        charged_epsilon: cost.epsilon,
        charged_delta: cost.delta,
        decision,
        sigma: decision.sigma(),
    })
}
