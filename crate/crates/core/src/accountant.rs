//! Per-dataset privacy budget with basic (linear) composition.
//!
//! Two totals are kept side by side: what was actually charged after reuse,
//! and what charging every request in full would have cost.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cost {
    pub epsilon: f64,
    pub delta: f64,
}

impl Cost {
    pub const ZERO: Cost = Cost {
        epsilon: 0.0,
        delta: 0.0,
    };

    pub fn new(epsilon: f64, delta: f64) -> Self {
        Cost { epsilon, delta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetDimension {
    Epsilon,
    Delta,
}

impl std::fmt::Display for BudgetDimension {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BudgetDimension::Epsilon => "epsilon",
            BudgetDimension::Delta => "delta",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BudgetError {
    #[error("privacy budget exceeded: {which} remaining {remaining}, requested {requested}")]
    Exceeded {
        which: BudgetDimension,
        remaining: f64,
        requested: f64,
    },
    #[error("invalid charge: {0}")]
    InvalidCharge(String),
    #[error("invalid budget: epsilon {epsilon}, delta {delta}")]
    InvalidBudget { epsilon: f64, delta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetState {
    pub epsilon_budget: f64,
    pub delta_budget: f64,
    pub epsilon_spent: f64,
    pub delta_spent: f64,
    pub naive_epsilon_total: f64,
    pub query_count: u64,
}

impl BudgetState {
    pub fn new(epsilon_budget: f64, delta_budget: f64) -> Result<Self, BudgetError> {
        if !(epsilon_budget.is_finite()
            && epsilon_budget > 0.0
            && delta_budget > 0.0
            && delta_budget < 1.0)
        {
            return Err(BudgetError::InvalidBudget {
                epsilon: epsilon_budget,
                delta: delta_budget,
            });
        }
        Ok(BudgetState {
            epsilon_budget,
            delta_budget,
            epsilon_spent: 0.0,
            delta_spent: 0.0,
            naive_epsilon_total: 0.0,
            query_count: 0,
        })
    }

    pub fn remaining_epsilon(&self) -> f64 {
        (self.epsilon_budget - self.epsilon_spent).max(0.0)
    }

    pub fn remaining_delta(&self) -> f64 {
        (self.delta_budget - self.delta_spent).max(0.0)
    }

    /// Returns the state after charging `actual` against the budget and
    /// `naive` against the no-reuse baseline. `self` is never modified, so a
    /// rejected charge leaves no trace.
    pub fn charge(&self, actual: Cost, naive: Cost) -> Result<BudgetState, BudgetError> {
        let valid = |c: Cost| {
            c.epsilon.is_finite() && c.epsilon >= 0.0 && c.delta.is_finite() && c.delta >= 0.0
        };
        if !valid(actual) || !valid(naive) {
            return Err(BudgetError::InvalidCharge(format!(
                "actual {actual:?}, naive {naive:?}"
            )));
        }
        if actual.epsilon > naive.epsilon {
            return Err(BudgetError::InvalidCharge(format!(
                "actual epsilon {} exceeds naive epsilon {}",
                actual.epsilon, naive.epsilon
            )));
        }
        let epsilon_spent = self.epsilon_spent + actual.epsilon;
        if epsilon_spent > self.epsilon_budget {
            return Err(BudgetError::Exceeded {
                which: BudgetDimension::Epsilon,
                remaining: self.remaining_epsilon(),
                requested: actual.epsilon,
            });
        }
        let delta_spent = self.delta_spent + actual.delta;
        if delta_spent > self.delta_budget {
            return Err(BudgetError::Exceeded {
                which: BudgetDimension::Delta,
                remaining: self.remaining_delta(),
                requested: actual.delta,
            });
        }
        Ok(self.applied(actual, naive))
    }

    /// Adds the charge without budget checks; used when replaying an
    /// already-committed history.
    pub fn applied(&self, actual: Cost, naive: Cost) -> BudgetState {
        BudgetState {
            epsilon_spent: self.epsilon_spent + actual.epsilon,
            delta_spent: self.delta_spent + actual.delta,
            naive_epsilon_total: self.naive_epsilon_total + naive.epsilon,
            query_count: self.query_count + 1,
            ..*self
        }
    }

    pub fn report(&self) -> CostReport {
        CostReport::new(
            self.naive_epsilon_total,
            self.epsilon_spent,
            self.query_count,
        )
    }
}

/// Naive-versus-actual accumulated ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub naive_epsilon_total: f64,
    pub actual_epsilon_total: f64,
    /// actual / naive, or 0 when nothing has been charged.
    pub savings_ratio: f64,
    pub query_count: u64,
}

impl CostReport {
    pub fn new(naive_epsilon_total: f64, actual_epsilon_total: f64, query_count: u64) -> Self {
        let savings_ratio = if naive_epsilon_total == 0.0 {
            0.0
        } else {
            (actual_epsilon_total / naive_epsilon_total).clamp(0.0, 1.0)
        };
        CostReport {
            naive_epsilon_total,
            actual_epsilon_total,
            savings_ratio,
            query_count,
        }
    }

    /// Sums `(actual, naive)` charges in order.
    pub fn from_charges(charges: impl IntoIterator<Item = (Cost, Cost)>) -> Self {
        let (mut naive, mut actual, mut n) = (0.0, 0.0, 0u64);
        for (a, b) in charges {
            actual += a.epsilon;
            naive += b.epsilon;
            n += 1;
        }
        CostReport::new(naive, actual, n)
    }
}
