//! Crash-injection points inside the query commit path.
//!
//! A [`FaultHook`] is called at each point; test harnesses use it to abort
//! the process and check that restart recovery leaves no half-applied query.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FaultPoint {
    /// Staged in memory, nothing written yet.
    BeforeJournal,
    /// Pending entry journaled, ledger untouched.
    AfterJournal,
    /// Part of the record line written to the ledger file.
    TornLedgerWrite,
    /// Record durable on the ledger, state snapshot still old.
    AfterLedgerAppend,
    /// New state snapshot written to its temp file but not renamed.
    AfterStateTemp,
    /// State snapshot replaced, journal not yet cleared.
    AfterStateCommit,
    /// Everything done.
    AfterJournalClear,
}

impl FaultPoint {
    pub const ALL: [FaultPoint; 7] = [
        FaultPoint::BeforeJournal,
        FaultPoint::AfterJournal,
        FaultPoint::TornLedgerWrite,
        FaultPoint::AfterLedgerAppend,
        FaultPoint::AfterStateTemp,
        FaultPoint::AfterStateCommit,
        FaultPoint::AfterJournalClear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultPoint::BeforeJournal => "before-journal",
            FaultPoint::AfterJournal => "after-journal",
            FaultPoint::TornLedgerWrite => "torn-ledger-write",
            FaultPoint::AfterLedgerAppend => "after-ledger-append",
            FaultPoint::AfterStateTemp => "after-state-temp",
            FaultPoint::AfterStateCommit => "after-state-commit",
            FaultPoint::AfterJournalClear => "after-journal-clear",
        }
    }
}

impl fmt::Display for FaultPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultPoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FaultPoint::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown fault point {s:?}"))
    }
}

pub type FaultHook = Arc<dyn Fn(FaultPoint) + Send + Sync>;

/// Hook that aborts the process the `nth` time (1-based) `point` is reached.
pub fn abort_at(point: FaultPoint, nth: u64) -> FaultHook {
    let hits = std::sync::atomic::AtomicU64::new(0);
    Arc::new(move |p| {
        if p == point && hits.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1 == nth {
            std::process::abort();
        }
    })
}

/// Parses `point:nth`, the format of the `DPLEDGER_FAULT` environment variable.
pub fn parse_spec(spec: &str) -> Result<(FaultPoint, u64), String> {
    let (p, n) = spec
        .split_once(':')
        .ok_or_else(|| format!("expected point:nth, got {spec:?}"))?;
    let nth: u64 = n.parse().map_err(|_| format!("invalid occurrence {n:?}"))?;
    if nth == 0 {
        return Err("occurrence is 1-based".into());
    }
    Ok((p.parse()?, nth))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsing() {
        assert_eq!(
            parse_spec("after-journal:3"),
            Ok((FaultPoint::AfterJournal, 3))
        );
        assert!(parse_spec("after-journal").is_err());
        assert!(parse_spec("after-journal:0").is_err());
        assert!(parse_spec("nowhere:1").is_err());
        for p in FaultPoint::ALL {
            assert_eq!(p.as_str().parse::<FaultPoint>(), Ok(p));
        }
    }
}
