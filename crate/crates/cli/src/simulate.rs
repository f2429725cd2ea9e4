//! Runs a workload through the in-process query pipeline and records, per
//! query, what was charged and the running naive-vs-actual totals.

use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context};
use dpledger_core::dataset::DatasetError;
use dpledger_core::fault::FaultHook;
use dpledger_core::{Dataset, QueryRequest, QueryService, ServiceConfig, ServiceError};

use crate::workload::{self, WorkloadItem};

pub const HEADER: [&str; 5] = [
    "index",
    "reuse_kind",
    "charged_epsilon",
    "cum_actual_epsilon",
    "cum_naive_epsilon",
];

/// Seed used when neither the command line nor the config fixes one, so
/// that simulations are reproducible by default.
pub const DEFAULT_SEED: u64 = 0;

pub struct Options {
    pub config: PathBuf,
    pub workload: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub account: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub index: u64,
    /// `None` when the service rejected the query.
    pub reuse_kind: Option<String>,
    pub charged_epsilon: f64,
    pub cum_actual_epsilon: f64,
    pub cum_naive_epsilon: f64,
}

impl Row {
    fn fields(&self) -> [String; 5] {
        [
            self.index.to_string(),
            self.reuse_kind.clone().unwrap_or_else(|| "Rejected".into()),
            self.charged_epsilon.to_string(),
            self.cum_actual_epsilon.to_string(),
            self.cum_naive_epsilon.to_string(),
        ]
    }
}

/// Per-query outcomes the simulation records instead of aborting.
fn is_rejection(e: &ServiceError) -> bool {
    matches!(
        e,
        ServiceError::BudgetExceeded { .. }
            | ServiceError::InsufficientFunds { .. }
            | ServiceError::Dataset(DatasetError::EmptySelection)
    )
}

pub fn run(opts: &Options, fault: Option<FaultHook>) -> anyhow::Result<Vec<Row>> {
    let mut config = ServiceConfig::load(&opts.config)?;
    if let Some(dir) = &opts.data_dir {
        config.data_dir = dir.clone();
    }
    config.seed = Some(opts.seed.or(config.seed).unwrap_or(DEFAULT_SEED));

    let schema = config.schema()?;
    let items = workload::read(&opts.workload, &schema)?;
    let dataset = Dataset::load_csv(&config.dataset, schema)?;
    let ledger = config.ledger_path();
    if ledger.exists() {
        bail!(
            "{} already exists; simulate needs a fresh data directory",
            ledger.display()
        );
    }
    let payer = payer(&config, opts.account.as_deref())?;

    let svc = QueryService::open_with_dataset(&config, dataset, fault)?;
    let payer = match payer {
        Some(p) => p,
        None => match svc.accounts().as_slice() {
            [only] => only.id.to_string(),
            _ => bail!("several accounts configured; pass --account or give the first one an id"),
        },
    };

    let out = std::fs::File::create(&opts.out)
        .with_context(|| format!("creating {}", opts.out.display()))?;
    let mut csv = csv::Writer::from_writer(std::io::BufWriter::new(out));
    csv.write_record(HEADER)?;
    let mut rows = Vec::new();
    let mut index = 0u64;
    for WorkloadItem {
        descriptor,
        params,
        repeats,
    } in items
    {
        let req = QueryRequest {
            account_id: payer.clone(),
            descriptor,
            epsilon: params.epsilon(),
            delta: params.delta(),
        };
        for _ in 0..repeats {
            let (reuse_kind, charged) = match svc.submit_query(&req) {
                Ok(resp) => (Some(resp.reuse_kind.to_string()), resp.privacy_cost_epsilon),
                Err(e) if is_rejection(&e) => (None, 0.0),
                Err(e) => return Err(e).with_context(|| format!("query {index}")),
            };
            let budget = svc.budget();
            let row = Row {
                index,
                reuse_kind,
                charged_epsilon: charged,
                cum_actual_epsilon: budget.report.actual_epsilon_total,
                cum_naive_epsilon: budget.report.naive_epsilon_total,
            };
            csv.write_record(row.fields())?;
            rows.push(row);
            index += 1;
        }
    }
    csv.into_inner().map_err(|e| e.into_error())?.flush()?;
    Ok(rows)
}

fn payer(config: &ServiceConfig, flag: Option<&str>) -> anyhow::Result<Option<String>> {
    if let Some(a) = flag {
        return Ok(Some(a.to_string()));
    }
    match config.accounts.first() {
        None => bail!("the config defines no accounts to pay for queries"),
        Some(a) => Ok(a.id.clone()),
    }
}
