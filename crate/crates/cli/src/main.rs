//! `dpledger`: run, inspect and exercise the private query service.

mod simulate;
mod workload;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Parser, Subcommand};
use dpledger_core::fault::{self, FaultHook};
use dpledger_core::ledger::{self, Verification};
use dpledger_core::{Cost, CostReport, QueryService, ServiceConfig};
use serde::Serialize;

/// Environment variable that makes the process abort at a named point
/// inside query submission (`point:nth`). Used by crash-consistency tests.
const FAULT_ENV: &str = "DPLEDGER_FAULT";

#[derive(Debug, Parser)]
#[command(
    name = "dpledger",
    version,
    about = "Differentially private queries with noise reuse over a hash-chained ledger"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Load and check the dataset, initialize the data directory and print
    /// the accounts.
    Ingest {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check a ledger's hash chain. Exits 0 iff it is intact.
    Verify {
        #[arg(long)]
        ledger: PathBuf,
    },
    /// Run a workload and write per-query naive-vs-actual costs as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Noise seed; overrides the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Data directory; overrides the config. Must not hold a ledger yet.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Paying account; defaults to the first configured one.
        #[arg(long)]
        account: Option<String>,
    },
    /// Recompute the naive-vs-actual cost report from a ledger.
    Report {
        #[arg(long)]
        ledger: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Serve { config } => serve(&config),
        Command::Ingest { config } => ingest(&config),
        Command::Verify { ledger } => verify(&ledger),
        Command::Simulate {
            config,
            workload,
            out,
            seed,
            data_dir,
            account,
        } => {
            let opts = simulate::Options {
                config,
                workload,
                out,
                seed,
                data_dir,
                account,
            };
            let rows = simulate::run(&opts, fault_from_env()?)?;
            if let Some(last) = rows.last() {
                eprintln!(
                    "{} queries: actual epsilon {}, naive epsilon {}",
                    rows.len(),
                    last.cum_actual_epsilon,
                    last.cum_naive_epsilon
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { ledger } => report(&ledger),
    }
}

fn fault_from_env() -> anyhow::Result<Option<FaultHook>> {
    match std::env::var(FAULT_ENV) {
        Ok(spec) => {
            let (point, nth) = fault::parse_spec(&spec)
                .map_err(anyhow::Error::msg)
                .context(FAULT_ENV)?;
            Ok(Some(fault::abort_at(point, nth)))
        }
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e).context(FAULT_ENV),
    }
}

fn open(config: &Path) -> anyhow::Result<(ServiceConfig, QueryService)> {
    let config = ServiceConfig::load(config)?;
    let svc = QueryService::open_with_fault(&config, fault_from_env()?)?;
    Ok((config, svc))
}

fn serve(config: &Path) -> anyhow::Result<ExitCode> {
    let (config, svc) = open(config)?;
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    runtime.block_on(dpledger_core::service::api::serve(
        Arc::new(svc),
        config.listen,
    ))?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct IngestSummary {
    rows: usize,
    ledger_records: u64,
    accounts: Vec<dpledger_core::Account>,
}

fn ingest(config: &Path) -> anyhow::Result<ExitCode> {
    let (_, svc) = open(config)?;
    let summary = IngestSummary {
        rows: svc.dataset().len(),
        ledger_records: svc.meta().ledger_records,
        accounts: svc.accounts(),
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(ExitCode::SUCCESS)
}

fn verify(path: &Path) -> anyhow::Result<ExitCode> {
    match ledger::verify_file(path)? {
        Verification::Ok { records } => {
            println!("ok: {records} records");
            Ok(ExitCode::SUCCESS)
        }
        Verification::Broken {
            first_bad_index,
            reason,
        } => {
            println!("broken at record {first_bad_index}: {reason}");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn report(path: &Path) -> anyhow::Result<ExitCode> {
    let records = match ledger::verify_file(path)? {
        Verification::Ok { .. } => ledger::read_records(path)?,
        Verification::Broken {
            first_bad_index,
            reason,
        } => {
            anyhow::bail!("ledger broken at record {first_bad_index}: {reason}")
        }
    };
    let report = CostReport::from_charges(records.iter().map(|r| {
        (
            Cost::new(r.charged_epsilon, r.charged_delta),
            Cost::new(r.requested_epsilon, r.requested_delta),
        )
    }));
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}
