use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dp::{Column, Schema};
use crate::ledger::FeeSchedule;
use crate::service::ServiceError;

/// Service configuration, read from TOML.
///
/// ```toml
/// dataset = "patients.csv"
/// data_dir = "state"
/// listen = "127.0.0.1:8080"
/// seed = 7
///
/// [budget]
/// epsilon = 10.0
/// delta = 1e-3
///
/// [fees]
/// base_fee = 0.001
/// per_byte_fee = 1e-6
///
/// [[schema]]
/// name = "age"
/// lo = 0
/// hi = 120
///
/// [[accounts]]
/// balance = 10.0
/// ```
///
/// Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub dataset: PathBuf,
    pub data_dir: PathBuf,
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    /// Fixed noise seed for reproducible runs. Omit in real deployments.
    #[serde(default)]
    pub seed: Option<u64>,
    pub budget: BudgetConfig,
    #[serde(default)]
    pub fees: FeeSchedule,
    pub schema: Vec<Column>,
    #[serde(default)]
    pub accounts: Vec<AccountConfig>,
    /// fsync every commit. Turning this off voids crash consistency.
    #[serde(default = "default_true")]
    pub sync: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    pub epsilon: f64,
    pub delta: f64,
}

/// Initial account. Without an `id`, a random address is generated the
/// first time the data directory is initialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccountConfig {
    #[serde(default)]
    pub id: Option<String>,
    pub balance: f64,
}

fn default_listen() -> SocketAddr {
    ([127, 0, 0, 1], 8080).into()
}

fn default_true() -> bool {
    true
}

impl ServiceConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative_to(base);
        }
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn resolve_relative_to(&mut self, base: &Path) {
        if self.dataset.is_relative() {
            self.dataset = base.join(&self.dataset);
        }
        if self.data_dir.is_relative() {
            self.data_dir = base.join(&self.data_dir);
        }
    }

    pub fn schema(&self) -> Result<Schema, ServiceError> {
        Schema::new(self.schema.clone()).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.data_dir.join(super::store::LEDGER_FILE)
    }
}
