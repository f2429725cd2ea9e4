#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const PAYER: &str = "00000000000000000000000000000000000000aa";

pub const DATASET: &str = "age,income\n25,100\n35,400\n45,250\n28,50\n61,900\n";

pub const HEADER: &str = "kind,column,comparator,constant,epsilon,delta,repeats";

pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    /// Dataset plus config with a large budget and a funded payer.
    pub fn new() -> Self {
        Self::with_budget(1000.0)
    }

    pub fn with_budget(epsilon: f64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("data.csv"), DATASET).unwrap();
        let config = format!(
            r#"dataset = "data.csv"
data_dir = "state"
seed = 7

[budget]
epsilon = {epsilon:?}
delta = 0.1

[[schema]]
name = "age"
lo = 0
hi = 100

[[schema]]
name = "income"
lo = 0
hi = 1000

[[accounts]]
id = "{PAYER}"
balance = 1000.0
"#
        );
        std::fs::write(dir.path().join("config.toml"), config).unwrap();
        Fixture { dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn config(&self) -> PathBuf {
        self.path("config.toml")
    }

    pub fn ledger(&self) -> PathBuf {
        self.path("state/ledger.jsonl")
    }

    pub fn data_dir(&self) -> PathBuf {
        self.path("state")
    }

    pub fn write_workload(&self, rows: &[&str]) -> PathBuf {
        let path = self.path("workload.csv");
        std::fs::write(&path, format!("{HEADER}\n{}\n", rows.join("\n"))).unwrap();
        path
    }

    pub fn simulate(&self, workload: &Path, out: &Path, extra_env: Option<(&str, &str)>) -> Output {
        let mut cmd = dpledger();
        cmd.args(["simulate", "--config"])
            .arg(self.config())
            .arg("--workload")
            .arg(workload)
            .arg("--out")
            .arg(out);
        if let Some((k, v)) = extra_env {
            cmd.env(k, v);
        }
        cmd.output().unwrap()
    }
}

pub fn dpledger() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dpledger"));
    cmd.env_remove("DPLEDGER_FAULT").env_remove("RUST_LOG");
    cmd
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub index: u64,
    pub reuse_kind: String,
    pub charged_epsilon: f64,
    pub cum_actual_epsilon: f64,
    pub cum_naive_epsilon: f64,
}

pub fn read_rows(path: &Path) -> Vec<SimRow> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("index,reuse_kind,charged_epsilon,cum_actual_epsilon,cum_naive_epsilon")
    );
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            SimRow {
                index: f[0].parse().unwrap(),
                reuse_kind: f[1].to_string(),
                charged_epsilon: f[2].parse().unwrap(),
                cum_actual_epsilon: f[3].parse().unwrap(),
                cum_naive_epsilon: f[4].parse().unwrap(),
            }
        })
        .collect()
}
