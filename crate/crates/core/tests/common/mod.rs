#![allow(dead_code)]

use std::path::Path;

use dpledger_core::service::{AccountConfig, BudgetConfig};
use dpledger_core::{
    Column, Dataset, FeeSchedule, QueryDescriptor, QueryRequest, Schema, ServiceConfig,
};

pub const PAYER: &str = "00000000000000000000000000000000000000aa";
pub const POOR: &str = "00000000000000000000000000000000000000bb";

pub fn columns() -> Vec<Column> {
    vec![
        Column::new("age", 0.0, 100.0),
        Column::new("income", 0.0, 1000.0),
    ]
}

pub fn dataset() -> Dataset {
    let rows = vec![
        vec![25.0, 100.0],
        vec![35.0, 400.0],
        vec![45.0, 250.0],
        vec![28.0, 50.0],
        vec![61.0, 900.0],
    ];
    Dataset::from_rows(Schema::new(columns()).unwrap(), rows).unwrap()
}

pub fn config(dir: &Path, budget_epsilon: f64) -> ServiceConfig {
    ServiceConfig {
        dataset: dir.join("unused.csv"),
        data_dir: dir.join("data"),
        listen: ([127, 0, 0, 1], 0).into(),
        seed: Some(42),
        budget: BudgetConfig {
            epsilon: budget_epsilon,
            delta: 1e-2,
        },
        fees: FeeSchedule::default(),
        schema: columns(),
        accounts: vec![
            AccountConfig {
                id: Some(PAYER.into()),
                balance: 100.0,
            },
            AccountConfig {
                id: Some(POOR.into()),
                balance: 0.0001,
            },
        ],
        sync: false,
    }
}

pub fn request(descriptor: QueryDescriptor, epsilon: f64) -> QueryRequest {
    QueryRequest {
        account_id: PAYER.into(),
        descriptor,
        epsilon,
        delta: 1e-5,
    }
}
