//! Workload files for `simulate`.
//!
//! One query per row, repeated `repeats` times:
//!
//! ```csv
//! kind,column,comparator,constant,epsilon,delta,repeats
//! COUNT,age,>,30,1.0,1e-5,100
//! SUM,income,,,0.5,1e-5,3
//! ```
//!
//! For COUNT, `column` names the filtered column (COUNT itself takes none).
//! For SUM and MEAN, `column` is the aggregated column and the filter, if
//! any, applies to the same column unless an optional `predicate_column`
//! says otherwise. An empty `comparator` means no filter.

use std::path::Path;

use anyhow::{bail, Context};
use dpledger_core::{Comparator, PrivacyParams, QueryDescriptor, QueryKind, Schema};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadItem {
    pub descriptor: QueryDescriptor,
    pub params: PrivacyParams,
    pub repeats: u32,
}

#[derive(Debug, Deserialize)]
struct Row {
    kind: String,
    #[serde(default)]
    column: String,
    #[serde(default)]
    comparator: String,
    #[serde(default)]
    constant: String,
    epsilon: f64,
    delta: f64,
    repeats: u32,
    #[serde(default)]
    predicate_column: String,
}

impl Row {
    fn into_item(self, schema: &Schema) -> anyhow::Result<WorkloadItem> {
        let kind: QueryKind = self.kind.parse()?;
        let column = self.column.trim();
        let pred_column = match self.predicate_column.trim() {
            "" => column,
            c => c,
        };
        let mut descriptor = match kind {
            QueryKind::Count => QueryDescriptor::count(),
            QueryKind::Sum => QueryDescriptor::sum(column),
            QueryKind::Mean => QueryDescriptor::mean(column),
        };
        match self.comparator.trim() {
            "" => {
                if !self.constant.trim().is_empty() {
                    bail!("constant given without a comparator");
                }
            }
            op => {
                let op: Comparator = op.parse()?;
                let value: f64 = self
                    .constant
                    .trim()
                    .parse()
                    .with_context(|| format!("invalid constant {:?}", self.constant))?;
                if pred_column.is_empty() {
                    bail!("a filter needs a column");
                }
                descriptor = descriptor.filter(pred_column, op, value);
            }
        }
        descriptor.validate(schema)?;
        let params = PrivacyParams::new(self.epsilon, self.delta)?;
        if self.repeats == 0 {
            bail!("repeats must be at least 1");
        }
        Ok(WorkloadItem {
            descriptor,
            params,
            repeats: self.repeats,
        })
    }
}

/// Reads and fully validates a workload against `schema`.
pub fn read(path: &Path, schema: &Schema) -> anyhow::Result<Vec<WorkloadItem>> {
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse(file, schema).with_context(|| format!("in workload {}", path.display()))
}

pub fn parse(reader: impl std::io::Read, schema: &Schema) -> anyhow::Result<Vec<WorkloadItem>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut items = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let mut record = record.with_context(|| format!("line {line}"))?;
        // Trailing optional columns may be left off.
        while record.len() < headers.len() {
            record.push_field("");
        }
        let row: Row = record
            .deserialize(Some(&headers))
            .with_context(|| format!("line {line}"))?;
        items.push(
            row.into_item(schema)
                .with_context(|| format!("line {line}"))?,
        );
    }
    if items.is_empty() {
        bail!("workload is empty");
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use dpledger_core::Column;

    use super::*;

    fn schema() -> Schema {
        Schema::new(vec![
            Column::new("age", 0.0, 100.0),
            Column::new("income", 0.0, 1e4),
        ])
        .unwrap()
    }

    fn parse_str(s: &str) -> anyhow::Result<Vec<WorkloadItem>> {
        parse(s.as_bytes(), &schema())
    }

    #[test]
    fn rows_become_descriptors() {
        let items = parse_str(
            "kind,column,comparator,constant,epsilon,delta,repeats\n\
             COUNT,age,>,30,1.0,1e-5,100\n\
             sum,income,,,0.5,1e-5,3\n\
             MEAN,income,>=,1000,0.5,1e-5,1\n",
        )
        .unwrap();
        assert_eq!(items[0].descriptor.to_string(), "COUNT(*) WHERE age > 30");
        assert_eq!(items[0].repeats, 100);
        assert_eq!(items[1].descriptor.to_string(), "SUM(income)");
        assert_eq!(
            items[2].descriptor.to_string(),
            "MEAN(income) WHERE income >= 1000"
        );
    }

    #[test]
    fn predicate_column_overrides_the_filter_target() {
        let items = parse_str(
            "kind,column,comparator,constant,epsilon,delta,repeats,predicate_column\n\
             SUM,income,<,40,1,1e-5,2,age\n\
             SUM,income,<,40,1,1e-5,2\n",
        )
        .unwrap();
        assert_eq!(
            items[0].descriptor.to_string(),
            "SUM(income) WHERE age < 40"
        );
        assert_eq!(
            items[1].descriptor.to_string(),
            "SUM(income) WHERE income < 40"
        );
    }

    #[test]
    fn invalid_rows_are_rejected() {
        let header = "kind,column,comparator,constant,epsilon,delta,repeats\n";
        for row in [
            "COUNT,height,>,3,1,1e-5,1",
            "SUM,,,,1,1e-5,1",
            "COUNT,age,>,,1,1e-5,1",
            "COUNT,age,~,3,1,1e-5,1",
            "COUNT,age,>,3,0,1e-5,1",
            "COUNT,age,>,3,1,0.9,1",
            "COUNT,age,>,3,1,1e-5,0",
            "MEDIAN,age,,,1,1e-5,1",
            "COUNT,,,7,1,1e-5,1",
        ] {
            assert!(parse_str(&format!("{header}{row}\n")).is_err(), "{row}");
        }
        assert!(parse_str(header).is_err());
    }
}
