//! Immutable numeric datasets and exact query evaluation.

use std::path::{Path, PathBuf};

use crate::dp::Schema;
use crate::query::{QueryDescriptor, QueryError, QueryKind};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("row {row}: expected {expected} cells, found {found}")]
    RowWidth {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column:?}: {cell:?} is not a number")]
    NonNumeric {
        row: usize,
        column: String,
        cell: String,
    },
    #[error("row {row}, column {column:?}: {value} outside [{lo}, {hi}]")]
    OutOfBounds {
        row: usize,
        column: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("MEAN over an empty selection")]
    EmptySelection,
    #[error(transparent)]
    Query(#[from] QueryError),
}

/// A frozen table of bounded numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset from in-memory rows. Row numbers in errors are 1-based.
    pub fn from_rows(schema: Schema, rows: Vec<Vec<f64>>) -> Result<Self, DatasetError> {
        for (i, row) in rows.iter().enumerate() {
            check_row(&schema, i + 1, row)?;
        }
        Ok(Dataset { schema, rows })
    }

    /// Loads a comma-separated file whose header lists exactly the schema's
    /// columns, in order.
    pub fn load_csv(path: impl AsRef<Path>, schema: Schema) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::read_csv(file, schema)
    }

    pub fn read_csv(reader: impl std::io::Read, schema: Schema) -> Result<Self, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let expected: Vec<String> = schema.columns().iter().map(|c| c.name.clone()).collect();
        let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if found != expected {
            return Err(DatasetError::HeaderMismatch { expected, found });
        }
        let mut rows = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let row_no = i + 1;
            if record.len() != expected.len() {
                return Err(DatasetError::RowWidth {
                    row: row_no,
                    expected: expected.len(),
                    found: record.len(),
                });
            }
            let mut row = Vec::with_capacity(record.len());
            for (cell, col) in record.iter().zip(schema.columns()) {
                let v: f64 = cell.parse().map_err(|_| DatasetError::NonNumeric {
                    row: row_no,
                    column: col.name.clone(),
                    cell: cell.to_string(),
                })?;
                row.push(v);
            }
            check_row(&schema, row_no, &row)?;
            rows.push(row);
        }
        Ok(Dataset { schema, rows })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Exact answer of `desc` over the rows matching its predicate.
    pub fn evaluate(&self, desc: &QueryDescriptor) -> Result<f64, DatasetError> {
        desc.validate(&self.schema)?;
        let filter = desc.predicate.as_ref().map(|p| {
            (
                self.schema.position(&p.column).expect("validated"),
                p.op,
                p.value,
            )
        });
        let selected = self.rows.iter().filter(|row| match filter {
            None => true,
            Some((pos, op, value)) => op.holds(row[pos], value),
        });
        let target = desc
            .column
            .as_deref()
            .map(|c| self.schema.position(c).expect("validated"));
        match desc.kind {
            QueryKind::Count => Ok(selected.count() as f64),
            QueryKind::Sum => Ok(selected.map(|r| r[target.expect("validated")]).sum()),
            QueryKind::Mean => {
                let pos = target.expect("validated");
                let (sum, n) = selected.fold((0.0, 0usize), |(s, n), r| (s + r[pos], n + 1));
                if n == 0 {
                    Err(DatasetError::EmptySelection)
                } else {
                    Ok(sum / n as f64)
                }
            }
        }
    }
}

fn check_row(schema: &Schema, row: usize, values: &[f64]) -> Result<(), DatasetError> {
    if values.len() != schema.columns().len() {
        return Err(DatasetError::RowWidth {
            row,
            expected: schema.columns().len(),
            found: values.len(),
        });
    }
    for (v, col) in values.iter().zip(schema.columns()) {
        if !col.contains(*v) {
            return Err(DatasetError::OutOfBounds {
                row,
                column: col.name.clone(),
                value: *v,
                lo: col.lo,
                hi: col.hi,
            });
        }
    }
    Ok(())
}
