//! Tabular decision cases: schema, validated datasets, CSV interchange,
//! order statistics, and a seeded synthetic generator.

mod csv_io;
mod schema;
mod stats;
mod synthetic;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use csv_io::{load_dataset, read_dataset, write_dataset};
pub use schema::{
    ApplicantProfile, Attribute, AttributeKind, BinaryDecision, CategoricalEncoding, DecisionLabel,
    Schema, Value,
};
pub use stats::{pearson, quantile_sorted, StatsSummary};
pub use synthetic::{generate_synthetic, SyntheticConfig};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("row {row}: cannot parse {column}: {reason}")]
    Unparseable {
        row: usize,
        column: String,
        reason: String,
    },
    #[error("{}attribute {attr}: {reason}", row.map(|r| format!("row {r}: ")).unwrap_or_default())]
    InvalidValue {
        row: Option<usize>,
        attr: String,
        reason: String,
    },
    #[error("case {case}: missing value for attribute {attr}")]
    MissingValue { case: String, attr: String },
    #[error("unknown attribute: {0}")]
    UnknownAttribute(String),
    #[error("attribute {0} is categorical; statistic needs a numeric or ordinal attribute")]
    NotQuantitative(String),
    #[error("dataset is empty")]
    Empty,
    #[error("train fraction {0} outside (0, 1)")]
    BadFraction(f64),
    #[error("need at least 2 rows to split, got {0}")]
    TooSmall(usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub profile: ApplicantProfile,
    pub label: DecisionLabel,
}

/// Validated rows over one schema. Immutable after construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Row>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Row>) -> Result<Self, DatasetError> {
        if rows.is_empty() {
            return Err(DatasetError::Empty);
        }
        for row in &rows {
            schema.validate_profile(&row.profile)?;
        }
        Ok(Self { schema, rows })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn find_case(&self, id: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.profile.id == id)
    }

    /// Values of a numeric or ordinal attribute, in row order.
    pub fn numeric_column(&self, attr: &str) -> Result<Vec<f64>, DatasetError> {
        let spec = self.schema.require(attr)?;
        if !spec.kind.is_quantitative() {
            return Err(DatasetError::NotQuantitative(attr.to_string()));
        }
        Ok(self
            .rows
            .iter()
            .map(|r| r.profile.number(attr).expect("validated row"))
            .collect())
    }

    pub fn summary_stats(&self, attr: &str) -> Result<StatsSummary, DatasetError> {
        let column = self.numeric_column(attr)?;
        Ok(StatsSummary::from_values(&column).expect("dataset is non-empty"))
    }

    /// Seeded random partition into `(train, test)`; row order is preserved
    /// inside each part.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DatasetError> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(DatasetError::BadFraction(train_fraction));
        }
        let n = self.rows.len();
        if n < 2 {
            return Err(DatasetError::TooSmall(n));
        }
        let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut in_train = vec![false; n];
        for &i in &order[..n_train] {
            in_train[i] = true;
        }
        let (train, test): (Vec<_>, Vec<_>) = self
            .rows
            .iter()
            .cloned()
            .zip(in_train)
            .partition(|(_, t)| *t);
        let strip = |v: Vec<(Row, bool)>| v.into_iter().map(|(r, _)| r).collect::<Vec<_>>();
        Ok((
            Dataset {
                schema: self.schema.clone(),
                rows: strip(train),
            },
            Dataset {
                schema: self.schema.clone(),
                rows: strip(test),
            },
        ))
    }
}
