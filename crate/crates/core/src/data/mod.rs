//! Click-log ingestion: schema inference, row encoding with the hashing trick,
//! day-based splitting, subsampling, and an encoded-dataset cache file.

pub mod cache;
mod encode;
mod schema;
mod split;

use serde::{Deserialize, Serialize};

pub use encode::{bucket, encode_row, hash_value, parse_label, EncodedExample, RecordLen, RowEncoder, Slot};
pub use schema::{infer_schema, FieldKind, FieldSchema, FieldSpec, KindHint, SchemaOptions};
pub use split::{load_csv_split, read_csv, split_by_day, subsample, DayLayout, RejectCounts, SplitConfig, SplitOutcome};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("split error: {0}")]
    Split(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("dataset cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Validation,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Validation => "validation",
            SplitTag::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub split: SplitTag,
}

impl Provenance {
    pub fn new(source: impl Into<String>, split: SplitTag) -> Self {
        Self {
            source: source.into(),
            split,
        }
    }
}

/// Encoded examples sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FieldSchema,
    examples: Vec<EncodedExample>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(schema: FieldSchema, examples: Vec<EncodedExample>, provenance: Provenance) -> Self {
        Self {
            schema,
            examples,
            provenance,
        }
    }

    /// Like [`Dataset::new`] but checks every example against the schema.
    pub fn checked(schema: FieldSchema, examples: Vec<EncodedExample>, provenance: Provenance) -> Result<Self, DataError> {
        for ex in &examples {
            ex.conforms_to(&schema)?;
        }
        Ok(Self::new(schema, examples, provenance))
    }

    pub fn schema(&self) -> &FieldSchema {
        &self.schema
    }

    pub fn examples(&self) -> &[EncodedExample] {
        &self.examples
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.examples.iter().filter(|e| e.label == 1).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.examples.iter().map(EncodedExample::label_f64).collect()
    }

    /// Dataset restricted to the given example indices, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }
}
