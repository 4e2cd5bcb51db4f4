use std::collections::{HashMap, HashSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldKind {
    /// One-hot block of `cardinality` slots; slot 0 is out-of-vocabulary.
    Categorical { cardinality: usize },
    /// A single slot carrying the raw value.
    Numeric,
}

impl FieldKind {
    pub fn slots(self) -> usize {
        match self {
            FieldKind::Categorical { cardinality } => cardinality,
            FieldKind::Numeric => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    /// Offset of this field's first feature in the global feature space.
    pub index_base: usize,
}

impl FieldSpec {
    pub fn slots(&self) -> usize {
        self.kind.slots()
    }

    pub fn feature_range(&self) -> Range<usize> {
        self.index_base..self.index_base + self.slots()
    }
}

/// Ordered field declaration; the coordinate system for features and
/// field-aware lookups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSchema {
    fields: Vec<FieldSpec>,
    label_column: String,
    hash_seed: u64,
}

impl FieldSchema {
    /// Builds a schema, assigning each field's `index_base` as the exclusive
    /// prefix sum of slot counts.
    pub fn new(
        fields: Vec<(String, FieldKind)>,
        label_column: impl Into<String>,
        hash_seed: u64,
    ) -> Result<Self, DataError> {
        if fields.len() < 2 {
            return Err(DataError::Schema(format!(
                "need at least 2 feature fields for pairwise interactions, got {}",
                fields.len()
            )));
        }
        let mut seen = HashSet::new();
        let mut base = 0;
        let mut specs = Vec::with_capacity(fields.len());
        for (name, kind) in fields {
            if !seen.insert(name.clone()) {
                return Err(DataError::Schema(format!("duplicate field name {name:?}")));
            }
            if let FieldKind::Categorical { cardinality } = kind {
                if cardinality < 2 {
                    return Err(DataError::Schema(format!(
                        "field {name:?} has cardinality {cardinality}; need at least 2 (slot 0 is out-of-vocabulary)"
                    )));
                }
            }
            specs.push(FieldSpec {
                name,
                kind,
                index_base: base,
            });
            base += kind.slots();
        }
        Ok(Self {
            fields: specs,
            label_column: label_column.into(),
            hash_seed,
        })
    }

    /// All-categorical schema with generated field names `f0, f1, ...`.
    pub fn categorical(cardinalities: &[usize]) -> Result<Self, DataError> {
        let fields = cardinalities
            .iter()
            .enumerate()
            .map(|(i, &c)| (format!("f{i}"), FieldKind::Categorical { cardinality: c }))
            .collect();
        Self::new(fields, "click", 0)
    }

    pub fn fields(&self) -> &[FieldSpec] {
        &self.fields
    }

    pub fn field(&self, t: usize) -> &FieldSpec {
        &self.fields[t]
    }

    pub fn num_fields(&self) -> usize {
        self.fields.len()
    }

    /// Global feature count `n`.
    pub fn num_features(&self) -> usize {
        self.fields.last().map_or(0, |f| f.index_base + f.slots())
    }

    pub fn label_column(&self) -> &str {
        &self.label_column
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    /// Field owning global feature `index`.
    pub fn field_of_feature(&self, index: usize) -> Option<usize> {
        if index >= self.num_features() {
            return None;
        }
        Some(self.fields.partition_point(|f| f.index_base <= index) - 1)
    }

    /// Re-derives the index bases, rejecting schemas that were deserialized
    /// with inconsistent offsets.
    pub fn validate(&self) -> Result<(), DataError> {
        let rebuilt = Self::new(
            self.fields.iter().map(|f| (f.name.clone(), f.kind)).collect(),
            self.label_column.clone(),
            self.hash_seed,
        )?;
        if rebuilt.fields != self.fields {
            return Err(DataError::Schema("index_base values are not prefix sums".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindHint {
    Categorical,
    Numeric,
}

/// How to turn a CSV header into a [`FieldSchema`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaOptions {
    pub label_column: String,
    /// Columns that are not features (row ids, timestamps).
    pub ignore_columns: Vec<String>,
    pub kind_hints: HashMap<String, KindHint>,
    pub default_buckets: usize,
    pub hash_buckets: HashMap<String, usize>,
    pub hash_seed: u64,
}

impl Default for SchemaOptions {
    fn default() -> Self {
        Self {
            label_column: "click".into(),
            ignore_columns: vec!["id".into(), "hour".into()],
            kind_hints: HashMap::new(),
            default_buckets: 1 << 10,
            hash_buckets: HashMap::new(),
            hash_seed: 0,
        }
    }
}

/// One field per non-label, non-ignored column. Categorical cardinality is
/// the column's bucket count plus one out-of-vocabulary slot.
pub fn infer_schema(header: &[String], opts: &SchemaOptions) -> Result<FieldSchema, DataError> {
    let mut seen = HashSet::new();
    for col in header {
        if !seen.insert(col.as_str()) {
            return Err(DataError::Schema(format!("duplicate column {col:?}")));
        }
    }
    let mut fields = Vec::new();
    for col in header {
        if *col == opts.label_column || opts.ignore_columns.contains(col) {
            continue;
        }
        let kind = match opts.kind_hints.get(col).copied().unwrap_or(KindHint::Categorical) {
            KindHint::Numeric => FieldKind::Numeric,
            KindHint::Categorical => {
                let buckets = opts.hash_buckets.get(col).copied().unwrap_or(opts.default_buckets);
                if buckets == 0 {
                    return Err(DataError::Schema(format!("column {col:?} has zero hash buckets")));
                }
                FieldKind::Categorical {
                    cardinality: buckets + 1,
                }
            }
        };
        fields.push((col.clone(), kind));
    }
    FieldSchema::new(fields, opts.label_column.clone(), opts.hash_seed)
}
