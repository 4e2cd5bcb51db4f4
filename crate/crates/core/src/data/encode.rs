use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use twox_hash::XxHash64;

use super::schema::{FieldKind, FieldSchema};
use super::DataError;

/// Active feature of one field: global index and value (1.0 for one-hot).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub index: usize,
    pub value: f64,
}

/// One labeled sample with exactly one slot per field, in field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedExample {
    pub label: u8,
    pub slots: Vec<Slot>,
}

impl EncodedExample {
    pub fn label_f64(&self) -> f64 {
        f64::from(self.label)
    }

    /// Checks the one-slot-per-field and index-range invariants.
    pub fn conforms_to(&self, schema: &FieldSchema) -> Result<(), DataError> {
        if self.label > 1 {
            return Err(DataError::Parse(format!("label {} is not binary", self.label)));
        }
        if self.slots.len() != schema.num_fields() {
            return Err(DataError::Schema(format!(
                "example has {} slots, schema has {} fields",
                self.slots.len(),
                schema.num_fields()
            )));
        }
        for (t, (slot, field)) in self.slots.iter().zip(schema.fields()).enumerate() {
            if !field.feature_range().contains(&slot.index) {
                return Err(DataError::Schema(format!(
                    "slot {t} index {} outside field {:?} range {:?}",
                    slot.index,
                    field.name,
                    field.feature_range()
                )));
            }
        }
        Ok(())
    }
}

/// Pinned 64-bit hash (XXH64) of a categorical value.
pub fn hash_value(value: &str, seed: u64) -> u64 {
    XxHash64::oneshot(seed, value.as_bytes())
}

/// Bucket in `[1, cardinality)`; bucket 0 is reserved for out-of-vocabulary.
pub fn bucket(value: &str, cardinality: usize, seed: u64) -> usize {
    1 + (hash_value(value, seed) % (cardinality as u64 - 1)) as usize
}

fn encode_field(schema: &FieldSchema, t: usize, raw: Option<&str>) -> Result<Slot, DataError> {
    let field = schema.field(t);
    let raw = raw.ok_or_else(|| DataError::Parse(format!("missing column {:?}", field.name)))?;
    match field.kind {
        FieldKind::Categorical { cardinality } => {
            let raw = raw.trim();
            let offset = if raw.is_empty() {
                0
            } else {
                bucket(raw, cardinality, schema.hash_seed())
            };
            Ok(Slot {
                index: field.index_base + offset,
                value: 1.0,
            })
        }
        FieldKind::Numeric => {
            let value: f64 = raw
                .trim()
                .parse()
                .map_err(|_| DataError::Parse(format!("column {:?}: {raw:?} is not a number", field.name)))?;
            if !value.is_finite() {
                return Err(DataError::Parse(format!("column {:?}: non-finite value", field.name)));
            }
            Ok(Slot {
                index: field.index_base,
                value,
            })
        }
    }
}

pub fn parse_label(raw: &str) -> Result<u8, DataError> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(DataError::Parse(format!("label {other:?} is not 0 or 1"))),
    }
}

/// Encodes a row given as a column -> value map.
pub fn encode_row(schema: &FieldSchema, raw: &HashMap<String, String>) -> Result<EncodedExample, DataError> {
    let label = raw
        .get(schema.label_column())
        .ok_or_else(|| DataError::Parse(format!("missing label column {:?}", schema.label_column())))?;
    let label = parse_label(label)?;
    let slots = (0..schema.num_fields())
        .map(|t| encode_field(schema, t, raw.get(&schema.field(t).name).map(String::as_str)))
        .collect::<Result<_, _>>()?;
    Ok(EncodedExample { label, slots })
}

/// Column-position encoder for CSV records sharing one header.
///
/// Holds only read-only state, so one encoder can serve many threads.
#[derive(Debug, Clone)]
pub struct RowEncoder {
    schema: FieldSchema,
    field_columns: Vec<usize>,
    label_column: Option<usize>,
}

impl RowEncoder {
    pub fn new(schema: FieldSchema, header: &[String]) -> Result<Self, DataError> {
        let find = |name: &str| header.iter().position(|h| h == name);
        let field_columns = schema
            .fields()
            .iter()
            .map(|f| find(&f.name).ok_or_else(|| DataError::Schema(format!("header lacks column {:?}", f.name))))
            .collect::<Result<_, _>>()?;
        let label_column = find(schema.label_column());
        Ok(Self {
            schema,
            field_columns,
            label_column,
        })
    }

    pub fn schema(&self) -> &FieldSchema {
        &self.schema
    }

    pub fn has_label(&self) -> bool {
        self.label_column.is_some()
    }

    pub fn encode_features<'a, R>(&self, record: &'a R) -> Result<Vec<Slot>, DataError>
    where
        R: std::ops::Index<usize, Output = str> + RecordLen + ?Sized + 'a,
    {
        self.field_columns
            .iter()
            .enumerate()
            .map(|(t, &c)| encode_field(&self.schema, t, (c < record.record_len()).then(|| &record[c])))
            .collect()
    }

    pub fn encode<R>(&self, record: &R) -> Result<EncodedExample, DataError>
    where
        R: std::ops::Index<usize, Output = str> + RecordLen + ?Sized,
    {
        let c = self
            .label_column
            .ok_or_else(|| DataError::Parse(format!("missing label column {:?}", self.schema.label_column())))?;
        if c >= record.record_len() {
            return Err(DataError::Parse("record shorter than header".into()));
        }
        let label = parse_label(&record[c])?;
        Ok(EncodedExample {
            label,
            slots: self.encode_features(record)?,
        })
    }
}

/// Field count of a raw record.
pub trait RecordLen {
    fn record_len(&self) -> usize;
}

impl RecordLen for csv::StringRecord {
    fn record_len(&self) -> usize {
        self.len()
    }
}
