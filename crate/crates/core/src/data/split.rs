use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encode::{RecordLen, RowEncoder};
use super::schema::{infer_schema, FieldSchema, SchemaOptions};
use super::{DataError, Dataset, Provenance, SplitTag};
use crate::exec::{Exec, CHUNK};

/// How to derive a day key from the day column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case")]
pub enum DayLayout {
    /// Avazu `hour` column, `YYMMDDHH`; the day is the first six digits.
    AvazuHour,
    /// The first `len` characters.
    Prefix { len: usize },
    /// The whole value.
    Verbatim,
}

impl DayLayout {
    pub fn day_key<'a>(&self, raw: &'a str) -> Result<&'a str, DataError> {
        let raw = raw.trim();
        match self {
            DayLayout::AvazuHour => {
                if raw.len() != 8 || !raw.bytes().all(|b| b.is_ascii_digit()) {
                    return Err(DataError::Parse(format!("{raw:?} is not YYMMDDHH")));
                }
                Ok(&raw[..6])
            }
            DayLayout::Prefix { len } => raw
                .get(..*len)
                .ok_or_else(|| DataError::Parse(format!("{raw:?} shorter than day prefix {len}"))),
            DayLayout::Verbatim => Ok(raw),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub day_column: String,
    pub day_layout: DayLayout,
    /// Share of the final day's rows assigned to validation; the rest go to test.
    pub last_day_val_fraction: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            day_column: "hour".into(),
            day_layout: DayLayout::AvazuHour,
            last_day_val_fraction: 0.5,
            seed: 0,
        }
    }
}

/// Counts of rows dropped during encoding, by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectCounts {
    pub bad_label: usize,
    pub bad_value: usize,
    pub bad_day: usize,
}

impl RejectCounts {
    pub fn total(&self) -> usize {
        self.bad_label + self.bad_value + self.bad_day
    }
}

#[derive(Debug, Clone)]
pub struct SplitOutcome {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
    pub rejected: RejectCounts,
    pub days: Vec<String>,
}

/// Keeps each row independently with probability `rate`.
pub fn subsample<I, T>(rows: I, rate: f64, seed: u64) -> Result<impl Iterator<Item = T>, DataError>
where
    I: IntoIterator<Item = T>,
{
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(DataError::Config(format!("subsample rate {rate} outside (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rows
        .into_iter()
        .filter(move |_| rate >= 1.0 || rng.random::<f64>() < rate))
}

/// Assigns every row of a non-final day to train and splits the final day
/// between validation and test with a seeded draw per row.
///
/// Rows that fail to encode are dropped and counted.
pub fn split_by_day<R>(
    records: &[R],
    encoder: &RowEncoder,
    day_column: usize,
    config: &SplitConfig,
    source: &str,
    exec: Exec,
) -> Result<SplitOutcome, DataError>
where
    R: std::ops::Index<usize, Output = str> + RecordLen + Sync,
{
    if !(config.last_day_val_fraction >= 0.0 && config.last_day_val_fraction <= 1.0) {
        return Err(DataError::Config(format!(
            "last_day_val_fraction {} outside [0, 1]",
            config.last_day_val_fraction
        )));
    }
    let encoded = exec.map_chunks(records, CHUNK, |_, chunk| {
        chunk
            .iter()
            .map(|rec| {
                if day_column >= rec.record_len() {
                    return Err((RejectKind::Day, DataError::Parse("record shorter than header".into())));
                }
                let day = config
                    .day_layout
                    .day_key(&rec[day_column])
                    .map_err(|e| (RejectKind::Day, e))?
                    .to_string();
                let ex = encoder.encode(rec).map_err(|e| (classify(&e), e))?;
                Ok((day, ex))
            })
            .collect::<Vec<_>>()
    });

    let mut rejected = RejectCounts::default();
    let mut rows = Vec::with_capacity(records.len());
    for r in encoded.into_iter().flatten() {
        match r {
            Ok(v) => rows.push(v),
            Err((RejectKind::Label, _)) => rejected.bad_label += 1,
            Err((RejectKind::Value, _)) => rejected.bad_value += 1,
            Err((RejectKind::Day, _)) => rejected.bad_day += 1,
        }
    }

    let days: BTreeSet<&str> = rows.iter().map(|(d, _)| d.as_str()).collect();
    if days.len() < 2 {
        return Err(DataError::Split(format!(
            "need at least 2 distinct days, found {}",
            days.len()
        )));
    }
    let last = days.iter().next_back().copied().unwrap_or_default().to_string();
    let days: Vec<String> = days.into_iter().map(str::to_string).collect();

    let schema = encoder.schema().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (day, ex) in rows {
        if day != last {
            train.push(ex);
        } else if rng.random::<f64>() < config.last_day_val_fraction {
            val.push(ex);
        } else {
            test.push(ex);
        }
    }
    let make = |examples, split| Dataset::new(schema.clone(), examples, Provenance::new(source, split));
    Ok(SplitOutcome {
        train: make(train, SplitTag::Train),
        validation: make(val, SplitTag::Validation),
        test: make(test, SplitTag::Test),
        rejected,
        days,
    })
}

enum RejectKind {
    Label,
    Value,
    Day,
}

fn classify(e: &DataError) -> RejectKind {
    match e {
        DataError::Parse(msg) if msg.starts_with("label") || msg.contains("label column") => RejectKind::Label,
        _ => RejectKind::Value,
    }
}

/// Reads a headered CSV, infers the schema, optionally subsamples, and
/// splits by day.
pub fn load_csv_split(
    path: &Path,
    schema_opts: &SchemaOptions,
    split: &SplitConfig,
    subsample_rate: f64,
    exec: Exec,
) -> Result<(FieldSchema, SplitOutcome), DataError> {
    let (header, records) = read_csv(path)?;
    let schema = infer_schema(&header, schema_opts)?;
    let encoder = RowEncoder::new(schema.clone(), &header)?;
    let day_column = header
        .iter()
        .position(|h| *h == split.day_column)
        .ok_or_else(|| DataError::Schema(format!("header lacks day column {:?}", split.day_column)))?;
    let records: Vec<_> = subsample(records, subsample_rate, split.seed)?.collect();
    let outcome = split_by_day(&records, &encoder, day_column, split, &path.display().to_string(), exec)?;
    Ok((schema, outcome))
}

pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>), DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| DataError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    let header = reader
        .headers()
        .map_err(|e| DataError::Parse(e.to_string()))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let records = reader
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| DataError::Parse(format!("{}: {e}", path.display())))?;
    Ok((header, records))
}
