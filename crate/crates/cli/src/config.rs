//! Run configuration: built-in defaults, then a profile file, then
//! command-line overrides, merged as JSON trees.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fnfm::data::{SchemaOptions, SplitConfig};
use fnfm::harness::{GridConfig, SyntheticSpec, TrainConfig};
use fnfm::model::ModelKind;
use fnfm::optim::OptimizerConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

pub const PROFILES: [(&str, &str); 3] = [
    ("avazu-ablation", include_str!("../profiles/avazu-ablation.json")),
    ("avazu-compare", include_str!("../profiles/avazu-compare.json")),
    ("desk", include_str!("../profiles/desk.json")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Generated by `synthetic`.
    Synthetic,
    /// `train.fnds`, `validation.fnds` and optional `test.fnds` in `dir`.
    Cache,
    /// A raw CSV split by day.
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub source: DataSource,
    pub csv: Option<PathBuf>,
    pub dir: Option<PathBuf>,
    pub subsample: f64,
    pub schema: SchemaOptions,
    pub split: SplitConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            csv: None,
            dir: None,
            subsample: 1.0,
            schema: SchemaOptions::default(),
            split: SplitConfig::default(),
        }
    }
}

/// Search axes for `compare`; the base training settings come from `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridAxes {
    pub kinds: Vec<ModelKind>,
    pub dims: Vec<usize>,
    pub field_aware_dim: usize,
    pub layouts: Vec<Vec<usize>>,
    pub optimizers: BTreeMap<ModelKind, OptimizerConfig>,
}

impl Default for GridAxes {
    fn default() -> Self {
        let g = GridConfig::default();
        Self {
            kinds: g.kinds,
            dims: g.dims,
            field_aware_dim: g.field_aware_dim,
            layouts: g.layouts,
            optimizers: g.optimizers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub profile: String,
    /// When set, copied into every seed below.
    pub seed: Option<u64>,
    pub data: DataConfig,
    pub synthetic: SyntheticSpec,
    pub train: TrainConfig,
    pub grid: GridAxes,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            profile: "default".into(),
            seed: None,
            data: DataConfig::default(),
            synthetic: SyntheticSpec::default(),
            train: TrainConfig::default(),
            grid: GridAxes::default(),
        }
    }
}

impl RunConfig {
    pub fn grid(&self) -> GridConfig {
        let g = self.grid.clone();
        GridConfig {
            kinds: g.kinds,
            dims: g.dims,
            field_aware_dim: g.field_aware_dim,
            layouts: g.layouts,
            optimizers: g.optimizers,
            base: self.train.clone(),
        }
    }

    /// Pretty JSON with sorted keys.
    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string_pretty(&v).expect("value serializes")
    }
}

/// Where the profile comes from, if anywhere.
pub enum ProfileSource<'a> {
    None,
    Shipped(&'a str),
    File(&'a Path),
}

pub fn shipped_profile(name: &str) -> Result<&'static str, CliError> {
    PROFILES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s).ok_or_else(|| {
        let names: Vec<&str> = PROFILES.iter().map(|(n, _)| *n).collect();
        CliError::Config(format!("unknown profile {name:?}; shipped profiles: {}", names.join(", ")))
    })
}

/// `defaults < profile < overrides`. Each override is `dotted.key=value`,
/// where the value is parsed as JSON and falls back to a plain string.
pub fn resolve(profile: ProfileSource<'_>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut tree = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    let text = match profile {
        ProfileSource::None => None,
        ProfileSource::Shipped(name) => Some(shipped_profile(name)?.to_string()),
        ProfileSource::File(path) => Some(
            std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        ),
    };
    if let Some(text) = text {
        let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("profile: {e}")))?;
        if !v.is_object() {
            return Err(CliError::Config("profile must be a JSON object".into()));
        }
        merge(&mut tree, v);
    }
    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {o:?} is not key=value")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut tree, key.trim(), value)?;
    }

    let mut config: RunConfig =
        serde_json::from_value(tree.clone()).map_err(|e| CliError::Config(format!("config: {e}")))?;
    // keys the typed config dropped were misspelled or unknown
    let back = serde_json::to_value(&config).expect("config serializes");
    if let Some(key) = first_unknown(&tree, &back, "") {
        return Err(CliError::Config(format!("unknown config key {key:?}")));
    }
    if let Some(seed) = config.seed {
        config.train.seed = seed;
        config.train.shuffle_seed = seed;
        config.synthetic.seed = seed;
        config.data.split.seed = seed;
    }
    config.train.profile = config.profile.clone();
    config.train.validate()?;
    Ok(config)
}

fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn set_path(tree: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut node = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Config(format!("bad override key {key:?}")));
        }
        let obj: &mut Map<String, Value> = match node {
            Value::Object(m) => m,
            Value::Null => {
                *node = Value::Object(Map::new());
                node.as_object_mut().unwrap()
            }
            _ => return Err(CliError::Config(format!("{key:?}: {:?} is not a table", parts[..i].join(".")))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

fn first_unknown(input: &Value, typed: &Value, prefix: &str) -> Option<String> {
    let (Value::Object(i), Value::Object(t)) = (input, typed) else {
        return None;
    };
    for (k, v) in i {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match t.get(k) {
            None => return Some(path),
            Some(tv) => {
                if let Some(bad) = first_unknown(v, tv, &path) {
                    return Some(bad);
                }
            }
        }
    }
    None
}
