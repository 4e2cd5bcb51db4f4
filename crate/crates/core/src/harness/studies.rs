use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{gradient_gate, train, HarnessError, Splits, TrainConfig, TrainReport};
use crate::metrics::MetricsReport;
use crate::model::{InteractionMode, ModelError, ModelKind, ModelSpec};
use crate::nn::GradCheckReport;
use crate::optim::OptimizerConfig;

/// Embedding sizes searched for kinds with plain embeddings.
pub const GRID_DIMS: [usize; 5] = [4, 8, 16, 32, 64];

/// Hidden layouts searched for deep kinds: 2 or 3 layers of 128 or 256 units.
pub const GRID_LAYOUTS: [&[usize]; 4] = [&[128, 128], &[256, 256], &[128, 128, 128], &[256, 256, 256]];

/// Two runs that differ in one setting, with the gradient checks that gated them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedReports {
    pub label_a: String,
    pub a: TrainReport,
    pub label_b: String,
    pub b: TrainReport,
    pub gates: Vec<(String, GradCheckReport)>,
}

/// `max / min` of per-dimension standard deviations.
pub fn spread_ratio(std: &[f64]) -> f64 {
    let max = std.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = std.iter().copied().fold(f64::INFINITY, f64::min);
    if std.is_empty() {
        f64::NAN
    } else if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn gated(label: &str, config: &TrainConfig, num_fields: usize) -> Result<(String, GradCheckReport), HarnessError> {
    let report = gradient_gate(&config.model, num_fields, 8, config.l2, config.seed)?;
    if !report.passed() {
        return Err(HarnessError::Model(ModelError::Numeric(format!(
            "{label} failed its gradient check: max relative error {:.3e}",
            report.max_error()
        ))));
    }
    Ok((label.to_string(), report))
}

fn paired(
    label_a: &str,
    a: TrainConfig,
    label_b: &str,
    b: TrainConfig,
    splits: &Splits,
) -> Result<PairedReports, HarnessError> {
    let f = splits.train.schema().num_fields();
    let gates = vec![gated(label_a, &a, f)?, gated(label_b, &b, f)?];
    let ra = train(&a, splits)?.report;
    let rb = train(&b, splits)?.report;
    Ok(PairedReports {
        label_a: label_a.into(),
        a: ra,
        label_b: label_b.into(),
        b: rb,
        gates,
    })
}

/// FNFM with the concatenating interaction layer against the field-aware
/// pooled variant; everything else is identical.
pub fn ablate_interaction_layer(base: &TrainConfig, splits: &Splits) -> Result<PairedReports, HarnessError> {
    if base.model.kind != ModelKind::Fnfm {
        return Err(HarnessError::Config("the interaction-layer study needs an fnfm model".into()));
    }
    let mut concat = base.clone();
    concat.model.interaction = InteractionMode::Concat;
    let mut pool = base.clone();
    pool.model.interaction = InteractionMode::FieldPool;
    paired("concat", concat, "pool", pool, splits)
}

/// FNFM with and without batch normalization on the MLP input.
pub fn ablate_batchnorm(base: &TrainConfig, splits: &Splits) -> Result<PairedReports, HarnessError> {
    if base.model.kind != ModelKind::Fnfm {
        return Err(HarnessError::Config("the batch-normalization study needs an fnfm model".into()));
    }
    let mut with = base.clone();
    with.model.use_batchnorm = true;
    let mut without = base.clone();
    without.model.use_batchnorm = false;
    paired("bn", with, "no_bn", without, splits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub kinds: Vec<ModelKind>,
    pub dims: Vec<usize>,
    /// Embedding size used for FFM and FNFM instead of searching.
    pub field_aware_dim: usize,
    pub layouts: Vec<Vec<usize>>,
    /// Optimizer per kind; kinds not listed use `base.optimizer`.
    pub optimizers: BTreeMap<ModelKind, OptimizerConfig>,
    /// Everything else (batch size, epochs, seeds, BN flag, L2).
    pub base: TrainConfig,
}

impl Default for GridConfig {
    fn default() -> Self {
        let mut optimizers = BTreeMap::new();
        for kind in ModelKind::ALL {
            let opt = match kind {
                ModelKind::Fm | ModelKind::Ffm => OptimizerConfig::adagrad(0.1),
                _ => OptimizerConfig::adam(1e-4),
            };
            optimizers.insert(kind, opt);
        }
        Self {
            kinds: ModelKind::ALL.to_vec(),
            dims: GRID_DIMS.to_vec(),
            field_aware_dim: 4,
            layouts: GRID_LAYOUTS.iter().map(|l| l.to_vec()).collect(),
            optimizers,
            base: TrainConfig::default(),
        }
    }
}

impl GridConfig {
    /// Every training configuration in the grid, grouped by kind in `kinds` order.
    pub fn cells(&self) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &kind in &self.kinds {
            let dims = match kind {
                ModelKind::Lr => vec![0],
                k if k.field_aware() => vec![self.field_aware_dim],
                _ => self.dims.clone(),
            };
            let layouts = if kind.is_deep() { self.layouts.clone() } else { vec![Vec::new()] };
            for &d in &dims {
                for layout in &layouts {
                    let mut c = self.base.clone();
                    c.model = ModelSpec {
                        kind,
                        embedding_dim: d,
                        hidden: layout.clone(),
                        use_batchnorm: self.base.model.use_batchnorm,
                        interaction: InteractionMode::Concat,
                        init_std: self.base.model.init_std,
                    };
                    c.optimizer = self.optimizers.get(&kind).copied().unwrap_or(self.base.optimizer);
                    out.push(c);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub kind: ModelKind,
    pub embedding_dim: usize,
    pub hidden: Vec<usize>,
    pub best_val_loss: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub kind: ModelKind,
    pub spec: ModelSpec,
    pub optimizer: OptimizerConfig,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub test: Option<MetricsReport>,
}

/// Best validation configuration per kind, plus every cell tried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leaderboard {
    pub entries: Vec<LeaderboardEntry>,
    pub cells: Vec<GridCell>,
}

impl Leaderboard {
    pub fn entry(&self, kind: ModelKind) -> Option<&LeaderboardEntry> {
        self.entries.iter().find(|e| e.kind == kind)
    }

    /// Kinds ordered by best validation log-loss, lowest first.
    pub fn ranking(&self) -> Vec<ModelKind> {
        let mut e: Vec<&LeaderboardEntry> = self.entries.iter().collect();
        e.sort_by(|a, b| a.best_val_loss.total_cmp(&b.best_val_loss));
        e.into_iter().map(|e| e.kind).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("leaderboard serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(s).map_err(|e| HarnessError::Config(format!("leaderboard: {e}")))
    }
}

/// Grid search per kind, selecting by validation log-loss. Cells run through
/// `grid.base.exec`, one task per cell.
pub fn compare_models(grid: &GridConfig, splits: &Splits) -> Result<Leaderboard, HarnessError> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(HarnessError::Config("empty model grid".into()));
    }
    let results = grid.base.exec.map_range(cells.len(), |i| train(&cells[i], splits).map(|o| o.report));
    let mut reports = Vec::with_capacity(cells.len());
    for r in results {
        reports.push(r?);
    }
    let mut entries: Vec<LeaderboardEntry> = Vec::new();
    for (c, r) in cells.iter().zip(&reports) {
        let better = match entries.iter().find(|e| e.kind == c.model.kind) {
            Some(e) => r.best_val_loss < e.best_val_loss,
            None => true,
        };
        if better {
            entries.retain(|e| e.kind != c.model.kind);
            entries.push(LeaderboardEntry {
                kind: c.model.kind,
                spec: c.model.clone(),
                optimizer: c.optimizer,
                best_val_loss: r.best_val_loss,
                best_epoch: r.best_epoch,
                test: r.test.clone(),
            });
        }
    }
    let order = |k: ModelKind| grid.kinds.iter().position(|&x| x == k);
    entries.sort_by_key(|e| order(e.kind));
    let cells = cells
        .iter()
        .zip(&reports)
        .map(|(c, r)| GridCell {
            kind: c.model.kind,
            embedding_dim: c.model.embedding_dim,
            hidden: c.model.hidden.clone(),
            best_val_loss: r.best_val_loss,
            best_epoch: r.best_epoch,
        })
        .collect();
    Ok(Leaderboard { entries, cells })
}
