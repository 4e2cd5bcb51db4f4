//! Epoch loops with validation-based model selection, the three studies
//! (interaction layer, batch normalization, model comparison) and the
//! synthetic field-aware data generator used for desk-scale runs.

mod gate;
mod studies;
mod synth;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DataError, Dataset, EncodedExample};
use crate::exec::Exec;
use crate::metrics::{MetricError, MetricsReport};
use crate::model::{Model, ModelError, ModelSpec};
use crate::nn::{BnMode, Matrix};
use crate::optim::{minibatches, Optimizer, OptimizerConfig};

pub use gate::{gradient_gate, scramble, toy_batch, GATE_CARDINALITY};
pub use studies::{
    ablate_batchnorm, ablate_interaction_layer, compare_models, spread_ratio, GridCell, GridConfig, Leaderboard, LeaderboardEntry,
    PairedReports, GRID_DIMS, GRID_LAYOUTS,
};
pub use synth::{gen_synthetic, GroundTruth, SyntheticData, SyntheticSpec};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("non-finite training loss at epoch {epoch}, batch {batch}; block norms {norms:?}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        norms: Vec<(String, f64)>,
    },
}

impl HarnessError {
    /// Whether the failure is numeric (divergence) rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, HarnessError::NonFinite { .. } | HarnessError::Model(ModelError::Numeric(_)))
    }
}

/// Training, validation and optional test data sharing one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Option<Dataset>,
}

impl Splits {
    pub fn check(&self) -> Result<(), HarnessError> {
        let s = self.train.schema();
        let same = self.validation.schema() == s && self.test.as_ref().is_none_or(|t| t.schema() == s);
        if !same {
            return Err(HarnessError::Config("splits do not share one schema".into()));
        }
        if self.train.is_empty() || self.validation.is_empty() {
            return Err(HarnessError::Config("train and validation splits must be non-empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub profile: String,
    pub model: ModelSpec,
    pub optimizer: OptimizerConfig,
    /// L2 strength on linear weights and embedding rows touched by a batch.
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Consecutive non-improving validations tolerated before stopping.
    pub patience: usize,
    pub eval_every: usize,
    /// Parameter initialization seed.
    pub seed: u64,
    /// Mini-batch order seed.
    pub shuffle_seed: u64,
    /// Validation rows sampled once for MLP-input diagnostics.
    pub probe_rows: usize,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            profile: "default".into(),
            model: ModelSpec::new(crate::model::ModelKind::Fnfm, 4, vec![256, 256, 256], true),
            optimizer: OptimizerConfig::adam(0.001),
            l2: 1e-5,
            batch_size: 4096,
            epochs: 20,
            patience: 3,
            eval_every: 1,
            seed: 0,
            shuffle_seed: 0,
            probe_rows: 1024,
            exec: Exec::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.model.validate()?;
        self.optimizer.validate()?;
        if self.epochs == 0 {
            return Err(HarnessError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(HarnessError::Config("batch_size and eval_every must be >= 1".into()));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(HarnessError::Config(format!("l2 {} is invalid", self.l2)));
        }
        Ok(())
    }
}

/// Per-dimension standard deviation of the MLP input on the probe batch.
/// BN is applied with the probe's own batch statistics, as during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub pre_bn_std: Vec<f64>,
    /// Equal to `pre_bn_std` when the model has no BN layer.
    pub mlp_input_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training objective over the epoch's batches.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_auc: Option<f64>,
    pub diagnostics: Option<Diagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: String,
    pub profile: String,
    pub config: TrainConfig,
    /// Validation log-loss before any update.
    pub initial_val_loss: f64,
    pub initial_diagnostics: Option<Diagnostics>,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    /// Single-row batches skipped because BN needs two rows.
    pub skipped_batches: usize,
    pub test: Option<MetricsReport>,
}

impl TrainReport {
    pub fn epoch(&self, epoch: usize) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == epoch)
    }

    /// One JSON object per epoch.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("epoch record serializes"));
            out.push('\n');
        }
        out
    }
}

pub struct TrainOutcome {
    pub report: TrainReport,
    /// Parameters from the best validation epoch.
    pub model: Model,
}

/// Inference-mode log-loss and AUC of `model` on `data`.
pub fn evaluate(model: &Model, data: &Dataset, split: &str, exec: Exec) -> Result<MetricsReport, HarnessError> {
    let p = model.predict_all(data.examples(), 4096, exec)?;
    Ok(MetricsReport::compute(model.kind().name(), split, &p, &data.labels())?)
}

fn probe_indices(validation: &Dataset, rows: usize, seed: u64) -> Vec<usize> {
    let n = validation.len();
    if rows >= n {
        return (0..n).collect();
    }
    let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15), n, rows).into_vec();
    idx.sort_unstable();
    idx
}

fn diagnostics(model: &Model, probe: &[&EncodedExample], exec: Exec) -> Result<Option<Diagnostics>, HarnessError> {
    if model.deep_width() == 0 || probe.len() < 2 {
        return Ok(None);
    }
    let (_, cache) = model.forward(probe, BnMode::Training, exec)?;
    let std = |m: Option<&Matrix>| m.map(|m| m.column_stats().1).unwrap_or_default();
    Ok(Some(Diagnostics {
        pre_bn_std: std(cache.deep_input()),
        mlp_input_std: std(cache.mlp_input()),
    }))
}

/// Trains `config.model` on `splits.train`, selecting the epoch with the
/// lowest validation log-loss. Test metrics, when a test split is given, are
/// taken at that epoch.
pub fn train(config: &TrainConfig, splits: &Splits) -> Result<TrainOutcome, HarnessError> {
    config.validate()?;
    splits.check()?;
    let exec = config.exec;
    let schema = splits.train.schema().clone();
    let mut model = Model::new(config.model.clone(), schema, config.seed)?;
    let mut opt = Optimizer::new(config.optimizer, &model)?;
    let bn = model.params.bn.is_some();

    let probe_idx = probe_indices(&splits.validation, config.probe_rows, config.seed);
    let probe: Vec<&EncodedExample> = probe_idx.iter().map(|&i| &splits.validation.examples()[i]).collect();
    let initial = evaluate(&model, &splits.validation, "validation", exec)?;
    let initial_diagnostics = diagnostics(&model, &probe, exec)?;

    let mut best = (f64::INFINITY, 0usize, model.params.clone());
    let mut since_best = 0;
    let mut records = Vec::new();
    let mut skipped = 0;
    let mut stopped_early = false;
    let examples = splits.train.examples();
    for epoch in 1..=config.epochs {
        let plan = minibatches(examples.len(), config.batch_size, config.shuffle_seed, epoch as u64)?;
        let (mut sum, mut count) = (0.0, 0usize);
        for (b, idx) in plan.iter().enumerate() {
            if bn && idx.len() < 2 {
                skipped += 1;
                continue;
            }
            let batch: Vec<&EncodedExample> = idx.iter().map(|&i| &examples[i]).collect();
            let (loss, grads, cache) = model.loss_and_grad(&batch, config.l2, exec)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(HarnessError::NonFinite {
                    epoch,
                    batch: b,
                    norms: model.block_norms(),
                });
            }
            opt.step(&mut model, &grads)?;
            model.commit_batch_stats(&cache);
            sum += loss * batch.len() as f64;
            count += batch.len();
        }
        let mut record = EpochRecord {
            epoch,
            train_loss: sum / count.max(1) as f64,
            val_loss: None,
            val_auc: None,
            diagnostics: diagnostics(&model, &probe, exec)?,
        };
        let last = epoch == config.epochs;
        if epoch % config.eval_every == 0 || last {
            let val = evaluate(&model, &splits.validation, "validation", exec)?;
            record.val_loss = Some(val.logloss);
            record.val_auc = val.auc;
            if !val.logloss.is_finite() {
                return Err(HarnessError::NonFinite {
                    epoch,
                    batch: plan.len(),
                    norms: model.block_norms(),
                });
            }
            if val.logloss < best.0 {
                best = (val.logloss, epoch, model.params.clone());
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        records.push(record);
        if since_best > 0 && since_best >= config.patience {
            stopped_early = !last;
            break;
        }
    }
    model.params = best.2;
    let test = match &splits.test {
        Some(t) if !t.is_empty() => Some(evaluate(&model, t, "test", exec)?),
        _ => None,
    };
    let report = TrainReport {
        model: config.model.kind.name().into(),
        profile: config.profile.clone(),
        config: config.clone(),
        initial_val_loss: initial.logloss,
        initial_diagnostics,
        epochs: records,
        best_epoch: best.1,
        best_val_loss: best.0,
        stopped_early,
        skipped_batches: skipped,
        test,
    };
    Ok(TrainOutcome { report, model })
}
