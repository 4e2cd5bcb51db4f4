//! Log-loss and ROC AUC.

use serde::{Deserialize, Serialize};

/// Both `p` and `1 - p` are floored at `CLAMP` before taking logs.
pub const CLAMP: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("{predictions} predictions but {labels} labels")]
    Length { predictions: usize, labels: usize },
    #[error("metric undefined: {0}")]
    Undefined(String),
}

/// Mean binary cross-entropy with clamped predictions.
pub fn logloss(predictions: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_lengths(predictions, labels)?;
    if predictions.is_empty() {
        return Err(MetricError::Undefined("log-loss of an empty set".into()));
    }
    let total: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let (lp, lq) = (p.max(CLAMP).ln(), (1.0 - p).max(CLAMP).ln());
            -(y * lp + (1.0 - y) * lq)
        })
        .sum();
    Ok(total / predictions.len() as f64)
}

/// Probability that a random positive scores above a random negative, with
/// ties credited one half. Computed from midranks in `O(m log m)`.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&y| y > 0.5).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::Undefined(format!(
            "AUC needs both classes ({n_pos} positive, {n_neg} negative)"
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(MetricError::Undefined("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of positive ranks, ranks 1-based with ties at their midrank
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        let positives = order[i..j].iter().filter(|&&k| labels[k] > 0.5).count();
        rank_sum += midrank * positives as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// `O(m^2)` pairwise count; the reference for [`auc`].
pub fn auc_pairwise(scores: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    check_lengths(scores, labels)?;
    let (mut credit, mut pairs) = (0.0, 0u64);
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] <= 0.5 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] > 0.5 {
                continue;
            }
            pairs += 1;
            if si > sj {
                credit += 1.0;
            } else if si == sj {
                credit += 0.5;
            }
        }
    }
    if pairs == 0 {
        return Err(MetricError::Undefined("AUC needs both classes".into()));
    }
    Ok(credit / pairs as f64)
}

fn check_lengths(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::Length {
            predictions: a.len(),
            labels: b.len(),
        });
    }
    Ok(())
}

/// One evaluation, serialized as a single JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub split: String,
    pub logloss: f64,
    /// `None` when only one class is present.
    pub auc: Option<f64>,
    pub n: usize,
    pub n_pos: usize,
}

impl MetricsReport {
    pub fn compute(
        model: impl Into<String>,
        split: impl Into<String>,
        predictions: &[f64],
        labels: &[f64],
    ) -> Result<Self, MetricError> {
        let logloss = logloss(predictions, labels)?;
        let auc = match auc(predictions, labels) {
            Ok(a) => Some(a),
            Err(MetricError::Undefined(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            model: model.into(),
            split: split.into(),
            logloss,
            auc,
            n: labels.len(),
            n_pos: labels.iter().filter(|&&y| y > 0.5).count(),
        })
    }

    pub fn n_neg(&self) -> usize {
        self.n - self.n_pos
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("metrics report serializes")
    }
}
