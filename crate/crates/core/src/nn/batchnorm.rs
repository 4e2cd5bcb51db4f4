use serde::{Deserialize, Serialize};

use super::{Matrix, NnError};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BnMode {
    Training,
    Inference,
}

/// Per-dimension batch normalization with learned scale and shift.
///
/// Training mode normalizes by the batch mean and biased batch variance.
/// Inference mode normalizes by the running statistics, so each output row
/// depends only on its own input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNormLayer {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    mode: BnMode,
    normalized: Matrix,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
}

impl BnCache {
    pub fn mode(&self) -> BnMode {
        self.mode
    }

    /// The pre-affine normalized batch (`x_hat`).
    pub fn normalized(&self) -> &Matrix {
        &self.normalized
    }

    pub fn batch_mean(&self) -> &[f64] {
        &self.batch_mean
    }

    /// Biased (denominator `B`) batch variance.
    pub fn batch_var(&self) -> &[f64] {
        &self.batch_var
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnGrads {
    pub input: Matrix,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

impl BatchNormLayer {
    pub fn new(width: usize) -> Self {
        Self {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn width(&self) -> usize {
        self.gamma.len()
    }

    pub fn param_count(&self) -> usize {
        2 * self.width()
    }

    pub fn forward(&self, x: &Matrix, mode: BnMode) -> Result<(Matrix, BnCache), NnError> {
        let width = self.width();
        if x.cols() != width {
            return Err(NnError::Shape {
                expected: format!("{width} columns"),
                found: format!("{} columns", x.cols()),
            });
        }
        let b = x.rows();
        let (mean, var) = match mode {
            BnMode::Training => {
                if b < 2 {
                    return Err(NnError::Batch(format!(
                        "batch normalization in training mode needs at least 2 rows, got {b}"
                    )));
                }
                batch_moments(x)
            }
            BnMode::Inference => (self.running_mean.clone(), self.running_var.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();

        let mut normalized = Matrix::zeros(b, width);
        let mut out = Matrix::zeros(b, width);
        for r in 0..b {
            let xr = x.row(r);
            let nr = normalized.row_mut(r);
            for d in 0..width {
                nr[d] = (xr[d] - mean[d]) * inv_std[d];
            }
            let nr = normalized.row(r).to_vec();
            let yr = out.row_mut(r);
            for d in 0..width {
                yr[d] = self.gamma[d] * nr[d] + self.beta[d];
            }
        }
        Ok((
            out,
            BnCache {
                mode,
                normalized,
                inv_std,
                batch_mean: mean,
                batch_var: var,
            },
        ))
    }

    /// Folds a training-mode batch's statistics into the running estimates.
    /// The running variance uses the unbiased `B / (B - 1)` correction.
    pub fn update_running(&mut self, cache: &BnCache) {
        if cache.mode != BnMode::Training {
            return;
        }
        let b = cache.normalized.rows();
        let correction = if b > 1 { b as f64 / (b - 1) as f64 } else { 1.0 };
        let m = self.momentum;
        for d in 0..self.width() {
            self.running_mean[d] = (1.0 - m) * self.running_mean[d] + m * cache.batch_mean[d];
            self.running_var[d] = (1.0 - m) * self.running_var[d] + m * cache.batch_var[d] * correction;
        }
    }

    /// Exact gradient through the batch mean and variance.
    pub fn backward(&self, cache: &BnCache, dy: &Matrix) -> Result<BnGrads, NnError> {
        if cache.mode != BnMode::Training {
            return Err(NnError::State(
                "batch normalization backward requires a training-mode forward".into(),
            ));
        }
        let xhat = &cache.normalized;
        let (b, width) = (xhat.rows(), xhat.cols());
        if dy.rows() != b || dy.cols() != width {
            return Err(NnError::Shape {
                expected: format!("{b}x{width} upstream gradient"),
                found: format!("{}x{}", dy.rows(), dy.cols()),
            });
        }
        let mut dgamma = vec![0.0; width];
        let mut dbeta = vec![0.0; width];
        for r in 0..b {
            let (g, xh) = (dy.row(r), xhat.row(r));
            for d in 0..width {
                dbeta[d] += g[d];
                dgamma[d] += g[d] * xh[d];
            }
        }
        // dxhat = dy * gamma; sum(dxhat) = gamma * dbeta; sum(dxhat * xhat) = gamma * dgamma
        let bf = b as f64;
        let mut dx = Matrix::zeros(b, width);
        for r in 0..b {
            let (g, xh) = (dy.row(r), xhat.row(r));
            let out = dx.row_mut(r);
            for d in 0..width {
                let gamma = self.gamma[d];
                out[d] = gamma * cache.inv_std[d] / bf
                    * (bf * g[d] - dbeta[d] - xh[d] * dgamma[d]);
            }
        }
        Ok(BnGrads {
            input: dx,
            gamma: dgamma,
            beta: dbeta,
        })
    }
}

/// Per-column mean and biased variance.
fn batch_moments(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let (b, width) = (x.rows() as f64, x.cols());
    let mut mean = vec![0.0; width];
    for row in x.iter_rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= b);
    let mut var = vec![0.0; width];
    for row in x.iter_rows() {
        for d in 0..width {
            let c = row[d] - mean[d];
            var[d] += c * c;
        }
    }
    var.iter_mut().for_each(|v| *v /= b);
    (mean, var)
}
