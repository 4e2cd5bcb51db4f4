use super::ModelError;
use crate::nn::{sigmoid, softplus};

/// Mean binary negative log-likelihood computed from logits, and its gradient
/// with respect to each logit, `(p - y) / N`.
///
/// Uses `-log p = softplus(-z)` and `-log(1 - p) = softplus(z)`, so no
/// probability is ever passed to `ln`.
pub fn nll_loss(logits: &[f64], labels: &[f64]) -> Result<(f64, Vec<f64>), ModelError> {
    if logits.is_empty() {
        return Err(ModelError::Config("loss over an empty batch".into()));
    }
    if logits.len() != labels.len() {
        return Err(ModelError::Shape {
            expected: format!("{} labels", logits.len()),
            found: format!("{}", labels.len()),
        });
    }
    let n = logits.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &y) in logits.iter().zip(labels) {
        total += y * softplus(-z) + (1.0 - y) * softplus(z);
        grad.push((sigmoid(z) - y) / n);
    }
    Ok((total / n, grad))
}
