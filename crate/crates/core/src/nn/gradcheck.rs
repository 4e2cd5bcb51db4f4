//! Central finite-difference gradient checker.

use serde::{Deserialize, Serialize};

use super::NnError;

/// Read/write access to a model's parameters, organized in named blocks.
pub trait ParamAccess {
    fn block_names(&self) -> Vec<String>;
    fn block_len(&self, block: usize) -> usize;
    fn param(&self, block: usize, index: usize) -> f64;
    fn set_param(&mut self, block: usize, index: usize, value: f64);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.max_rel_error < self.tolerance)
    }

    pub fn max_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn block(&self, name: &str) -> Option<&BlockReport> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` (one dense vector per parameter block, in
/// [`ParamAccess::block_names`] order) against central differences of `loss`.
///
/// Parameters are restored exactly after each probe.
pub fn grad_check<P, F>(
    params: &mut P,
    analytic: &[Vec<f64>],
    mut loss: F,
    config: GradCheckConfig,
) -> Result<GradCheckReport, NnError>
where
    P: ParamAccess,
    F: FnMut(&P) -> f64,
{
    let names = params.block_names();
    if analytic.len() != names.len() {
        return Err(NnError::Shape {
            expected: format!("{} gradient blocks", names.len()),
            found: format!("{}", analytic.len()),
        });
    }
    let h = config.step;
    let mut blocks = Vec::with_capacity(names.len());
    for (b, name) in names.into_iter().enumerate() {
        let len = params.block_len(b);
        if analytic[b].len() != len {
            return Err(NnError::Shape {
                expected: format!("block {name} of length {len}"),
                found: format!("{}", analytic[b].len()),
            });
        }
        let mut report = BlockReport {
            name,
            checked: len,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..len {
            let orig = params.param(b, i);
            params.set_param(b, i, orig + h);
            let up = loss(params);
            params.set_param(b, i, orig - h);
            let down = loss(params);
            params.set_param(b, i, orig);
            if !up.is_finite() || !down.is_finite() {
                return Err(NnError::Numeric(format!(
                    "non-finite loss probing {}[{i}]",
                    report.name
                )));
            }
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[b][i];
            let err = relative_error(a, numeric);
            if err > report.max_rel_error || i == 0 {
                report.max_rel_error = err;
                report.worst_index = i;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
        blocks.push(report);
    }
    Ok(GradCheckReport {
        tolerance: config.tolerance,
        blocks,
    })
}
