//! Adam and AdaGrad with lazy sparse updates, and seeded mini-batch plans.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Gradients, Model, ModelError};
use crate::sparse::SparseRows;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    AdaGrad,
}

/// How sparse blocks (linear weights, embeddings) are updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparseMode {
    /// Only rows present in the gradient are touched; their moments are not
    /// decayed on steps where they are absent.
    #[default]
    Lazy,
    /// Every row is updated every step, with zero gradient where absent.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub sparse: SparseMode,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::adam(0.001)
    }
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            sparse: SparseMode::Lazy,
        }
    }

    pub fn adagrad(lr: f64) -> Self {
        Self {
            kind: OptimizerKind::AdaGrad,
            ..Self::adam(lr)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |what: &str| Err(ModelError::Config(format!("optimizer {what}")));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)");
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return bad("eps must be positive");
        }
        Ok(())
    }
}

/// Gradient for one parameter block.
#[derive(Debug, Clone, Copy)]
pub enum BlockGrad<'a> {
    Dense(&'a [f64]),
    Sparse(&'a SparseRows),
}

/// Optimizer state: first/second moments (Adam) or the squared-gradient
/// accumulator (AdaGrad, stored as `second`), shaped like the parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    config: OptimizerConfig,
    t: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, model: &Model) -> Result<Self, ModelError> {
        let lens: Vec<usize> = model.blocks().iter().map(|b| b.values.len()).collect();
        Self::for_blocks(config, &lens)
    }

    pub fn for_blocks(config: OptimizerConfig, lens: &[usize]) -> Result<Self, ModelError> {
        config.validate()?;
        let adam = config.kind == OptimizerKind::Adam;
        Ok(Self {
            config,
            t: 0,
            first: lens.iter().map(|&n| if adam { vec![0.0; n] } else { Vec::new() }).collect(),
            second: lens.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Number of applied steps.
    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update of `model` from `grads`. A non-finite gradient aborts the
    /// step before anything is modified.
    pub fn step(&mut self, model: &mut Model, grads: &Gradients) -> Result<(), ModelError> {
        let mut blocks = vec![BlockGrad::Dense(std::slice::from_ref(&grads.w0)), BlockGrad::Sparse(&grads.linear)];
        if model.kind().has_embeddings() {
            blocks.push(BlockGrad::Sparse(&grads.embeddings));
        }
        for l in &grads.mlp {
            blocks.push(BlockGrad::Dense(l.weight.as_slice()));
            blocks.push(BlockGrad::Dense(&l.bias));
        }
        if let Some(bn) = &grads.bn {
            blocks.push(BlockGrad::Dense(&bn.gamma));
            blocks.push(BlockGrad::Dense(&bn.beta));
        }
        let n = model.blocks().len();
        if blocks.len() != n {
            return Err(ModelError::Shape {
                expected: format!("{n} gradient blocks"),
                found: format!("{}", blocks.len()),
            });
        }
        let mut views = model.blocks_mut();
        self.step_blocks(&mut views, &blocks)
    }

    /// One update over raw parameter blocks.
    pub fn step_blocks(&mut self, params: &mut [&mut [f64]], grads: &[BlockGrad<'_>]) -> Result<(), ModelError> {
        if params.len() != grads.len() || params.len() != self.second.len() {
            return Err(ModelError::Shape {
                expected: format!("{} blocks", self.second.len()),
                found: format!("{} parameter / {} gradient blocks", params.len(), grads.len()),
            });
        }
        for (b, (p, g)) in params.iter().zip(grads).enumerate() {
            let (shaped, finite) = match g {
                BlockGrad::Dense(g) => (g.len() == p.len(), g.iter().all(|v| v.is_finite())),
                BlockGrad::Sparse(s) => (
                    s.width() > 0 && s.row_ids().iter().all(|&r| (r + 1) * s.width() <= p.len()),
                    s.values().iter().all(|v| v.is_finite()),
                ),
            };
            if !shaped || p.len() != self.second[b].len() {
                return Err(ModelError::Shape {
                    expected: format!("block {b} of length {}", self.second[b].len()),
                    found: format!("parameters of length {} with a mismatched gradient", p.len()),
                });
            }
            if !finite {
                return Err(ModelError::Numeric(format!("gradient block {b} is non-finite; step aborted")));
            }
        }
        self.t += 1;
        let rule = Rule::new(&self.config, self.t);
        for (b, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[b], &mut self.second[b]);
            match g {
                BlockGrad::Dense(g) => {
                    for i in 0..p.len() {
                        rule.apply(&mut p[i], g[i], m.get_mut(i), &mut v[i]);
                    }
                }
                BlockGrad::Sparse(s) => {
                    let w = s.width();
                    if self.config.sparse == SparseMode::Dense {
                        let dense = s.to_dense(p.len() / w);
                        for i in 0..p.len() {
                            rule.apply(&mut p[i], dense[i], m.get_mut(i), &mut v[i]);
                        }
                    } else {
                        for (row, vals) in s.iter() {
                            for (k, &gk) in vals.iter().enumerate() {
                                let i = row * w + k;
                                rule.apply(&mut p[i], gk, m.get_mut(i), &mut v[i]);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Per-coordinate update with bias corrections precomputed for step `t`.
struct Rule {
    kind: OptimizerKind,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    c1: f64,
    c2: f64,
}

impl Rule {
    fn new(c: &OptimizerConfig, t: u64) -> Self {
        let t = t.min(i32::MAX as u64) as i32;
        Self {
            kind: c.kind,
            lr: c.lr,
            beta1: c.beta1,
            beta2: c.beta2,
            eps: c.eps,
            c1: 1.0 - c.beta1.powi(t),
            c2: 1.0 - c.beta2.powi(t),
        }
    }

    #[inline]
    fn apply(&self, theta: &mut f64, g: f64, m: Option<&mut f64>, v: &mut f64) {
        match self.kind {
            OptimizerKind::Adam => {
                let m = m.expect("adam state");
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let mhat = *m / self.c1;
                let vhat = *v / self.c2;
                *theta -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
            OptimizerKind::AdaGrad => {
                *v += g * g;
                *theta -= self.lr * g / (*v + self.eps).sqrt();
            }
        }
    }
}

/// Example indices for one epoch: a permutation seeded by `seed ^ epoch`, cut
/// into batches of `batch_size` with a final partial batch.
pub fn minibatches(len: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>, ModelError> {
    if len == 0 {
        return Err(ModelError::Config("cannot batch an empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(ModelError::Config("batch_size must be >= 1".into()));
    }
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ epoch));
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
