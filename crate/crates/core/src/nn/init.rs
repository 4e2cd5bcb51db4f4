use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::{DenseLayer, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitKind {
    Gaussian { stddev: f64 },
    Uniform { bound: f64 },
    /// Uniform with bound `sqrt(6 / (fan_in + fan_out))`.
    Glorot,
    Zeros,
}

/// Parameter initialization rule. Deterministic given `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitPolicy {
    pub kind: InitKind,
    pub seed: u64,
}

impl InitPolicy {
    pub fn gaussian(stddev: f64, seed: u64) -> Self {
        Self {
            kind: InitKind::Gaussian { stddev },
            seed,
        }
    }

    pub fn uniform(bound: f64, seed: u64) -> Self {
        Self {
            kind: InitKind::Uniform { bound },
            seed,
        }
    }

    pub fn glorot(seed: u64) -> Self {
        Self {
            kind: InitKind::Glorot,
            seed,
        }
    }

    pub fn zeros() -> Self {
        Self {
            kind: InitKind::Zeros,
            seed: 0,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    pub fn fill<R: Rng + ?Sized>(&self, buf: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut R) {
        match self.kind {
            InitKind::Zeros => buf.fill(0.0),
            InitKind::Gaussian { stddev } => {
                let normal = Normal::new(0.0, stddev).expect("finite stddev");
                buf.iter_mut().for_each(|v| *v = normal.sample(rng));
            }
            InitKind::Uniform { bound } => fill_uniform(buf, bound, rng),
            InitKind::Glorot => {
                let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
                fill_uniform(buf, bound, rng);
            }
        }
    }

    pub fn matrix<R: Rng + ?Sized>(&self, rows: usize, cols: usize, rng: &mut R) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        self.fill(m.as_mut_slice(), cols, rows, rng);
        m
    }

    /// Layer with weights drawn from this policy and zero bias.
    pub fn dense<R: Rng + ?Sized>(&self, inputs: usize, outputs: usize, rng: &mut R) -> DenseLayer {
        DenseLayer {
            weight: self.matrix(outputs, inputs, rng),
            bias: vec![0.0; outputs],
        }
    }
}

fn fill_uniform<R: Rng + ?Sized>(buf: &mut [f64], bound: f64, rng: &mut R) {
    if bound <= 0.0 {
        buf.fill(0.0);
        return;
    }
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    buf.iter_mut().for_each(|v| *v = dist.sample(rng));
}
