use serde::{Deserialize, Serialize};

use super::{Matrix, NnError};
use crate::exec::Exec;

/// Affine layer `y = W x + b` with `W` stored `[out x in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

/// Input retained by [`DenseLayer::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    input: Matrix,
}

impl DenseCache {
    pub fn input(&self) -> &Matrix {
        &self.input
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub input: Matrix,
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self, NnError> {
        if bias.len() != weight.rows() {
            return Err(NnError::Shape {
                expected: format!("bias of length {}", weight.rows()),
                found: format!("length {}", bias.len()),
            });
        }
        Ok(Self { weight, bias })
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    #[inline]
    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }

    pub fn forward(&self, x: &Matrix, exec: Exec) -> Result<(Matrix, DenseCache), NnError> {
        if x.cols() != self.inputs() {
            return Err(NnError::Shape {
                expected: format!("{} input columns", self.inputs()),
                found: format!("{} columns", x.cols()),
            });
        }
        let out_w = self.outputs();
        let mut out = Matrix::zeros(x.rows(), out_w);
        exec.for_each_rows_mut(out.as_mut_slice(), out_w, |first, chunk| {
            for (r, y) in chunk.chunks_mut(out_w).enumerate() {
                let xr = x.row(first + r);
                for (j, yj) in y.iter_mut().enumerate() {
                    *yj = self.bias[j] + dot(self.weight.row(j), xr);
                }
            }
        });
        Ok((out, DenseCache { input: x.clone() }))
    }

    /// Gradients of a scalar loss given `dy = dL/dY` for the cached batch.
    /// `dW` and `db` are summed over the batch.
    pub fn backward(&self, cache: &DenseCache, dy: &Matrix, exec: Exec) -> Result<DenseGrads, NnError> {
        let x = &cache.input;
        if dy.rows() != x.rows() || dy.cols() != self.outputs() {
            return Err(NnError::Shape {
                expected: format!("{}x{} upstream gradient", x.rows(), self.outputs()),
                found: format!("{}x{}", dy.rows(), dy.cols()),
            });
        }
        let (n_in, n_out) = (self.inputs(), self.outputs());

        let mut dx = Matrix::zeros(x.rows(), n_in);
        exec.for_each_rows_mut(dx.as_mut_slice(), n_in, |first, chunk| {
            for (r, dxr) in chunk.chunks_mut(n_in).enumerate() {
                for (j, &g) in dy.row(first + r).iter().enumerate() {
                    if g != 0.0 {
                        axpy(g, self.weight.row(j), dxr);
                    }
                }
            }
        });

        let mut dw = Matrix::zeros(n_out, n_in);
        exec.for_each_rows_mut(dw.as_mut_slice(), n_in, |first, chunk| {
            for (r, dwj) in chunk.chunks_mut(n_in).enumerate() {
                let j = first + r;
                for b in 0..x.rows() {
                    let g = dy.get(b, j);
                    if g != 0.0 {
                        axpy(g, x.row(b), dwj);
                    }
                }
            }
        });

        let mut db = vec![0.0; n_out];
        for row in dy.iter_rows() {
            for (d, g) in db.iter_mut().zip(row) {
                *d += g;
            }
        }
        Ok(DenseGrads {
            input: dx,
            weight: dw,
            bias: db,
        })
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
