use super::Matrix;

/// Elementwise `max(0, x)`.
pub fn relu_forward(x: &Matrix) -> Matrix {
    let mut y = x.clone();
    y.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    y
}

/// Gates `dy` by `x > 0`. The subgradient at exactly zero is zero.
pub fn relu_backward(x: &Matrix, dy: &Matrix) -> Matrix {
    let mut dx = dy.clone();
    for (g, &xi) in dx.as_mut_slice().iter_mut().zip(x.as_slice()) {
        if xi <= 0.0 {
            *g = 0.0;
        }
    }
    dx
}

/// Logistic function, evaluated on the branch that cannot overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the logistic function given its output `s = sigmoid(x)`.
#[inline]
pub fn sigmoid_backward(s: f64, dy: f64) -> f64 {
    dy * s * (1.0 - s)
}

pub fn sigmoid_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| sigmoid(v)).collect()
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
