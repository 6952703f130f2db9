//! Linear classifier `f(x) = S·x + b` with logistic or exponential loss.

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::special::{log_sigmoid, log_softplus, softplus, LogSum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub s: Vec<f64>,
    pub b: f64,
}

impl Weights {
    pub fn new(s: Vec<f64>, b: f64) -> Self {
        Self { s, b }
    }

    pub fn zeros(d: usize) -> Self {
        Self { s: vec![0.0; d], b: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn s_norm(&self) -> f64 {
        self.s.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.b.is_finite() && self.s.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    CrossEntropy,
    Exponential,
}

impl LossKind {
    /// `ℓ(z)`.
    pub fn value(self, z: f64) -> f64 {
        match self {
            LossKind::CrossEntropy => softplus(z),
            LossKind::Exponential => z.exp(),
        }
    }

    /// `log ℓ(z)`, finite for any finite `z`.
    pub fn log_value(self, z: f64) -> f64 {
        match self {
            LossKind::CrossEntropy => log_softplus(z),
            LossKind::Exponential => z,
        }
    }

    /// `log ℓ'(z)`.
    pub fn log_derivative(self, z: f64) -> f64 {
        match self {
            LossKind::CrossEntropy => log_sigmoid(z),
            LossKind::Exponential => z,
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dim(data: &Dataset, w: &Weights) -> Result<()> {
    if w.dim() != data.d() {
        return Err(Error::DimensionMismatch {
            expected: data.d(),
            got: w.dim(),
        });
    }
    Ok(())
}

pub fn logits(data: &Dataset, w: &Weights) -> Result<Vec<f64>> {
    check_dim(data, w)?;
    Ok(data.rows().map(|x| dot(&w.s, x) + w.b).collect())
}

/// `(1/N) Σ ℓ(−y_i f_i)`.
pub fn empirical_loss(data: &Dataset, w: &Weights, loss: LossKind) -> Result<f64> {
    let f = logits(data, w)?;
    let total: f64 = f.iter().zip(data.labels()).map(|(fi, y)| loss.value(-y * fi)).sum();
    Ok(total / data.n() as f64)
}

/// Natural log of [`empirical_loss`], accurate when the loss underflows.
pub fn log_empirical_loss(data: &Dataset, w: &Weights, loss: LossKind) -> Result<f64> {
    let f = logits(data, w)?;
    let mut acc = LogSum::new();
    for (fi, y) in f.iter().zip(data.labels()) {
        acc.add(loss.log_value(-y * fi));
    }
    Ok(acc.value() - (data.n() as f64).ln())
}

/// Fraction of samples with `sign(f) = y`; `f = 0` predicts −1.
pub fn empirical_accuracy(data: &Dataset, w: &Weights) -> Result<f64> {
    let f = logits(data, w)?;
    let correct = f
        .iter()
        .zip(data.labels())
        .filter(|(fi, &y)| (**fi > 0.0) == (y > 0.0))
        .count();
    Ok(correct as f64 / data.n() as f64)
}

/// `(∂L/∂S, ∂L/∂b)`.
pub fn gradient(data: &Dataset, w: &Weights, loss: LossKind) -> Result<(Vec<f64>, f64)> {
    gradient_scaled(data, w, loss, 0.0)
}

/// The gradient multiplied by `e^{-shift}`, evaluated without forming the unscaled value.
pub fn gradient_scaled(data: &Dataset, w: &Weights, loss: LossKind, shift: f64) -> Result<(Vec<f64>, f64)> {
    check_dim(data, w)?;
    let mut gs = vec![0.0; data.d()];
    let mut gb = 0.0;
    for (x, &y) in data.rows().zip(data.labels()) {
        let z = -y * (dot(&w.s, x) + w.b);
        let c = -y * (loss.log_derivative(z) - shift).exp();
        if c != 0.0 {
            gs.iter_mut().zip(x).for_each(|(g, xi)| *g += c * xi);
            gb += c;
        }
    }
    let inv = 1.0 / data.n() as f64;
    gs.iter_mut().for_each(|g| *g *= inv);
    Ok((gs, gb * inv))
}
