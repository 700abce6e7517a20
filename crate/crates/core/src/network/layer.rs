//! Layer kinds and single-layer evaluation.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// Affine layer followed by a pointwise (or softmax) activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Sigmoid,
    Relu,
    Softmax,
    Linear,
}

impl LayerKind {
    /// Names used in the model JSON schema.
    pub fn as_str(&self) -> &'static str {
        match self {
            LayerKind::Sigmoid => "affine+sigmoid",
            LayerKind::Relu => "affine+relu",
            LayerKind::Softmax => "affine+softmax",
            LayerKind::Linear => "affine-linear",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "affine+sigmoid" => Ok(LayerKind::Sigmoid),
            "affine+relu" => Ok(LayerKind::Relu),
            "affine+softmax" => Ok(LayerKind::Softmax),
            "affine-linear" => Ok(LayerKind::Linear),
            other => Err(Error::Format {
                path: String::new(),
                detail: format!("unknown layer kind \"{other}\""),
            }),
        }
    }
}

/// One parameterized layer: `act(W x + b)` with weight-decay coefficient
/// `lambda`. `frozen` layers are excluded from parameter updates.
#[derive(Debug, Clone)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub weights: Matrix,
    pub biases: Vec<f64>,
    pub lambda: f64,
    pub frozen: bool,
}

impl LayerSpec {
    pub fn new(kind: LayerKind, weights: Matrix, biases: Vec<f64>, lambda: f64) -> Result<Self> {
        if biases.len() != weights.rows() {
            return Err(Error::InvalidInput(format!(
                "bias length {} does not match output dimension {}",
                biases.len(),
                weights.rows()
            )));
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidInput(format!("lambda must be nonnegative, got {lambda}")));
        }
        if !biases.iter().all(|b| b.is_finite()) {
            return Err(Error::InvalidInput("biases must be finite".into()));
        }
        Ok(LayerSpec { kind, weights, biases, lambda, frozen: false })
    }

    /// Fresh layer with weights uniform in `[-a, a]`, `a = sqrt(6/(fan_in+fan_out))`,
    /// and zero biases.
    pub fn init(kind: LayerKind, in_dim: usize, out_dim: usize, lambda: f64, rng: &mut RngStream) -> Self {
        let a = (6.0 / (in_dim + out_dim) as f64).sqrt();
        LayerSpec {
            kind,
            weights: Matrix::uniform(out_dim, in_dim, a, rng),
            biases: vec![0.0; out_dim],
            lambda,
            frozen: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    /// Post-activation output for input `x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.weights.matvec(x);
        for (zi, b) in z.iter_mut().zip(&self.biases) {
            *zi += b;
        }
        match self.kind {
            LayerKind::Linear => z,
            LayerKind::Relu => {
                for v in &mut z {
                    *v = v.max(0.0);
                }
                z
            }
            LayerKind::Sigmoid => {
                for v in &mut z {
                    *v = sigmoid(*v);
                }
                z
            }
            LayerKind::Softmax => softmax(z),
        }
    }

    /// Multiply an upstream error by the activation derivative, expressed via
    /// the post-activation values `a` of this layer.
    pub fn chain_activation(&self, upstream: &[f64], a: &[f64]) -> Vec<f64> {
        match self.kind {
            LayerKind::Linear => upstream.to_vec(),
            LayerKind::Relu => upstream
                .iter()
                .zip(a)
                .map(|(&u, &ai)| if ai > 0.0 { u } else { 0.0 })
                .collect(),
            LayerKind::Sigmoid => upstream.iter().zip(a).map(|(&u, &ai)| u * ai * (1.0 - ai)).collect(),
            // Softmax never appears below another layer.
            LayerKind::Softmax => unreachable!("softmax is terminal"),
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Softmax with max-subtraction.
pub fn softmax(mut z: Vec<f64>) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in &mut z {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in &mut z {
        *v /= sum;
    }
    z
}
