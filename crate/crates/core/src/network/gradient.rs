//! Parameter gradients, shaped like the network they came from.

use crate::numerics::Matrix;

/// Gradient of the loss with respect to one layer's parameters.
#[derive(Debug, Clone)]
pub struct LayerGradient {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl LayerGradient {
    pub fn clear(&mut self) {
        self.weights.data_mut().fill(0.0);
        self.biases.fill(0.0);
    }
}

/// One `LayerGradient` per network layer (frozen layers stay zero).
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
}

impl GradientSet {
    pub fn zeros_like(net: &super::Network) -> Self {
        GradientSet {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: Matrix::zeros(l.output_dim(), l.input_dim()),
                    biases: vec![0.0; l.output_dim()],
                })
                .collect(),
        }
    }

    pub fn add(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.add_scaled(&b.weights, 1.0);
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            for w in l.weights.data_mut() {
                *w *= c;
            }
            for b in &mut l.biases {
                *b *= c;
            }
        }
    }

    /// Flatten in the same layout as `Network::flatten_params`, skipping the
    /// layers flagged frozen in `net`.
    pub fn flatten(&self, net: &super::Network) -> Vec<f64> {
        let mut out = Vec::new();
        for (g, l) in self.layers.iter().zip(&net.layers) {
            if l.frozen {
                continue;
            }
            out.extend_from_slice(g.weights.data());
            out.extend_from_slice(&g.biases);
        }
        out
    }
}
