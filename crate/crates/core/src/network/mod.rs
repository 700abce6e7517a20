//! Feed-forward network evaluation and differentiation: layer stacks,
//! cross-entropy loss with per-layer quadratic weight decay, and gradients
//! with respect to both parameters and inputs.

mod gradient;
mod layer;

pub use gradient::{GradientSet, LayerGradient};
pub use layer::{sigmoid, softmax, LayerKind, LayerSpec};

use serde::{Deserialize, Serialize};

use crate::dataio::Image;
use crate::error::{Error, Result};

/// Floor applied to probabilities inside logs so losses stay finite.
pub const LOG_CLAMP: f64 = 1e-30;

/// Training provenance carried by a model file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub lbfgs_iterations: Option<usize>,
    #[serde(default)]
    pub train_error: Option<f64>,
    #[serde(default)]
    pub test_error: Option<f64>,
    #[serde(default)]
    pub note: Option<String>,
}

/// An ordered stack of affine layers with pointwise nonlinearities.
///
/// Immutable after construction or training; all evaluation methods are pure
/// and safe to call concurrently on a shared network.
#[derive(Debug, Clone)]
pub struct Network {
    pub name: String,
    pub layers: Vec<LayerSpec>,
    pub meta: ModelMeta,
}

/// Per-layer post-activation vectors for one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    activations: Vec<Vec<f64>>,
}

impl ForwardTrace {
    /// Post-activation output of layer `k` (0-based).
    pub fn layer(&self, k: usize) -> &[f64] {
        &self.activations[k]
    }

    /// Final layer output; class probabilities for a classifier.
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("networks have at least one layer")
    }

    pub fn len(&self) -> usize {
        self.activations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activations.is_empty()
    }
}

impl Network {
    /// Validate layer compatibility: nonempty, adjacent dimensions chain, and
    /// softmax only in final position.
    pub fn new(name: impl Into<String>, layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least one layer".into()));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::InvalidInput(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    k,
                    pair[0].output_dim(),
                    k + 1,
                    pair[1].input_dim()
                )));
            }
        }
        if layers[..layers.len() - 1].iter().any(|l| l.kind == LayerKind::Softmax) {
            return Err(Error::InvalidInput("softmax is only supported as the final layer".into()));
        }
        Ok(Network { name: name.into(), layers, meta: ModelMeta::default() })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").output_dim()
    }

    pub fn is_classifier(&self) -> bool {
        self.layers.last().expect("nonempty").kind == LayerKind::Softmax
    }

    fn require_classifier(&self) -> Result<()> {
        if !self.is_classifier() {
            return Err(Error::InvalidInput(format!(
                "network '{}' does not end in a softmax layer",
                self.name
            )));
        }
        Ok(())
    }

    /// Dimension of the activation vector entering layer `start`.
    pub fn dim_at(&self, start: usize) -> usize {
        if start == 0 {
            self.input_dim()
        } else {
            self.layers[start - 1].output_dim()
        }
    }

    pub fn forward(&self, x: &Image) -> Result<ForwardTrace> {
        self.forward_vec(x.pixels())
    }

    pub fn forward_vec(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.forward_from(0, x)
    }

    /// Forward pass starting at layer `start`, treating `input` as the
    /// activation entering that layer.
    pub fn forward_from(&self, start: usize, input: &[f64]) -> Result<ForwardTrace> {
        if start >= self.layers.len() {
            return Err(Error::InvalidInput(format!(
                "start layer {} out of range for {} layers",
                start,
                self.layers.len()
            )));
        }
        if input.len() != self.dim_at(start) {
            return Err(Error::InvalidInput(format!(
                "input dimension {} does not match layer {} input {}",
                input.len(),
                start,
                self.dim_at(start)
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() - start);
        let mut current = input;
        for layer in &self.layers[start..] {
            let a = layer.apply(current);
            activations.push(a);
            current = activations.last().expect("just pushed");
        }
        Ok(ForwardTrace { activations })
    }

    /// Arg-max class; ties break toward the lowest class index.
    pub fn predict(&self, x: &Image) -> Result<usize> {
        self.predict_vec(x.pixels())
    }

    pub fn predict_vec(&self, x: &[f64]) -> Result<usize> {
        self.require_classifier()?;
        let trace = self.forward_vec(x)?;
        Ok(argmax(trace.output()))
    }

    /// Sum over layers of `lambda_k * (sum of squared weights) / unit count`.
    pub fn decay_penalty(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                if l.lambda == 0.0 {
                    0.0
                } else {
                    l.lambda * l.weights.sum_squares() / l.output_dim() as f64
                }
            })
            .sum()
    }

    /// Cross-entropy at `(x, y)` plus the weight-decay penalty.
    pub fn loss(&self, x: &Image, y: usize) -> Result<f64> {
        Ok(self.cross_entropy_vec(x.pixels(), y)? + self.decay_penalty())
    }

    /// Cross-entropy alone, log-clamped so it is always finite.
    pub fn cross_entropy_vec(&self, x: &[f64], y: usize) -> Result<f64> {
        self.require_classifier()?;
        if y >= self.output_dim() {
            return Err(Error::InvalidInput(format!(
                "label {y} out of range for {} classes",
                self.output_dim()
            )));
        }
        let trace = self.forward_vec(x)?;
        Ok(-trace.output()[y].max(LOG_CLAMP).ln())
    }

    /// Mean gradient of the batch loss (cross-entropy mean plus decay) for
    /// every unfrozen `W_k`, `b_k`.
    pub fn param_gradient(&self, batch: &[(&Image, usize)]) -> Result<GradientSet> {
        let items: Vec<(usize, &[f64], usize)> =
            batch.iter().map(|(im, y)| (0usize, im.pixels(), *y)).collect();
        Ok(self.loss_and_gradient_mixed(&items)?.1)
    }

    /// Batch loss and parameter gradient over whole-image examples.
    pub fn loss_and_gradient(&self, images: &[Image], labels: &[usize]) -> Result<(f64, GradientSet)> {
        let items: Vec<(usize, &[f64], usize)> = images
            .iter()
            .zip(labels)
            .map(|(im, y)| (0usize, im.pixels(), *y))
            .collect();
        self.loss_and_gradient_mixed(&items)
    }

    /// Batch loss and gradient where each item may enter the network at a
    /// different layer (activation-space training examples).
    ///
    /// Items contribute their cross-entropy to the mean; for an item entering
    /// at layer `k`, gradients flow only into layers `k` and above. The
    /// reduction is a pairwise tree in index order, so results are
    /// bit-identical however the work is scheduled.
    pub fn loss_and_gradient_mixed(
        &self,
        items: &[(usize, &[f64], usize)],
    ) -> Result<(f64, GradientSet)> {
        self.require_classifier()?;
        if items.is_empty() {
            return Err(Error::InvalidInput("batch must be nonempty".into()));
        }
        for &(start, input, y) in items {
            if start >= self.layers.len() || input.len() != self.dim_at(start) {
                return Err(Error::InvalidInput(format!(
                    "item entering at layer {start} has dimension {}",
                    input.len()
                )));
            }
            if y >= self.output_dim() {
                return Err(Error::InvalidInput(format!("label {y} out of range")));
            }
        }

        let (mut ce_sum, mut grads) = self.tree_accumulate(items);
        let inv = 1.0 / items.len() as f64;
        ce_sum *= inv;
        grads.scale(inv);

        // Decay acts once on the batch objective, never on frozen layers.
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.frozen || layer.lambda == 0.0 {
                continue;
            }
            let c = 2.0 * layer.lambda / layer.output_dim() as f64;
            grads.layers[k].weights.add_scaled(&layer.weights, c);
        }
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.frozen {
                grads.layers[k].clear();
            }
        }
        Ok((ce_sum + self.decay_penalty(), grads))
    }

    fn tree_accumulate(&self, items: &[(usize, &[f64], usize)]) -> (f64, GradientSet) {
        const LEAF: usize = 32;
        if items.len() <= LEAF {
            let mut grads = GradientSet::zeros_like(self);
            let mut ce = 0.0;
            for &(start, input, y) in items {
                ce += self.backprop_example(start, input, y, &mut grads);
            }
            (ce, grads)
        } else {
            let mid = items.len() / 2;
            let (left, right) = rayon::join(
                || self.tree_accumulate(&items[..mid]),
                || self.tree_accumulate(&items[mid..]),
            );
            let (ce_l, mut g_l) = left;
            let (ce_r, g_r) = right;
            g_l.add(&g_r);
            (ce_l + ce_r, g_l)
        }
    }

    /// One example's cross-entropy; accumulates its parameter gradient.
    fn backprop_example(
        &self,
        start: usize,
        input: &[f64],
        y: usize,
        grads: &mut GradientSet,
    ) -> f64 {
        let trace = self.forward_from(start, input).expect("validated");
        let probs = trace.output();
        let ce = -probs[y].max(LOG_CLAMP).ln();

        // delta at the softmax layer: p - onehot(y)
        let mut delta: Vec<f64> = probs.to_vec();
        delta[y] -= 1.0;

        for k in (start..self.layers.len()).rev() {
            let local = k - start;
            let below: &[f64] = if local == 0 { input } else { trace.layer(local - 1) };
            grads.layers[k].weights.add_outer(&delta, below, 1.0);
            for (gb, &d) in grads.layers[k].biases.iter_mut().zip(&delta) {
                *gb += d;
            }
            if k > start {
                let back = self.layers[k].weights.matvec_transpose(&delta);
                delta = self.layers[k - 1].chain_activation(&back, below);
            }
        }
        ce
    }

    /// Gradient of the target cross-entropy with respect to the input pixels
    /// (the decay term is constant in `x` and excluded).
    pub fn input_gradient(&self, x: &Image, target: usize) -> Result<Vec<f64>> {
        Ok(self.ce_and_input_gradient(x.pixels(), target)?.1)
    }

    /// Cross-entropy at `(x, target)` and its input gradient in one pass.
    pub fn ce_and_input_gradient(&self, x: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
        self.ce_and_input_gradient_from(0, x, target)
    }

    /// As [`Network::ce_and_input_gradient`], differentiating with respect to
    /// the activation vector entering layer `start`.
    pub fn ce_and_input_gradient_from(
        &self,
        start: usize,
        input: &[f64],
        target: usize,
    ) -> Result<(f64, Vec<f64>)> {
        self.require_classifier()?;
        if target >= self.output_dim() {
            return Err(Error::InvalidInput(format!("label {target} out of range")));
        }
        let trace = self.forward_from(start, input)?;
        let probs = trace.output();
        let ce = -probs[target].max(LOG_CLAMP).ln();

        let mut delta: Vec<f64> = probs.to_vec();
        delta[target] -= 1.0;
        for k in ((start + 1)..self.layers.len()).rev() {
            let below = trace.layer(k - start - 1);
            let back = self.layers[k].weights.matvec_transpose(&delta);
            delta = self.layers[k - 1].chain_activation(&back, below);
        }
        Ok((ce, self.layers[start].weights.matvec_transpose(&delta)))
    }

    /// Fraction of `data` the classifier gets wrong.
    pub fn error_rate(&self, data: &crate::dataio::LabeledDataset) -> Result<f64> {
        let mut wrong = 0usize;
        for (im, &y) in data.images.iter().zip(&data.labels) {
            if self.predict(im)? != y {
                wrong += 1;
            }
        }
        Ok(wrong as f64 / data.len().max(1) as f64)
    }

    /// Flatten unfrozen parameters (row-major weights, then biases, per layer).
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if layer.frozen {
                continue;
            }
            out.extend_from_slice(layer.weights.data());
            out.extend_from_slice(&layer.biases);
        }
        out
    }

    /// Write a flat parameter vector back into the unfrozen layers.
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        let mut pos = 0;
        for layer in &mut self.layers {
            if layer.frozen {
                continue;
            }
            let nw = layer.weights.data().len();
            let nb = layer.biases.len();
            if pos + nw + nb > flat.len() {
                return Err(Error::InvalidInput("parameter vector too short".into()));
            }
            layer.weights.data_mut().copy_from_slice(&flat[pos..pos + nw]);
            pos += nw;
            layer.biases.copy_from_slice(&flat[pos..pos + nb]);
            pos += nb;
        }
        if pos != flat.len() {
            return Err(Error::InvalidInput(format!(
                "parameter vector has {} entries, network takes {}",
                flat.len(),
                pos
            )));
        }
        Ok(())
    }
}

/// Index of the largest value; ties break toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    fn softmax_layer(weights: Matrix, biases: Vec<f64>) -> LayerSpec {
        LayerSpec::new(LayerKind::Softmax, weights, biases, 0.0).unwrap()
    }

    fn zero_classifier(inputs: usize, classes: usize) -> Network {
        Network::new(
            "zero",
            vec![softmax_layer(Matrix::zeros(classes, inputs), vec![0.0; classes])],
        )
        .unwrap()
    }

    #[test]
    fn zero_parameter_classifier_is_uniform() {
        let net = zero_classifier(4, 10);
        let x = Image::new(vec![0.3; 4], 2, 2).unwrap();
        let trace = net.forward(&x).unwrap();
        for &p in trace.output() {
            assert!((p - 0.1).abs() < 1e-15);
        }
        assert_eq!(net.predict(&x).unwrap(), 0, "ties break to class 0");
    }

    #[test]
    fn identity_linear_layer_passes_input_through() {
        let net = Network::new(
            "id",
            vec![LayerSpec::new(LayerKind::Linear, Matrix::identity(3), vec![0.0; 3], 0.0).unwrap()],
        )
        .unwrap();
        let out = net.forward_vec(&[0.1, 0.5, 0.9]).unwrap();
        assert_eq!(out.output(), &[0.1, 0.5, 0.9]);
    }

    #[test]
    fn uniform_loss_is_ln_of_class_count() {
        let net = zero_classifier(4, 10);
        let x = Image::new(vec![0.9; 4], 2, 2).unwrap();
        let loss = net.loss(&x, 7).unwrap();
        assert!((loss - 10.0_f64.ln()).abs() < 1e-12, "loss {loss}");
    }

    #[test]
    fn decay_term_divides_by_unit_count() {
        // lambda=1, weights {2,0,0,0}, 4 units: decay = 1 * 4 / 4 = 1.
        let w = Matrix::from_vec(4, 1, vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        let layer = LayerSpec::new(LayerKind::Softmax, w, vec![0.0; 4], 1.0).unwrap();
        let net = Network::new("d", vec![layer]).unwrap();
        assert!((net.decay_penalty() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_class_linear_boundary() {
        // Decision value w.x with w = (1, -1): positive picks class 1.
        let w = Matrix::from_vec(2, 2, vec![0.0, 0.0, 1.0, -1.0]).unwrap();
        let net = Network::new("lin", vec![softmax_layer(w, vec![0.0; 2])]).unwrap();
        let x = Image::new(vec![0.9, 0.1], 2, 1).unwrap();
        assert_eq!(net.predict(&x).unwrap(), 1);
    }

    #[test]
    fn argmax_is_invariant_to_constant_logit_shift() {
        let w = Matrix::from_vec(3, 2, vec![0.4, -0.2, 0.1, 0.9, -0.5, 0.3]).unwrap();
        let shifted = {
            let mut net = Network::new("s", vec![softmax_layer(w.clone(), vec![0.0; 3])]).unwrap();
            for b in &mut net.layers[0].biases {
                *b += 13.5;
            }
            net
        };
        let base = Network::new("b", vec![softmax_layer(w, vec![0.0; 3])]).unwrap();
        for trial in 0..50 {
            let x = vec![trial as f64 * 0.017 % 1.0, (trial as f64 * 0.031) % 1.0];
            assert_eq!(base.predict_vec(&x).unwrap(), shifted.predict_vec(&x).unwrap());
        }
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let net = zero_classifier(4, 3);
        assert!(net.forward_vec(&[0.0; 5]).is_err());
    }

    #[test]
    fn rejects_interior_softmax() {
        let l1 = softmax_layer(Matrix::zeros(3, 3), vec![0.0; 3]);
        let l2 = softmax_layer(Matrix::zeros(3, 3), vec![0.0; 3]);
        assert!(Network::new("bad", vec![l1, l2]).is_err());
    }

    #[test]
    fn duplicated_example_gradient_equals_single() {
        let w = Matrix::from_vec(2, 3, vec![0.2, -0.4, 0.6, 0.1, 0.3, -0.2]).unwrap();
        let net = Network::new("g", vec![softmax_layer(w, vec![0.05, -0.05])]).unwrap();
        let x = Image::new(vec![0.2, 0.8, 0.5], 3, 1).unwrap();
        let single = net.param_gradient(&[(&x, 1)]).unwrap();
        let triple = net.param_gradient(&[(&x, 1), (&x, 1), (&x, 1)]).unwrap();
        for (a, b) in single.layers.iter().zip(&triple.layers) {
            for (u, v) in a.weights.data().iter().zip(b.weights.data()) {
                assert!((u - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn linear_softmax_gradient_matches_closed_form() {
        // With lambda = 0 the weight gradient is (p - onehot(y)) x^T.
        let w = Matrix::from_vec(3, 2, vec![0.3, -0.1, 0.2, 0.5, -0.4, 0.0]).unwrap();
        let net = Network::new("cf", vec![softmax_layer(w, vec![0.1, 0.0, -0.1])]).unwrap();
        let x = Image::new(vec![0.7, 0.2], 2, 1).unwrap();
        let y = 2usize;
        let probs = net.forward(&x).unwrap().output().to_vec();
        let grads = net.param_gradient(&[(&x, y)]).unwrap();
        for i in 0..3 {
            let d = probs[i] - if i == y { 1.0 } else { 0.0 };
            for j in 0..2 {
                let expect = d * x.pixels()[j];
                let got = grads.layers[0].weights.get(i, j);
                assert!((got - expect).abs() < 1e-14, "({i},{j}): {got} vs {expect}");
            }
            assert!((grads.layers[0].biases[i] - d).abs() < 1e-14);
        }
    }

    #[test]
    fn input_gradient_matches_linear_closed_form() {
        let w = Matrix::from_vec(3, 4, (0..12).map(|i| (i as f64 - 6.0) * 0.1).collect()).unwrap();
        let net =
            Network::new("ig", vec![softmax_layer(w.clone(), vec![0.0, 0.2, -0.2])]).unwrap();
        let x = Image::new(vec![0.1, 0.4, 0.6, 0.9], 4, 1).unwrap();
        let target = 1usize;
        let probs = net.forward(&x).unwrap().output().to_vec();
        let mut delta = probs;
        delta[target] -= 1.0;
        let expect = w.matvec_transpose(&delta);
        let got = net.input_gradient(&x, target).unwrap();
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_input_gradient_is_a_descent_direction() {
        let mut rng = crate::numerics::RngStream::new(42);
        let w1 = Matrix::uniform(5, 4, 0.8, &mut rng);
        let w2 = Matrix::uniform(3, 5, 0.8, &mut rng);
        let net = Network::new(
            "desc",
            vec![
                LayerSpec::new(LayerKind::Sigmoid, w1, vec![0.1; 5], 0.0).unwrap(),
                softmax_layer(w2, vec![0.0; 3]),
            ],
        )
        .unwrap();
        let x = vec![0.3, 0.6, 0.2, 0.8];
        let target = 2usize;
        let (loss0, grad) = net.ce_and_input_gradient(&x, target).unwrap();
        let step = 1e-4;
        let moved: Vec<f64> = x.iter().zip(&grad).map(|(xi, gi)| xi - step * gi).collect();
        let loss1 = net.cross_entropy_vec(&moved, target).unwrap();
        assert!(loss1 < loss0, "{loss1} !< {loss0}");
    }
}
