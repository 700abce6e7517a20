//! Sparse autoencoder pretraining for the AE400-10 family.
//!
//! A sigmoid encoder/decoder pair is fitted to reconstruct the inputs under
//! squared error, a KL mean-activation sparsity penalty, and quadratic weight
//! decay; the decoder is discarded and the encoder returned frozen.

use crate::dataio::LabeledDataset;
use crate::error::Result;
use crate::network::{LayerKind, LayerSpec};
use crate::numerics::{Matrix, RngStream};
use crate::trainer::{minimize, IterationRecord, TrainConfig};

/// KL sparsity penalty: target mean activation and its weight in the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityConfig {
    pub target: f64,
    pub weight: f64,
}

impl Default for SparsityConfig {
    fn default() -> Self {
        SparsityConfig { target: 0.05, weight: 0.1 }
    }
}

/// Train a `input -> hidden` sigmoid encoder on reconstruction and return it
/// with its `frozen` flag set, plus the optimization log.
pub fn pretrain_autoencoder(
    data: &LabeledDataset,
    hidden: usize,
    lambda: f64,
    sparsity: &SparsityConfig,
    cfg: &TrainConfig,
) -> Result<(LayerSpec, Vec<IterationRecord>)> {
    let m = data.input_dim();
    let root = RngStream::new(cfg.seed);
    let mut enc = LayerSpec::init(LayerKind::Sigmoid, m, hidden, lambda, &mut root.fork(100));
    let dec = LayerSpec::init(LayerKind::Sigmoid, hidden, m, lambda, &mut root.fork(101));

    let mut x0 = Vec::with_capacity((m * hidden + hidden) * 2);
    x0.extend_from_slice(enc.weights.data());
    x0.extend_from_slice(&enc.biases);
    x0.extend_from_slice(dec.weights.data());
    x0.extend_from_slice(&dec.biases);

    let objective = |params: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (w1, rest) = params.split_at(hidden * m);
        let (b1, rest) = rest.split_at(hidden);
        let (w2, b2) = rest.split_at(m * hidden);
        Ok(objective_and_gradient(data, hidden, lambda, sparsity, w1, b1, w2, b2))
    };

    let outcome = minimize(objective, x0, &cfg.lbfgs(), None)?;

    let (w1, rest) = outcome.x.split_at(hidden * m);
    let (b1, _) = rest.split_at(hidden);
    enc.weights = Matrix::from_vec(hidden, m, w1.to_vec())?;
    enc.biases = b1.to_vec();
    enc.frozen = true;
    drop(dec);
    Ok((enc, outcome.trace))
}

/// Full-batch loss and gradient of the sparse autoencoder objective.
///
/// Two passes over the data keep memory flat: the first accumulates the mean
/// hidden activations the KL term needs, the second backpropagates.
#[allow(clippy::too_many_arguments)]
fn objective_and_gradient(
    data: &LabeledDataset,
    hidden: usize,
    lambda: f64,
    sparsity: &SparsityConfig,
    w1: &[f64],
    b1: &[f64],
    w2: &[f64],
    b2: &[f64],
) -> (f64, Vec<f64>) {
    let m = data.input_dim();
    let count = data.len() as f64;
    let enc = Matrix::from_vec(hidden, m, w1.to_vec()).expect("finite params");
    let dec = Matrix::from_vec(m, hidden, w2.to_vec()).expect("finite params");

    let forward_hidden = |x: &[f64]| -> Vec<f64> {
        let mut h = enc.matvec(x);
        for (hi, bi) in h.iter_mut().zip(b1) {
            *hi = crate::network::sigmoid(*hi + bi);
        }
        h
    };

    // Pass 1: mean hidden activation per unit.
    let mut rho_hat = vec![0.0; hidden];
    for im in &data.images {
        let h = forward_hidden(im.pixels());
        for (r, hi) in rho_hat.iter_mut().zip(&h) {
            *r += hi;
        }
    }
    for r in &mut rho_hat {
        *r = (*r / count).clamp(1e-6, 1.0 - 1e-6);
    }

    let rho = sparsity.target;
    let beta = sparsity.weight;
    let kl: f64 = rho_hat
        .iter()
        .map(|&rh| rho * (rho / rh).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - rh)).ln())
        .sum();
    // d KL / d h_ij, shared across examples up to the 1/count factor.
    let kl_grad: Vec<f64> =
        rho_hat.iter().map(|&rh| beta * (-(rho / rh) + (1.0 - rho) / (1.0 - rh)) / count).collect();

    // Pass 2: reconstruction error and parameter gradients.
    let mut recon = 0.0;
    let mut g_w1 = Matrix::zeros(hidden, m);
    let mut g_b1 = vec![0.0; hidden];
    let mut g_w2 = Matrix::zeros(m, hidden);
    let mut g_b2 = vec![0.0; m];
    for im in &data.images {
        let x = im.pixels();
        let h = forward_hidden(x);
        let mut xhat = dec.matvec(&h);
        for (v, bi) in xhat.iter_mut().zip(b2) {
            *v = crate::network::sigmoid(*v + bi);
        }
        recon += xhat.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * 0.5;

        let delta2: Vec<f64> = xhat
            .iter()
            .zip(x)
            .map(|(&xh, &xi)| (xh - xi) / count * xh * (1.0 - xh))
            .collect();
        g_w2.add_outer(&delta2, &h, 1.0);
        for (g, d) in g_b2.iter_mut().zip(&delta2) {
            *g += d;
        }
        let mut upstream = dec.matvec_transpose(&delta2);
        for (u, k) in upstream.iter_mut().zip(&kl_grad) {
            *u += k;
        }
        let delta1: Vec<f64> =
            upstream.iter().zip(&h).map(|(&u, &hi)| u * hi * (1.0 - hi)).collect();
        g_w1.add_outer(&delta1, x, 1.0);
        for (g, d) in g_b1.iter_mut().zip(&delta1) {
            *g += d;
        }
    }
    recon /= count;

    let decay = lambda * (enc.sum_squares() / hidden as f64 + dec.sum_squares() / m as f64);
    g_w1.add_scaled(&enc, 2.0 * lambda / hidden as f64);
    g_w2.add_scaled(&dec, 2.0 * lambda / m as f64);

    let mut grad = Vec::with_capacity(w1.len() + b1.len() + w2.len() + b2.len());
    grad.extend_from_slice(g_w1.data());
    grad.extend_from_slice(&g_b1);
    grad.extend_from_slice(g_w2.data());
    grad.extend_from_slice(&g_b2);
    (recon + beta * kl + decay, grad)
}
