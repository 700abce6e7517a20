//! Adversarial-example search and stability analysis for small image classifiers.
//!
//! The crate trains fully connected MNIST-style networks with full-batch
//! L-BFGS, finds minimal-distortion adversarial perturbations by a
//! penalty-method line search over a box-constrained inner solver, measures
//! how those perturbations transfer across models and training splits, and
//! bounds per-layer Lipschitz constants spectrally (SVD for dense layers,
//! a frequency-domain operator norm for strided convolutions).
//!
//! Modules mirror the pipeline: [`numerics`] holds the shared kernels,
//! [`dataio`] the file formats, [`network`] evaluation and gradients,
//! [`trainer`] the optimizers, [`adversary`] the perturbation search,
//! [`spectral`] the bounds, [`experiments`] the studies, and [`cli`] the
//! command-line front end.

pub mod adversary;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod experiments;
pub mod network;
pub mod numerics;
pub mod spectral;
pub mod trainer;

pub use error::{Error, Result};
