//! Minimal-distortion adversarial perturbations.
//!
//! The operator approximates the closest point to `x` (in L2) that a
//! classifier assigns a chosen wrong label, by a penalty method: an outer
//! line search over the penalty weight `c` wraps an inner box-constrained
//! L-BFGS minimizing `c*||r||^2 + loss(x + r, target)`. Growing `c` trades
//! loss for perturbation size until the target label is lost; bisecting the
//! bracket and keeping the smallest feasible perturbation approximates the
//! minimizer. When the inner solve already fails at `c_init`, the bracket is
//! extended downward by the same growth factor. Inner solves warm-start from
//! the best feasible perturbation found so far.
//!
//! Also here: the per-pixel RMS distortion metric, distortion amplification,
//! and the Gaussian-noise baseline the transfer tables compare against.

mod attack;

pub use attack::{
    minimal_perturbation, minimal_perturbation_at_layer, penalty_minimizer, Bounds, VectorAttack,
};

use serde::{Deserialize, Serialize};

use crate::dataio::Image;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// How the adversarial target label is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPolicy {
    /// The runner-up class of the current prediction (cheapest flip).
    SecondMostProbable,
    /// The class the model currently finds least probable.
    LeastProbable,
    /// A fixed label.
    Fixed(usize),
    /// Try every wrong label in descending probability order.
    CycleAll,
}

/// Attack parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub target_policy: TargetPolicy,
    pub c_init: f64,
    pub c_growth: f64,
    pub bisection_steps: usize,
    pub inner_iterations: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            target_policy: TargetPolicy::SecondMostProbable,
            c_init: 0.01,
            c_growth: 10.0,
            bisection_steps: 20,
            inner_iterations: 500,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_init > 0.0) {
            return Err(Error::InvalidInput(format!("c_init must be positive, got {}", self.c_init)));
        }
        if !(self.c_growth > 1.0) {
            return Err(Error::InvalidInput(format!(
                "c_growth must exceed 1, got {}",
                self.c_growth
            )));
        }
        Ok(())
    }
}

/// An original/perturbed pair with solver diagnostics.
#[derive(Debug, Clone)]
pub struct AdversarialResult {
    pub original: Image,
    pub perturbed: Image,
    pub r: Vec<f64>,
    pub target: usize,
    pub achieved: bool,
    pub c_final: f64,
    pub distortion: f64,
    pub inner_iters_used: usize,
}

impl AdversarialResult {
    /// Euclidean length of the perturbation.
    pub fn r_norm(&self) -> f64 {
        self.r.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Per-pixel RMS distortion `sqrt(sum (x2_i - x_i)^2 / n)`.
pub fn distortion(x: &Image, x2: &Image) -> Result<f64> {
    if x.dim() != x2.dim() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            x.dim(),
            x2.dim()
        )));
    }
    let sum: f64 = x.pixels().iter().zip(x2.pixels()).map(|(a, b)| (b - a) * (b - a)).sum();
    Ok((sum / x.dim() as f64).sqrt())
}

/// Rescale the perturbation `x2 - x` so the distortion metric equals
/// `target_stddev` before clamping back into `[0, 1]`.
///
/// With `literal` set, the scale factor is `target_stddev` applied to the
/// unit-normalized difference (no `sqrt(n)`), which fixes the L2 norm rather
/// than the per-pixel stddev.
pub fn amplify(x: &Image, x2: &Image, target_stddev: f64, literal: bool) -> Result<Image> {
    if x.dim() != x2.dim() {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    let diff: Vec<f64> = x2.pixels().iter().zip(x.pixels()).map(|(b, a)| b - a).collect();
    let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::InvalidInput("images are identical; nothing to amplify".into()));
    }
    let scale = if literal {
        target_stddev / norm
    } else {
        target_stddev * (x.dim() as f64).sqrt() / norm
    };
    let pixels: Vec<f64> = x.pixels().iter().zip(&diff).map(|(a, d)| a + scale * d).collect();
    Image::from_clamped(pixels, x.width(), x.height())
}

/// `x` plus i.i.d. `N(0, stddev^2)` noise, clamped to `[0, 1]`.
pub fn gaussian_baseline(x: &Image, stddev: f64, rng: &mut RngStream) -> Result<Image> {
    let noise = rng.gaussian(x.dim(), stddev)?;
    let pixels: Vec<f64> = x.pixels().iter().zip(&noise).map(|(p, n)| p + n).collect();
    Image::from_clamped(pixels, x.width(), x.height())
}
