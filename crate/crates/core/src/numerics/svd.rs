//! Largest-singular-value estimation by deterministic power iteration.

use crate::error::{Error, Result};
use crate::numerics::matrix::norm2;
use crate::numerics::Matrix;

const MAX_ITERATIONS: usize = 10_000;

/// Largest singular value of `m`, to relative tolerance `tol`.
///
/// Power iteration on `mᵀm` from an all-ones starting vector, stopping when
/// the estimate's relative change falls below `tol`. Deterministic for a
/// given input. If the all-ones vector happens to lie in the null space of a
/// nonzero matrix, iteration restarts from successive basis vectors.
pub fn largest_singular_value(m: &Matrix, tol: f64) -> Result<f64> {
    if m.is_empty() {
        return Err(Error::InvalidInput("matrix must be nonempty".into()));
    }
    if !m.all_finite() {
        return Err(Error::InvalidInput("matrix entries must be finite".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    if m.data().iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }

    let n = m.cols();
    let start = vec![1.0 / (n as f64).sqrt(); n];
    match iterate(m, start, tol) {
        Some(r) => r,
        None => {
            // All-ones start was annihilated by mᵀm; basis vectors cannot all be.
            for k in 0..n {
                let mut e = vec![0.0; n];
                e[k] = 1.0;
                if let Some(r) = iterate(m, e, tol) {
                    return r;
                }
            }
            Ok(0.0)
        }
    }
}

/// Returns `None` only if the start vector maps to zero.
fn iterate(m: &Matrix, mut v: Vec<f64>, tol: f64) -> Option<Result<f64>> {
    let mut sigma_prev = f64::NAN;
    for _ in 0..MAX_ITERATIONS {
        let u = m.matvec(&v);
        let sigma = norm2(&u);
        if sigma == 0.0 {
            return None;
        }
        let w = m.matvec_transpose(&u);
        let wn = norm2(&w);
        if wn == 0.0 {
            return None;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
        if sigma_prev.is_finite() && (sigma - sigma_prev).abs() <= tol * sigma.max(f64::MIN_POSITIVE) {
            return Some(Ok(sigma));
        }
        sigma_prev = sigma;
    }
    Some(Err(Error::NonConvergence { iterations: MAX_ITERATIONS, best_estimate: sigma_prev }))
}
