//! Operator norm of a strided circular convolution via the frequency domain.
//!
//! For a layer with `C` input features, `D` output features, `N x N` kernels
//! and stride `S_t`, evaluated on a circular domain of side `S = grid * S_t`,
//! the operator splits over output frequencies `eta` into independent
//! `D x (C * S_t^2)` blocks `A(eta)` whose entries are kernel DFT values at
//! the `S_t^2` aliased input frequencies `eta + l * grid`. The norm is
//! `max_eta sigma_max(A(eta)) / S_t`; on the finite grid this is a lower
//! estimate of the continuous supremum and exact for circular images of side
//! `S`. The materialized-matrix oracle in the test suite pins the convention.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{dft2, ComplexGrid, Matrix};

/// Strided convolutional layer description (analysis only, never executed).
#[derive(Debug, Clone)]
pub struct ConvLayerSpec {
    pub in_features: usize,
    pub out_features: usize,
    pub kernel_size: usize,
    pub stride: usize,
    /// `C * D` kernels of size `N x N`, indexed `c * out_features + d`.
    pub kernels: Vec<Matrix>,
}

impl ConvLayerSpec {
    pub fn new(
        in_features: usize,
        out_features: usize,
        kernel_size: usize,
        stride: usize,
        kernels: Vec<Matrix>,
    ) -> Result<Self> {
        if in_features == 0 || out_features == 0 || kernel_size == 0 {
            return Err(Error::InvalidInput("conv layer dimensions must be positive".into()));
        }
        if stride == 0 {
            return Err(Error::InvalidInput("stride must be at least 1".into()));
        }
        if kernels.len() != in_features * out_features {
            return Err(Error::InvalidInput(format!(
                "expected {} kernels, got {}",
                in_features * out_features,
                kernels.len()
            )));
        }
        for (i, k) in kernels.iter().enumerate() {
            if k.rows() != kernel_size || k.cols() != kernel_size {
                return Err(Error::InvalidInput(format!(
                    "kernel {i} is {}x{}, expected {kernel_size}x{kernel_size}",
                    k.rows(),
                    k.cols()
                )));
            }
            if !k.all_finite() {
                return Err(Error::InvalidInput(format!("kernel {i} has non-finite entries")));
            }
        }
        Ok(ConvLayerSpec { in_features, out_features, kernel_size, stride, kernels })
    }

    pub fn kernel(&self, c: usize, d: usize) -> &Matrix {
        &self.kernels[c * self.out_features + d]
    }
}

/// The bound, where the frequency grid attained it, and the grid used.
#[derive(Debug, Clone, Copy)]
pub struct ConvBound {
    pub bound: f64,
    pub argmax_freq: (usize, usize),
    pub grid_points: usize,
}

/// Evaluate the frequency-domain operator norm on a `grid x grid` sample of
/// the fundamental domain.
pub fn conv_bound(layer: &ConvLayerSpec, grid_points: usize) -> Result<ConvBound> {
    let delta = layer.stride;
    if grid_points == 0 || grid_points * delta < layer.kernel_size {
        return Err(Error::InvalidInput(format!(
            "grid_points {grid_points} too small: need grid * stride >= kernel size {}",
            layer.kernel_size
        )));
    }
    let side = grid_points * delta;

    let mut spectra: Vec<ComplexGrid> = Vec::with_capacity(layer.kernels.len());
    for k in &layer.kernels {
        spectra.push(dft2(k, side, side)?);
    }

    let rows = layer.out_features;
    let cols = layer.in_features * delta * delta;
    let mut block = CMatrix::zeros(rows, cols);
    let mut best = f64::NEG_INFINITY;
    let mut best_freq = (0, 0);
    for eta1 in 0..grid_points {
        for eta2 in 0..grid_points {
            for d in 0..layer.out_features {
                for c in 0..layer.in_features {
                    let spectrum = &spectra[c * layer.out_features + d];
                    for l1 in 0..delta {
                        for l2 in 0..delta {
                            let col = c * delta * delta + l1 * delta + l2;
                            block.set(
                                d,
                                col,
                                spectrum.get(eta1 + l1 * grid_points, eta2 + l2 * grid_points),
                            );
                        }
                    }
                }
            }
            let sigma = block.largest_singular_value(1e-12)?;
            if sigma > best {
                best = sigma;
                best_freq = (eta1, eta2);
            }
        }
    }
    Ok(ConvBound { bound: best / delta as f64, argmax_freq: best_freq, grid_points })
}

/// Small dense complex matrix, just enough for per-frequency norms.
struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![Complex64::new(0.0, 0.0); rows * cols] }
    }

    fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.rows];
        for (i, yi) in y.iter_mut().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            *yi = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        y
    }

    fn matvec_adjoint(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::new(0.0, 0.0); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            for (yj, &a) in y.iter_mut().zip(row) {
                *yj += a.conj() * xi;
            }
        }
        y
    }

    /// Power iteration on `A* A`, mirroring the real-valued routine.
    fn largest_singular_value(&self, tol: f64) -> Result<f64> {
        if self.data.iter().all(|v| v.norm_sqr() == 0.0) {
            return Ok(0.0);
        }
        let n = self.cols;
        let start = vec![Complex64::new(1.0 / (n as f64).sqrt(), 0.0); n];
        if let Some(sigma) = self.iterate(start, tol) {
            return Ok(sigma);
        }
        for k in 0..n {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[k] = Complex64::new(1.0, 0.0);
            if let Some(sigma) = self.iterate(e, tol) {
                return Ok(sigma);
            }
        }
        Ok(0.0)
    }

    fn iterate(&self, mut v: Vec<Complex64>, tol: f64) -> Option<f64> {
        let mut prev = f64::NAN;
        for _ in 0..10_000 {
            let u = self.matvec(&v);
            let sigma = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if sigma == 0.0 {
                return None;
            }
            let w = self.matvec_adjoint(&u);
            let wn = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if wn == 0.0 {
                return None;
            }
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / wn;
            }
            if prev.is_finite() && (sigma - prev).abs() <= tol * sigma.max(f64::MIN_POSITIVE) {
                return Some(sigma);
            }
            prev = sigma;
        }
        Some(prev)
    }
}
