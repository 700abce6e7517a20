//! 2-D discrete Fourier transform of small real kernels by direct summation.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Complex values on an `height x width` frequency grid, row-major.
#[derive(Debug, Clone)]
pub struct ComplexGrid {
    height: usize,
    width: usize,
    entries: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        debug_assert!(i < self.height && j < self.width);
        self.entries[i * self.width + j]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }
}

/// DFT of a zero-padded kernel on an `out_height x out_width` grid.
///
/// Entry `(a, b)` is `sum_{u,v} k(u,v) * exp(-2*pi*i*(u*a/out_height + v*b/out_width))`.
/// Direct summation; kernels in scope are at most 11x11 so the O(N^2 H W)
/// cost is irrelevant.
pub fn dft2(kernel: &Matrix, out_height: usize, out_width: usize) -> Result<ComplexGrid> {
    if out_height == 0 || out_width == 0 {
        return Err(Error::InvalidInput("output grid must be nonempty".into()));
    }
    if kernel.is_empty() {
        return Err(Error::InvalidInput("kernel must be nonempty".into()));
    }
    if kernel.rows() > out_height || kernel.cols() > out_width {
        return Err(Error::InvalidInput(format!(
            "kernel {}x{} exceeds output grid {}x{}",
            kernel.rows(),
            kernel.cols(),
            out_height,
            out_width
        )));
    }
    if !kernel.all_finite() {
        return Err(Error::InvalidInput("kernel entries must be finite".into()));
    }

    let mut entries = Vec::with_capacity(out_height * out_width);
    for a in 0..out_height {
        for b in 0..out_width {
            let mut acc = Complex64::new(0.0, 0.0);
            for u in 0..kernel.rows() {
                for v in 0..kernel.cols() {
                    let phase = -2.0
                        * std::f64::consts::PI
                        * ((u * a) as f64 / out_height as f64 + (v * b) as f64 / out_width as f64);
                    acc += kernel.get(u, v) * Complex64::new(phase.cos(), phase.sin());
                }
            }
            entries.push(acc);
        }
    }
    Ok(ComplexGrid { height: out_height, width: out_width, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_kernel_transforms_to_ones() {
        let mut k = Matrix::zeros(3, 3);
        k.set(0, 0, 1.0);
        let g = dft2(&k, 8, 8).unwrap();
        for e in g.entries() {
            assert!((e.re - 1.0).abs() < 1e-12 && e.im.abs() < 1e-12, "entry {e}");
        }
    }

    #[test]
    fn dc_term_is_kernel_sum() {
        let k = Matrix::from_vec(2, 2, vec![1.0; 4]).unwrap();
        let g = dft2(&k, 4, 4).unwrap();
        let dc = g.get(0, 0);
        assert!((dc.re - 4.0).abs() < 1e-12 && dc.im.abs() < 1e-12, "dc {dc}");
    }

    #[test]
    fn rejects_zero_sized_grid_and_oversized_kernel() {
        let k = Matrix::identity(2);
        assert!(dft2(&k, 0, 4).is_err());
        assert!(dft2(&k, 4, 1).is_err());
    }
}
