//! Independent oracles for the test suite. Everything here deliberately
//! avoids the implementation paths it checks: the singular-value oracle is a
//! cyclic Jacobi eigensolver, the DFT oracle a separately written double
//! sum, the convolution oracle materializes the full strided circulant
//! operator, and the PGM parser reads the format from scratch.

#![allow(dead_code)]

use blindspot::numerics::Matrix;

/// Largest singular value by cyclic Jacobi on the smaller Gram matrix.
pub fn sigma_max_oracle(a: &Matrix) -> f64 {
    let (rows, cols) = (a.rows(), a.cols());
    // Work with the smaller of A^T A and A A^T.
    let n = rows.min(cols);
    let mut s = vec![0.0f64; n * n];
    if cols <= rows {
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..rows {
                    acc += a.get(k, i) * a.get(k, j);
                }
                s[i * n + j] = acc;
            }
        }
    } else {
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..cols {
                    acc += a.get(i, k) * a.get(j, k);
                }
                s[i * n + j] = acc;
            }
        }
    }
    let lambda_max = jacobi_max_eigenvalue(&mut s, n);
    lambda_max.max(0.0).sqrt()
}

/// Cyclic Jacobi sweeps on a symmetric matrix; returns the largest eigenvalue.
fn jacobi_max_eigenvalue(s: &mut [f64], n: usize) -> f64 {
    if n == 1 {
        return s[0];
    }
    let scale: f64 = (0..n).map(|i| s[i * n + i].abs()).fold(1e-300, f64::max);
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(s[p * n + q].abs());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let spq = s[p * n + q];
                if spq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (s[q * n + q] - s[p * n + p]) / (2.0 * spq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let skp = s[k * n + p];
                    let skq = s[k * n + q];
                    s[k * n + p] = c * skp - sn * skq;
                    s[k * n + q] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let spk = s[p * n + k];
                    let sqk = s[q * n + k];
                    s[p * n + k] = c * spk - sn * sqk;
                    s[q * n + k] = sn * spk + c * sqk;
                }
            }
        }
    }
    (0..n).map(|i| s[i * n + i]).fold(f64::NEG_INFINITY, f64::max)
}

/// Independent direct-sum DFT evaluation at one frequency pair.
pub fn dft_point_oracle(kernel: &Matrix, out_h: usize, out_w: usize, a: usize, b: usize) -> (f64, f64) {
    let mut re = 0.0;
    let mut im = 0.0;
    for v in 0..kernel.cols() {
        for u in 0..kernel.rows() {
            let angle = -2.0
                * std::f64::consts::PI
                * (u as f64 * a as f64 / out_h as f64 + v as f64 * b as f64 / out_w as f64);
            let (s, c) = angle.sin_cos();
            re += kernel.get(u, v) * c;
            im += kernel.get(u, v) * s;
        }
    }
    (re, im)
}

/// Materialize the strided circular correlation operator as a dense matrix.
///
/// Maps `C` input images of side `S` (flattened row-major, channel-major) to
/// `D` output maps of side `S/stride`:
/// `y_d(n1,n2) = sum_c sum_u w_{c,d}(u1,u2) x_c((n1*stride+u1)%S, (n2*stride+u2)%S)`.
pub fn materialize_conv_operator(
    in_features: usize,
    out_features: usize,
    kernel_size: usize,
    stride: usize,
    side: usize,
    kernels: &[Matrix],
) -> Matrix {
    assert_eq!(side % stride, 0, "stride must divide the domain side");
    let out_side = side / stride;
    let rows = out_features * out_side * out_side;
    let cols = in_features * side * side;
    let mut m = Matrix::zeros(rows, cols);
    for d in 0..out_features {
        for n1 in 0..out_side {
            for n2 in 0..out_side {
                let row = (d * out_side + n1) * out_side + n2;
                for c in 0..in_features {
                    let w = &kernels[c * out_features + d];
                    for u1 in 0..kernel_size {
                        for u2 in 0..kernel_size {
                            let p1 = (n1 * stride + u1) % side;
                            let p2 = (n2 * stride + u2) % side;
                            let col = (c * side + p1) * side + p2;
                            let cur = m.get(row, col);
                            m.set(row, col, cur + w.get(u1, u2));
                        }
                    }
                }
            }
        }
    }
    m
}

/// Minimal independent P5 parser: returns (width, height, payload bytes).
pub fn parse_pgm(bytes: &[u8]) -> (usize, usize, Vec<u8>) {
    let mut pos = 0usize;
    let mut token = || {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        std::str::from_utf8(&bytes[start..pos]).unwrap().to_string()
    };
    assert_eq!(token(), "P5");
    let w: usize = token().parse().unwrap();
    let h: usize = token().parse().unwrap();
    let maxval: usize = token().parse().unwrap();
    assert_eq!(maxval, 255);
    pos += 1; // single whitespace byte after maxval
    (w, h, bytes[pos..pos + w * h].to_vec())
}

/// Central finite differences of a scalar function.
pub fn central_diff<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], i: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Relative agreement with an absolute floor: differences below the floor
/// pass outright, larger ones must be small relative to the magnitudes.
pub fn grad_close(a: f64, b: f64, rel: f64, abs_floor: f64) -> bool {
    (a - b).abs() <= abs_floor + rel * a.abs().max(b.abs())
}

/// Deterministic pseudo-random f64 in [-1, 1) without touching the library's
/// generator (SplitMix64 finalizer).
pub struct OracleRng(pub u64);

impl OracleRng {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 52) as f64 - 1.0
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}
