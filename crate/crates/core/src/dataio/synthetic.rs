//! Seeded synthetic fallback dataset: two-class 8x8 blob images.
//!
//! Keeps the whole pipeline runnable without the MNIST files. The two
//! classes are Gaussian intensity blobs anchored in opposite corners, with
//! jittered centers, jittered widths, and pixel noise, so trained models
//! have small but nonzero test error.

use crate::dataio::{Image, LabeledDataset};
use crate::numerics::RngStream;

pub const BLOB_SIDE: usize = 8;

/// Generate `n` labeled blob images, deterministically from `seed`.
pub fn two_blob_dataset(n: usize, seed: u64) -> LabeledDataset {
    let mut rng = RngStream::new(seed);
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let (base_x, base_y) = if class == 0 { (2.3, 2.3) } else { (4.7, 4.7) };
        let cx = base_x + (rng.next_f64() * 2.0 - 1.0) * 1.1;
        let cy = base_y + (rng.next_f64() * 2.0 - 1.0) * 1.1;
        let sigma = 1.0 + rng.next_f64() * 0.7;
        let mut pixels = Vec::with_capacity(BLOB_SIDE * BLOB_SIDE);
        for y in 0..BLOB_SIDE {
            for x in 0..BLOB_SIDE {
                let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                let v = (-d2 / (2.0 * sigma * sigma)).exp() + rng.next_gaussian(0.12);
                pixels.push(v.clamp(0.0, 1.0));
            }
        }
        images.push(Image::new(pixels, BLOB_SIDE, BLOB_SIDE).expect("clamped pixels"));
        labels.push(class);
    }
    LabeledDataset::new(images, labels, format!("blobs-{n}-s{seed}"), 2).expect("consistent")
}
