//! Dataset ingestion and on-disk formats: IDX image/label files, PGM image
//! grids, the model JSON schema, CSV tables, and a synthetic fallback
//! dataset so everything runs without the real MNIST files.

mod csvout;
mod idx;
mod model;
mod pgm;
mod synthetic;

pub use csvout::{fmt_f64, CsvTable};
pub use idx::load_idx;
pub use model::{load_model, save_model};
pub use pgm::write_pgm_grid;
pub use synthetic::two_blob_dataset;

use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// A grayscale image with pixels in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Vec<f64>,
    width: usize,
    height: usize,
}

impl Image {
    pub fn new(pixels: Vec<f64>, width: usize, height: usize) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "pixel count {} does not match {}x{}",
                pixels.len(),
                width,
                height
            )));
        }
        if !pixels.iter().all(|p| p.is_finite() && (0.0..=1.0).contains(p)) {
            return Err(Error::InvalidInput("pixels must lie in [0, 1]".into()));
        }
        Ok(Image { pixels, width, height })
    }

    /// Clamp arbitrary values into `[0, 1]` and build an image.
    pub fn from_clamped(mut pixels: Vec<f64>, width: usize, height: usize) -> Result<Self> {
        for p in &mut pixels {
            *p = p.clamp(0.0, 1.0);
        }
        Image::new(pixels, width, height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.pixels.len()
    }
}

/// Which half of a dataset an experiment reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// Images with class labels; immutable once constructed.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub name: String,
    pub num_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        images: Vec<Image>,
        labels: Vec<usize>,
        name: impl Into<String>,
        num_classes: usize,
    ) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Consistency(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(LabeledDataset { images, labels, name: name.into(), num_classes })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Input dimension of the images (they all share it).
    pub fn input_dim(&self) -> usize {
        self.images.first().map_or(0, Image::dim)
    }

    /// Deterministic seeded subsample of at most `n` examples, preserving the
    /// shuffled order.
    pub fn subsample(&self, n: usize, seed: u64) -> LabeledDataset {
        if n >= self.len() {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        RngStream::new(seed).shuffle(&mut idx);
        idx.truncate(n);
        let images = idx.iter().map(|&i| self.images[i].clone()).collect();
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        LabeledDataset {
            images,
            labels,
            name: format!("{}-sub{}", self.name, n),
            num_classes: self.num_classes,
        }
    }
}

/// Split a dataset into two disjoint halves after a seeded shuffle.
pub fn split_half(d: &LabeledDataset, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if d.len() % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "dataset length {} is odd; cannot split in half",
            d.len()
        )));
    }
    let mut idx: Vec<usize> = (0..d.len()).collect();
    RngStream::new(seed).shuffle(&mut idx);
    let half = d.len() / 2;
    let part = |ids: &[usize], tag: &str| LabeledDataset {
        images: ids.iter().map(|&i| d.images[i].clone()).collect(),
        labels: ids.iter().map(|&i| d.labels[i]).collect(),
        name: format!("{}-{}", d.name, tag),
        num_classes: d.num_classes,
    };
    Ok((part(&idx[..half], "P1"), part(&idx[half..], "P2")))
}
