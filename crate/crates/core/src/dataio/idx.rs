//! IDX file ingestion (the MNIST distribution format).

use std::fs;
use std::path::Path;

use crate::dataio::{Image, LabeledDataset};
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: String,
}

impl<'a> Reader<'a> {
    fn u32_be(&mut self) -> Result<u32> {
        if self.pos + 4 > self.bytes.len() {
            return Err(Error::Format {
                path: self.path.clone(),
                detail: format!(
                    "truncated header: wanted 4 bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            });
        }
        let v = u32::from_be_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        Ok(v)
    }

    fn payload(&self, expected: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < expected {
            return Err(Error::Format {
                path: self.path.clone(),
                detail: format!("truncated payload: expected {expected} bytes, got {available}"),
            });
        }
        Ok(&self.bytes[self.pos..self.pos + expected])
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Load an IDX image/label file pair into a dataset.
///
/// Pixel bytes `b` are scaled to `b / 255` so the full `[0, 1]` range is
/// attainable. Header fields (count, height, width) come from the files.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let image_bytes = read_file(images_path)?;
    let label_bytes = read_file(labels_path)?;

    let mut ir = Reader { bytes: &image_bytes, pos: 0, path: images_path.display().to_string() };
    let magic = ir.u32_be()?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format {
            path: ir.path,
            detail: format!("expected image magic {IMAGE_MAGIC}, got {magic}"),
        });
    }
    let count = ir.u32_be()? as usize;
    let height = ir.u32_be()? as usize;
    let width = ir.u32_be()? as usize;
    let pixels_per_image = width * height;
    let payload = ir.payload(count * pixels_per_image)?;

    let mut lr = Reader { bytes: &label_bytes, pos: 0, path: labels_path.display().to_string() };
    let magic = lr.u32_be()?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format {
            path: lr.path,
            detail: format!("expected label magic {LABEL_MAGIC}, got {magic}"),
        });
    }
    let label_count = lr.u32_be()? as usize;
    if label_count != count {
        return Err(Error::Consistency(format!(
            "{} has {count} images but {} has {label_count} labels",
            images_path.display(),
            labels_path.display()
        )));
    }
    let label_payload = lr.payload(count)?;

    let mut images = Vec::with_capacity(count);
    for chunk in payload.chunks_exact(pixels_per_image) {
        let pixels = chunk.iter().map(|&b| b as f64 / 255.0).collect();
        images.push(Image::new(pixels, width, height)?);
    }
    let labels: Vec<usize> = label_payload.iter().map(|&b| b as usize).collect();
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Format {
            path: labels_path.display().to_string(),
            detail: format!("label byte {bad} outside 0..=9"),
        });
    }

    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    LabeledDataset::new(images, labels, name, 10)
}
