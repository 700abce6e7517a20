//! Binary PGM (P5) grids of images, used for all figure-style output.

use std::fs;
use std::path::Path;

use crate::dataio::Image;
use crate::error::{Error, Result};

const SEPARATOR: u8 = 128;

/// Tile `images` row-major into a `cols`-wide grid with a one-pixel
/// separator of value 128 and write it as binary PGM, maxval 255.
///
/// Pixel `p` encodes as `round(255 * clamp(p, 0, 1))`. Unused trailing grid
/// cells stay at the separator value.
pub fn write_pgm_grid(images: &[Image], cols: usize, path: &Path) -> Result<()> {
    let bytes = render_pgm_grid(images, cols)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// The exact bytes `write_pgm_grid` writes.
pub fn render_pgm_grid(images: &[Image], cols: usize) -> Result<Vec<u8>> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidInput("need at least one image".into()))?;
    if cols == 0 {
        return Err(Error::InvalidInput("cols must be positive".into()));
    }
    let (w, h) = (first.width(), first.height());
    if images.iter().any(|im| im.width() != w || im.height() != h) {
        return Err(Error::InvalidInput("all images must share dimensions".into()));
    }

    let grid_rows = images.len().div_ceil(cols);
    let canvas_w = cols * w + (cols - 1);
    let canvas_h = grid_rows * h + (grid_rows - 1);
    let mut canvas = vec![SEPARATOR; canvas_w * canvas_h];

    for (k, im) in images.iter().enumerate() {
        let (gr, gc) = (k / cols, k % cols);
        let top = gr * (h + 1);
        let left = gc * (w + 1);
        for y in 0..h {
            for x in 0..w {
                let p = im.pixels()[y * w + x].clamp(0.0, 1.0);
                canvas[(top + y) * canvas_w + (left + x)] = (255.0 * p).round() as u8;
            }
        }
    }

    let mut out = format!("P5\n{canvas_w} {canvas_h}\n255\n").into_bytes();
    out.extend_from_slice(&canvas);
    Ok(out)
}
