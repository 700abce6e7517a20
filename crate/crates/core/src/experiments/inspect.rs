//! Natural-basis versus random-direction activation inspection.

use crate::dataio::{Image, LabeledDataset};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::numerics::RngStream;

/// A unit-norm direction in some layer's activation space.
#[derive(Debug, Clone)]
pub struct Direction {
    pub vector: Vec<f64>,
    pub kind: DirectionKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionKind {
    NaturalBasis(usize),
    Random(u64),
}

impl Direction {
    /// Coordinate vector `e_i`.
    pub fn natural(dim: usize, i: usize) -> Result<Direction> {
        if i >= dim {
            return Err(Error::InvalidInput(format!("basis index {i} out of range for dim {dim}")));
        }
        let mut vector = vec![0.0; dim];
        vector[i] = 1.0;
        Ok(Direction { vector, kind: DirectionKind::NaturalBasis(i) })
    }
}

/// Gaussian vector normalized to unit length, deterministic per seed.
pub fn random_direction(dim: usize, seed: u64) -> Result<Direction> {
    if dim == 0 {
        return Err(Error::InvalidInput("dimension must be at least 1".into()));
    }
    let mut rng = RngStream::new(seed);
    let vector = loop {
        let v = rng.gaussian(dim, 1.0)?;
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            break v.into_iter().map(|x| x / n).collect::<Vec<f64>>();
        }
    };
    Ok(Direction { vector, kind: DirectionKind::Random(seed) })
}

/// Indices of the `k` held-out images with the largest projection of their
/// layer activation onto `dir`, in descending order; ties break toward the
/// lower index. `layer_index` 0 means the raw input.
pub fn top_activating(
    net: &Network,
    layer_index: usize,
    dir: &Direction,
    held_out: &LabeledDataset,
    k: usize,
) -> Result<Vec<usize>> {
    if layer_index > net.layers.len() {
        return Err(Error::InvalidInput(format!(
            "layer index {layer_index} out of range for {} layers",
            net.layers.len()
        )));
    }
    if k > held_out.len() {
        return Err(Error::InvalidInput(format!(
            "k = {k} exceeds held-out size {}",
            held_out.len()
        )));
    }
    let expected_dim = net.dim_at(layer_index);
    if dir.vector.len() != expected_dim {
        return Err(Error::InvalidInput(format!(
            "direction dimension {} does not match layer {layer_index} width {expected_dim}",
            dir.vector.len()
        )));
    }

    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(held_out.len());
    for (i, im) in held_out.images.iter().enumerate() {
        let score = if layer_index == 0 {
            dot(im.pixels(), &dir.vector)
        } else {
            let trace = net.forward(im)?;
            dot(trace.layer(layer_index - 1), &dir.vector)
        };
        scored.push((score, i));
    }
    scored.sort_by(|a, b| {
        b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1))
    });
    Ok(scored.into_iter().take(k).map(|(_, i)| i).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The paired figure payloads: one row of top-activating images per natural
/// unit and per random direction.
#[derive(Debug, Clone)]
pub struct InspectionGrids {
    pub natural: Vec<Image>,
    pub random: Vec<Image>,
    pub natural_indices: Vec<Vec<usize>>,
    pub random_indices: Vec<Vec<usize>>,
    pub rows: usize,
    pub k: usize,
}

/// Build the natural-basis and random-direction grids for one layer: units
/// `0..rows` against `rows` seeded random directions, `k` images per row.
pub fn inspection_grids(
    net: &Network,
    layer_index: usize,
    held_out: &LabeledDataset,
    rows: usize,
    k: usize,
    seed: u64,
) -> Result<InspectionGrids> {
    let dim = net.dim_at(layer_index);
    if rows == 0 || rows > dim {
        return Err(Error::InvalidInput(format!("rows must lie in 1..={dim}")));
    }
    let root = RngStream::new(seed);
    let mut natural = Vec::with_capacity(rows * k);
    let mut random = Vec::with_capacity(rows * k);
    let mut natural_indices = Vec::with_capacity(rows);
    let mut random_indices = Vec::with_capacity(rows);
    for row in 0..rows {
        let nat = Direction::natural(dim, row)?;
        let idx = top_activating(net, layer_index, &nat, held_out, k)?;
        natural.extend(idx.iter().map(|&i| held_out.images[i].clone()));
        natural_indices.push(idx);

        let rnd = random_direction(dim, root.fork(row as u64).seed())?;
        let idx = top_activating(net, layer_index, &rnd, held_out, k)?;
        random.extend(idx.iter().map(|&i| held_out.images[i].clone()));
        random_indices.push(idx);
    }
    Ok(InspectionGrids { natural, random, natural_indices, random_indices, rows, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::two_blob_dataset;
    use crate::network::{LayerKind, LayerSpec};
    use crate::numerics::Matrix;

    fn identity_net(dim: usize) -> Network {
        Network::new(
            "probe",
            vec![
                LayerSpec::new(LayerKind::Softmax, Matrix::identity(dim), vec![0.0; dim], 0.0)
                    .unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn input_layer_natural_direction_ranks_by_pixel() {
        let data = two_blob_dataset(30, 41);
        let net = identity_net(data.input_dim());
        let pixel = 27;
        let dir = Direction::natural(data.input_dim(), pixel).unwrap();
        let got = top_activating(&net, 0, &dir, &data, 5).unwrap();

        let mut brute: Vec<(f64, usize)> =
            data.images.iter().enumerate().map(|(i, im)| (im.pixels()[pixel], i)).collect();
        brute.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let expect: Vec<usize> = brute.into_iter().take(5).map(|(_, i)| i).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn opposite_directions_pick_disjoint_tops() {
        let data = two_blob_dataset(60, 43);
        let net = identity_net(data.input_dim());
        let dir = random_direction(data.input_dim(), 9).unwrap();
        let neg = Direction { vector: dir.vector.iter().map(|v| -v).collect(), kind: dir.kind };
        let top = top_activating(&net, 0, &dir, &data, 5).unwrap();
        let bottom = top_activating(&net, 0, &neg, &data, 5).unwrap();
        assert!(top.iter().all(|i| !bottom.contains(i)), "{top:?} vs {bottom:?}");
    }

    #[test]
    fn ranking_is_invariant_to_positive_scaling() {
        let data = two_blob_dataset(40, 47);
        let net = identity_net(data.input_dim());
        let dir = random_direction(data.input_dim(), 5).unwrap();
        let scaled = Direction {
            vector: dir.vector.iter().map(|v| 7.5 * v).collect(),
            kind: dir.kind,
        };
        let a = top_activating(&net, 0, &dir, &data, 8).unwrap();
        let b = top_activating(&net, 0, &scaled, &data, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn random_directions_are_unit_norm_and_nearly_orthogonal() {
        let d0 = random_direction(100, 0).unwrap();
        let d1 = random_direction(100, 1).unwrap();
        let n0: f64 = d0.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((n0 - 1.0).abs() < 1e-12);
        let dp: f64 = d0.vector.iter().zip(&d1.vector).map(|(a, b)| a * b).sum();
        assert!(dp.abs() < 0.5, "|dot| = {}", dp.abs());
    }

    #[test]
    fn dim_one_direction_is_a_sign() {
        let d = random_direction(1, 3).unwrap();
        assert!((d.vector[0].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grids_are_deterministic() {
        let data = two_blob_dataset(40, 53);
        let net = identity_net(data.input_dim());
        let a = inspection_grids(&net, 0, &data, 4, 6, 77).unwrap();
        let b = inspection_grids(&net, 0, &data, 4, 6, 77).unwrap();
        assert_eq!(a.natural_indices, b.natural_indices);
        assert_eq!(a.random_indices, b.random_indices);
        assert_eq!(a.natural.len(), 24);
    }
}
