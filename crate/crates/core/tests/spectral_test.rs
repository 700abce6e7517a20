//! Convolution operator-norm oracle equivalence and spectral invariants.

mod common;

use blindspot::network::{LayerKind, LayerSpec};
use blindspot::numerics::{largest_singular_value, Matrix, RngStream};
use blindspot::spectral::{
    conv_bound, empirical_lipschitz_probe, fc_bound, network_bound, ConvLayerSpec, SpectralLayer,
    SpectralOptions,
};
use blindspot::trainer::{train, ArchSpec, TrainConfig};
use common::{materialize_conv_operator, sigma_max_oracle, OracleRng};

fn seeded_conv(seed: u64, c: usize, d: usize, n: usize, stride: usize) -> ConvLayerSpec {
    let mut rng = OracleRng(seed);
    let kernels: Vec<Matrix> = (0..c * d)
        .map(|_| {
            let data: Vec<f64> = (0..n * n).map(|_| rng.next_f64()).collect();
            Matrix::from_vec(n, n, data).unwrap()
        })
        .collect();
    ConvLayerSpec::new(c, d, n, stride, kernels).unwrap()
}

fn oracle_norm(layer: &ConvLayerSpec, side: usize) -> f64 {
    let m = materialize_conv_operator(
        layer.in_features,
        layer.out_features,
        layer.kernel_size,
        layer.stride,
        side,
        &layer.kernels,
    );
    sigma_max_oracle(&m)
}

#[test]
fn conv_bound_matches_materialized_operator_multichannel() {
    let layer = seeded_conv(11, 2, 3, 3, 1);
    let side = 8;
    let bound = conv_bound(&layer, side / layer.stride).unwrap().bound;
    let oracle = oracle_norm(&layer, side);
    assert!((bound - oracle).abs() <= 1e-6 * oracle.max(1.0), "{bound} vs {oracle}");
}

#[test]
fn conv_bound_matches_materialized_operator_strided() {
    let layer = seeded_conv(13, 1, 1, 2, 2);
    let side = 8;
    let bound = conv_bound(&layer, side / layer.stride).unwrap().bound;
    let oracle = oracle_norm(&layer, side);
    assert!((bound - oracle).abs() <= 1e-6 * oracle.max(1.0), "{bound} vs {oracle}");
}

#[test]
fn conv_bound_matches_oracle_across_unstrided_sizes() {
    for side in [4usize, 8, 16] {
        let layer = seeded_conv(17 + side as u64, 1, 2, 3, 1);
        let bound = conv_bound(&layer, side).unwrap().bound;
        let oracle = oracle_norm(&layer, side);
        assert!(
            (bound - oracle).abs() <= 1e-6 * oracle.max(1.0),
            "side {side}: {bound} vs {oracle}"
        );
    }
}

#[test]
fn conv_bound_is_translation_invariant() {
    let layer = seeded_conv(23, 2, 2, 3, 1);
    let side = 8;
    // Circularly shift every kernel inside a larger (side-sized) support.
    let shifted_kernels: Vec<Matrix> = layer
        .kernels
        .iter()
        .map(|k| {
            let mut big = Matrix::zeros(side, side);
            for u in 0..3 {
                for v in 0..3 {
                    big.set((u + 3) % side, (v + 5) % side, k.get(u, v));
                }
            }
            big
        })
        .collect();
    let shifted = ConvLayerSpec::new(2, 2, side, 1, shifted_kernels).unwrap();
    let a = conv_bound(&layer, side).unwrap().bound;
    let b = conv_bound(&shifted, side).unwrap().bound;
    assert!((a - b).abs() < 1e-10, "{a} vs {b}");
}

#[test]
fn conv_bound_scales_linearly_in_the_kernels() {
    let layer = seeded_conv(29, 2, 1, 2, 1);
    let alpha = -3.25f64;
    let scaled_kernels: Vec<Matrix> = layer.kernels.iter().map(|k| k.scale(alpha)).collect();
    let scaled = ConvLayerSpec::new(2, 1, 2, 1, scaled_kernels).unwrap();
    let a = conv_bound(&layer, 8).unwrap().bound;
    let b = conv_bound(&scaled, 8).unwrap().bound;
    assert!((b - alpha.abs() * a).abs() <= 1e-12 * (1.0 + alpha.abs() * a), "{b} vs {}", alpha.abs() * a);
}

#[test]
fn refining_the_grid_never_lowers_the_bound() {
    for stride in [1usize, 2] {
        let layer = seeded_conv(31 + stride as u64, 2, 2, 2, stride);
        let mut prev = f64::NEG_INFINITY;
        for g in [2usize, 4, 8, 16] {
            let b = conv_bound(&layer, g).unwrap().bound;
            assert!(b >= prev - 1e-12, "stride {stride}, grid {g}: {b} < {prev}");
            prev = b;
        }
    }
}

#[test]
fn fc_bound_matches_jacobi_on_a_trained_layer() {
    let data = blindspot::dataio::two_blob_dataset(60, 5);
    let spec = ArchSpec::TwoHidden { h1: 10, h2: 8, lambdas: [1e-5, 1e-5, 1e-6] };
    let cfg = TrainConfig { max_lbfgs_iterations: 60, seed: 9, ..TrainConfig::default() };
    let net = train(&spec, &data, &cfg).unwrap().network;
    for layer in &net.layers {
        let fast = fc_bound(layer, 1e-10).unwrap();
        let oracle = sigma_max_oracle(&layer.weights);
        assert!((fast - oracle).abs() <= 1e-8 * oracle.max(1.0), "{fast} vs {oracle}");
    }
}

#[test]
fn probe_never_exceeds_network_bound_on_trained_models() {
    let data = blindspot::dataio::two_blob_dataset(60, 6);
    for seed in [1u64, 2, 3] {
        let spec = ArchSpec::TwoHidden { h1: 9, h2: 7, lambdas: [1e-5, 1e-5, 1e-6] };
        let cfg = TrainConfig { max_lbfgs_iterations: 60, seed, ..TrainConfig::default() };
        let net = train(&spec, &data, &cfg).unwrap().network;
        let report =
            network_bound(&SpectralLayer::from_network(&net), &SpectralOptions::default()).unwrap();
        let mut rng = RngStream::new(seed ^ 0xff);
        let probe = empirical_lipschitz_probe(&net, 500, &mut rng).unwrap();
        assert!(
            probe <= report.product,
            "seed {seed}: probe {probe} exceeds bound {}",
            report.product
        );
    }
}

#[test]
fn table5_shaped_fixture_renders_declared_sizes() {
    // AlexNet-shaped declarations; values are placeholders since no weights
    // exist for them, only the row layout matters.
    let conv1 = seeded_conv(41, 3, 4, 5, 2);
    let fc = LayerSpec::new(
        LayerKind::Relu,
        Matrix::identity(6),
        vec![0.0; 6],
        0.0,
    )
    .unwrap();
    let report = network_bound(
        &[SpectralLayer::Conv(conv1), SpectralLayer::Fc(fc)],
        &SpectralOptions { grid_points: 8, ..SpectralOptions::default() },
    )
    .unwrap();
    let csv = report.to_csv().render();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "layer,size,stride,upper_bound");
    assert!(lines[1].starts_with("Conv 0,3x5x5x4,2,"), "got {}", lines[1]);
    assert!(lines[2].starts_with("FC 1,6x6,N/A,"), "got {}", lines[2]);
    assert!(lines[3].starts_with("product,,,"), "got {}", lines[3]);
    // Product equals the entry product tightly.
    let prod: f64 = report.entries.iter().map(|e| e.bound).product();
    assert!((report.product - prod).abs() <= 1e-12 * prod.abs().max(1.0));
}

#[test]
fn network_bound_respects_singular_value_tolerance_contract() {
    // Spot-check that fc_bound agrees with the library's own svd at tight tol.
    let mut rng = OracleRng(55);
    let data: Vec<f64> = (0..48).map(|_| rng.next_f64()).collect();
    let w = Matrix::from_vec(6, 8, data).unwrap();
    let layer = LayerSpec::new(LayerKind::Linear, w.clone(), vec![0.0; 6], 0.0).unwrap();
    let a = fc_bound(&layer, 1e-12).unwrap();
    let b = largest_singular_value(&w, 1e-12).unwrap();
    assert_eq!(a, b);
}
