//! Per-layer upper Lipschitz bounds and their product over a network.
//!
//! Fully connected layers are bounded by the largest singular value of their
//! weight matrix; strided convolutions by the supremum over a frequency grid
//! of per-frequency matrix norms; pooling, relu, and contrast normalization
//! by closed forms. An empirical probe samples difference quotients to check
//! every reported bound from below.

mod conv;
mod io;

pub use conv::{conv_bound, ConvBound, ConvLayerSpec};
pub use io::load_spectral_spec;

use crate::dataio::CsvTable;
use crate::error::{Error, Result};
use crate::network::{LayerKind, LayerSpec, Network};
use crate::numerics::{largest_singular_value, RngStream};

/// Parameter-free layers with closed-form Lipschitz bounds.
#[derive(Debug, Clone, PartialEq)]
pub enum ContractiveKind {
    MaxPool,
    Relu,
    /// `x / (epsilon + ||x||^2)^gamma`.
    ContrastNorm { epsilon: f64, gamma: f64 },
}

/// Any layer the spectral analysis understands.
#[derive(Debug, Clone)]
pub enum SpectralLayer {
    Fc(LayerSpec),
    Conv(ConvLayerSpec),
    Contractive(ContractiveKind),
}

impl SpectralLayer {
    /// View a trained network as a stack of fully connected spectral layers.
    pub fn from_network(net: &Network) -> Vec<SpectralLayer> {
        net.layers.iter().map(|l| SpectralLayer::Fc(l.clone())).collect()
    }
}

/// Options for [`network_bound`].
#[derive(Debug, Clone)]
pub struct SpectralOptions {
    /// Frequency-grid resolution per axis for convolutional layers.
    pub grid_points: usize,
    /// Tighten sigmoid layers by the derivative bound 1/4. When false, every
    /// affine layer reports the plain operator norm of its weights.
    pub sigmoid_tightened: bool,
    /// Relative tolerance for singular value estimation.
    pub tol: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions { grid_points: 64, sigmoid_tightened: true, tol: 1e-10 }
    }
}

/// One row of the bound report.
#[derive(Debug, Clone)]
pub struct LayerBoundEntry {
    pub name: String,
    pub kind: String,
    pub size: String,
    pub stride: Option<usize>,
    /// Operator norm of the weights, for layers that have weights.
    pub weight_norm: Option<f64>,
    /// Whether `bound` was tightened below `weight_norm` (sigmoid layers).
    pub tightened: bool,
    /// The Lipschitz bound used in the product.
    pub bound: f64,
    /// Arg-max frequency for convolutional bounds.
    pub argmax_freq: Option<(usize, usize)>,
}

/// Per-layer bounds and their ordered product.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    pub entries: Vec<LayerBoundEntry>,
    pub product: f64,
}

impl SpectralReport {
    /// Four-column table: layer, size, stride, upper bound; a final row
    /// carries the product.
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["layer", "size", "stride", "upper_bound"]);
        for e in &self.entries {
            t.push_row([
                e.name.clone(),
                e.size.clone(),
                e.stride.map_or_else(|| "N/A".to_string(), |s| s.to_string()),
                format!("{}", e.bound),
            ]);
        }
        t.push_row(["product".into(), String::new(), String::new(), format!("{}", self.product)]);
        t
    }

    /// Extended table with the dual sigmoid report and arg-max frequencies.
    pub fn to_detail_csv(&self) -> CsvTable {
        let mut t = CsvTable::new([
            "layer",
            "kind",
            "size",
            "stride",
            "weight_norm",
            "tightened",
            "bound",
            "argmax_freq",
        ]);
        for e in &self.entries {
            t.push_row([
                e.name.clone(),
                e.kind.clone(),
                e.size.clone(),
                e.stride.map_or_else(String::new, |s| s.to_string()),
                e.weight_norm.map_or_else(String::new, |w| format!("{w}")),
                e.tightened.to_string(),
                format!("{}", e.bound),
                e.argmax_freq.map_or_else(String::new, |(a, b)| format!("({a};{b})")),
            ]);
        }
        t
    }
}

/// Operator norm of a fully connected layer's weight matrix.
///
/// The subsequent pointwise nonlinearities in scope are contractive, so this
/// bounds the whole layer.
pub fn fc_bound(layer: &LayerSpec, tol: f64) -> Result<f64> {
    largest_singular_value(&layer.weights, tol)
}

/// Closed-form bounds for parameter-free layers.
pub fn contractive_bound(kind: &ContractiveKind) -> Result<f64> {
    match kind {
        ContractiveKind::MaxPool | ContractiveKind::Relu => Ok(1.0),
        ContractiveKind::ContrastNorm { epsilon, gamma } => {
            if !(*epsilon > 0.0) {
                return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
            }
            if !(0.5..=1.0).contains(gamma) {
                return Err(Error::InvalidInput(format!(
                    "gamma must lie in [0.5, 1], got {gamma}"
                )));
            }
            Ok(epsilon.powf(-gamma))
        }
    }
}

/// Bound every layer and multiply, in order.
pub fn network_bound(layers: &[SpectralLayer], opts: &SpectralOptions) -> Result<SpectralReport> {
    if layers.is_empty() {
        return Err(Error::InvalidInput("layer list must be nonempty".into()));
    }
    let mut entries = Vec::with_capacity(layers.len());
    let mut product = 1.0;
    for (k, layer) in layers.iter().enumerate() {
        let entry = match layer {
            SpectralLayer::Fc(fc) => {
                let norm = fc_bound(fc, opts.tol)?;
                let tightened = opts.sigmoid_tightened && fc.kind == LayerKind::Sigmoid;
                let bound = if tightened { norm / 4.0 } else { norm };
                LayerBoundEntry {
                    name: format!("FC {k}"),
                    kind: fc.kind.as_str().into(),
                    size: format!("{}x{}", fc.input_dim(), fc.output_dim()),
                    stride: None,
                    weight_norm: Some(norm),
                    tightened,
                    bound,
                    argmax_freq: None,
                }
            }
            SpectralLayer::Conv(conv) => {
                let grid = opts.grid_points.max(conv.kernel_size.div_ceil(conv.stride));
                let result = conv_bound(conv, grid)?;
                LayerBoundEntry {
                    name: format!("Conv {k}"),
                    kind: "conv".into(),
                    size: format!(
                        "{}x{}x{}x{}",
                        conv.in_features, conv.kernel_size, conv.kernel_size, conv.out_features
                    ),
                    stride: Some(conv.stride),
                    weight_norm: Some(result.bound),
                    tightened: false,
                    bound: result.bound,
                    argmax_freq: Some(result.argmax_freq),
                }
            }
            SpectralLayer::Contractive(kind) => {
                let bound = contractive_bound(kind)?;
                let (name, size) = match kind {
                    ContractiveKind::MaxPool => ("MaxPool".to_string(), String::new()),
                    ContractiveKind::Relu => ("ReLU".to_string(), String::new()),
                    ContractiveKind::ContrastNorm { epsilon, gamma } => {
                        ("ContrastNorm".to_string(), format!("eps={epsilon} gamma={gamma}"))
                    }
                };
                LayerBoundEntry {
                    name: format!("{name} {k}"),
                    kind: name.to_ascii_lowercase(),
                    size,
                    stride: None,
                    weight_norm: None,
                    tightened: false,
                    bound,
                    argmax_freq: None,
                }
            }
        };
        product *= entry.bound;
        entries.push(entry);
    }
    Ok(SpectralReport { entries, product })
}

/// Largest observed `||phi(x) - phi(x+r)|| / ||r||` over random probes.
///
/// Inputs are uniform in the pixel box; probe directions are random with
/// norms in `[1e-4, 1e-1]`. Always a lower witness for the true Lipschitz
/// constant, hence for any sound bound.
pub fn empirical_lipschitz_probe(net: &Network, samples: usize, rng: &mut RngStream) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one probe".into()));
    }
    let dim = net.input_dim();
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let x: Vec<f64> = (0..dim).map(|_| rng.next_f64()).collect();
        let dir = loop {
            let d = rng.gaussian(dim, 1.0)?;
            let n = d.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                break d.iter().map(|v| v / n).collect::<Vec<f64>>();
            }
        };
        let scale = 1e-4 + rng.next_f64() * (1e-1 - 1e-4);
        let moved: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + scale * di).collect();
        let a = net.forward_vec(&x)?;
        let b = net.forward_vec(&moved)?;
        let out_dist: f64 = a
            .output()
            .iter()
            .zip(b.output())
            .map(|(u, v)| (u - v) * (u - v))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(out_dist / scale);
    }
    Ok(worst)
}
