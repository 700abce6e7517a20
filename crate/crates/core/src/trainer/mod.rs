//! Training: the benchmark model families fitted with full-batch L-BFGS,
//! sparse autoencoder pretraining, and the adversarial-pool loop.

mod autoencoder;
mod lbfgs;
mod pool;

pub use autoencoder::{pretrain_autoencoder, SparsityConfig};
pub use lbfgs::{minimize, IterationRecord, LbfgsConfig, LbfgsOutcome};
pub use pool::{adversarial_pool_train, AdvPoolConfig};

use crate::dataio::{CsvTable, LabeledDataset};
use crate::error::{Error, Result};
use crate::network::{LayerKind, LayerSpec, Network};
use crate::numerics::RngStream;

/// Model families from the experiment zoo.
#[derive(Debug, Clone, PartialEq)]
pub enum ArchSpec {
    /// `FC10(lambda)`: a linear softmax classifier on the pixels.
    Softmax { lambda: f64 },
    /// `FC-H1-H2-10`: two sigmoid hidden layers and a softmax classifier.
    TwoHidden { h1: usize, h2: usize, lambdas: [f64; 3] },
    /// `AE400-10`: frozen pretrained sigmoid encoder plus a softmax classifier.
    Autoencoder { hidden: usize, lambda: f64, sparsity: SparsityConfig },
}

impl ArchSpec {
    /// Parse names like `fc10`, `fc10(0.01)`, `fc100-100-10`, `ae400-10`.
    ///
    /// The trailing class count in hyphenated names is a family label; the
    /// actual output dimension always comes from the dataset.
    pub fn parse(name: &str) -> Result<ArchSpec> {
        let s = name.trim().to_ascii_lowercase();
        if let Some(rest) = s.strip_prefix("ae") {
            let dims = parse_dims(rest)?;
            if dims.is_empty() {
                return Err(Error::Config(format!("cannot parse architecture \"{name}\"")));
            }
            return Ok(ArchSpec::Autoencoder {
                hidden: dims[0],
                lambda: 1e-6,
                sparsity: SparsityConfig::default(),
            });
        }
        if let Some(rest) = s.strip_prefix("fc") {
            if let Some(lambda_txt) = rest.strip_prefix("10(").and_then(|r| r.strip_suffix(')')) {
                let lambda: f64 = lambda_txt
                    .parse()
                    .map_err(|_| Error::Config(format!("bad lambda in \"{name}\"")))?;
                return Ok(ArchSpec::Softmax { lambda });
            }
            let dims = parse_dims(rest)?;
            return match dims.len() {
                1 => Ok(ArchSpec::Softmax { lambda: 1e-4 }),
                3 => Ok(ArchSpec::TwoHidden { h1: dims[0], h2: dims[1], lambdas: [1e-5, 1e-5, 1e-6] }),
                _ => Err(Error::Config(format!("cannot parse architecture \"{name}\""))),
            };
        }
        Err(Error::Config(format!("unknown architecture family \"{name}\"")))
    }

    pub fn family_name(&self) -> String {
        match self {
            ArchSpec::Softmax { lambda } => format!("fc10({lambda})"),
            ArchSpec::TwoHidden { h1, h2, .. } => format!("fc{h1}-{h2}-10"),
            ArchSpec::Autoencoder { hidden, .. } => format!("ae{hidden}-10"),
        }
    }

    /// Replace per-layer weight decay coefficients.
    pub fn with_lambdas(mut self, schedule: &[f64]) -> Result<ArchSpec> {
        match &mut self {
            ArchSpec::Softmax { lambda } => {
                if schedule.len() != 1 {
                    return Err(Error::Config("softmax family takes one lambda".into()));
                }
                *lambda = schedule[0];
            }
            ArchSpec::TwoHidden { lambdas, .. } => {
                if schedule.len() != 3 {
                    return Err(Error::Config("two-hidden family takes three lambdas".into()));
                }
                lambdas.copy_from_slice(schedule);
            }
            ArchSpec::Autoencoder { lambda, .. } => {
                if schedule.len() != 1 {
                    return Err(Error::Config("autoencoder family takes one lambda".into()));
                }
                *lambda = schedule[0];
            }
        }
        Ok(self)
    }
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    s.split('-')
        .map(|p| p.parse::<usize>().map_err(|_| Error::Config(format!("bad dimension \"{p}\""))))
        .collect()
}

/// Batch L-BFGS settings plus reproducibility seed.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub max_lbfgs_iterations: usize,
    pub memory_pairs: usize,
    pub grad_tol: f64,
    /// Per-layer weight decay override; replaces the family defaults.
    pub lambda_schedule: Option<Vec<f64>>,
    pub seed: u64,
    /// Desk-scale switch: train on a seeded subsample of this size.
    pub subsample: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_lbfgs_iterations: 2000,
            memory_pairs: 10,
            grad_tol: 1e-5,
            lambda_schedule: None,
            seed: 0,
            subsample: None,
        }
    }
}

impl TrainConfig {
    fn lbfgs(&self) -> LbfgsConfig {
        LbfgsConfig {
            memory_pairs: self.memory_pairs,
            max_iterations: self.max_lbfgs_iterations,
            grad_tol: self.grad_tol,
            ..LbfgsConfig::default()
        }
    }
}

/// A trained network plus its optimization log.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub network: Network,
    pub trace: Vec<IterationRecord>,
    pub train_error: f64,
}

impl TrainedModel {
    /// Training log as `iteration,loss,grad_norm`.
    pub fn log_table(&self) -> CsvTable {
        let mut t = CsvTable::new(["iteration", "loss", "grad_norm"]);
        for r in &self.trace {
            t.push_row([r.iteration.to_string(), format!("{}", r.loss), format!("{}", r.grad_norm)]);
        }
        t
    }
}

/// Fresh, untrained network for a family; weights seeded per layer index.
pub fn build_network(
    spec: &ArchSpec,
    input_dim: usize,
    classes: usize,
    seed: u64,
) -> Result<Network> {
    let root = RngStream::new(seed);
    let layers = match spec {
        ArchSpec::Softmax { lambda } => vec![LayerSpec::init(
            LayerKind::Softmax,
            input_dim,
            classes,
            *lambda,
            &mut root.fork(0),
        )],
        ArchSpec::TwoHidden { h1, h2, lambdas } => vec![
            LayerSpec::init(LayerKind::Sigmoid, input_dim, *h1, lambdas[0], &mut root.fork(0)),
            LayerSpec::init(LayerKind::Sigmoid, *h1, *h2, lambdas[1], &mut root.fork(1)),
            LayerSpec::init(LayerKind::Softmax, *h2, classes, lambdas[2], &mut root.fork(2)),
        ],
        ArchSpec::Autoencoder { .. } => {
            return Err(Error::InvalidInput(
                "autoencoder networks are assembled by train(), not build_network()".into(),
            ))
        }
    };
    Network::new(spec.family_name(), layers)
}

/// Train a family on `data` until the gradient tolerance or iteration cap.
///
/// Deterministic given the seed. For the autoencoder family the first layer
/// is pretrained on the same data, frozen, and only the classifier trains.
pub fn train(spec: &ArchSpec, data: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    if data.is_empty() {
        return Err(Error::InvalidInput("training data must be nonempty".into()));
    }
    let spec = match &cfg.lambda_schedule {
        Some(schedule) => &spec.clone().with_lambdas(schedule)?,
        None => spec,
    };
    let owned;
    let data = match cfg.subsample {
        Some(n) if n < data.len() => {
            owned = data.subsample(n, cfg.seed);
            &owned
        }
        _ => data,
    };

    let mut net = match spec {
        ArchSpec::Autoencoder { hidden, lambda, sparsity } => {
            let (encoder, _) = pretrain_autoencoder(data, *hidden, *lambda, sparsity, cfg)?;
            let classifier = LayerSpec::init(
                LayerKind::Softmax,
                *hidden,
                data.num_classes,
                *lambda,
                &mut RngStream::new(cfg.seed).fork(1),
            );
            let mut n = Network::new(spec.family_name(), vec![encoder, classifier])?;
            n.meta.note = Some("frozen pretrained encoder".into());
            n
        }
        _ => build_network(spec, data.input_dim(), data.num_classes, cfg.seed)?,
    };

    let outcome = fit(&mut net, data, &cfg.lbfgs())?;
    let train_error = net.error_rate(data)?;
    net.meta.seed = Some(cfg.seed);
    net.meta.lbfgs_iterations = Some(outcome.iterations);
    net.meta.train_error = Some(train_error);
    Ok(TrainedModel { network: net, trace: outcome.trace, train_error })
}

/// Run L-BFGS on an existing network's unfrozen parameters over the full
/// batch. Frozen layers are untouched, bit for bit.
pub fn fit(
    net: &mut Network,
    data: &LabeledDataset,
    cfg: &LbfgsConfig,
) -> Result<LbfgsOutcome> {
    let items: Vec<(usize, &[f64], usize)> = data
        .images
        .iter()
        .zip(&data.labels)
        .map(|(im, &y)| (0usize, im.pixels(), y))
        .collect();
    fit_items(net, &items, cfg)
}

/// Same as [`fit`] but over pre-assembled mixed-entry items.
pub(crate) fn fit_items(
    net: &mut Network,
    items: &[(usize, &[f64], usize)],
    cfg: &LbfgsConfig,
) -> Result<LbfgsOutcome> {
    let x0 = net.flatten_params();
    let mut scratch = net.clone();
    let objective = |params: &[f64]| -> Result<(f64, Vec<f64>)> {
        scratch.set_params(params)?;
        let (loss, grads) = scratch.loss_and_gradient_mixed(items)?;
        Ok((loss, grads.flatten(&scratch)))
    };
    let outcome = minimize(objective, x0, cfg, None)?;
    net.set_params(&outcome.x)?;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::two_blob_dataset;

    #[test]
    fn parses_benchmark_family_names() {
        assert_eq!(ArchSpec::parse("fc10").unwrap(), ArchSpec::Softmax { lambda: 1e-4 });
        assert_eq!(ArchSpec::parse("FC10(0.01)").unwrap(), ArchSpec::Softmax { lambda: 0.01 });
        assert_eq!(
            ArchSpec::parse("fc100-100-10").unwrap(),
            ArchSpec::TwoHidden { h1: 100, h2: 100, lambdas: [1e-5, 1e-5, 1e-6] }
        );
        assert!(matches!(
            ArchSpec::parse("ae400-10").unwrap(),
            ArchSpec::Autoencoder { hidden: 400, .. }
        ));
        assert!(ArchSpec::parse("vgg16").is_err());
        assert!(ArchSpec::parse("fc100-100").is_err());
    }

    #[test]
    fn toy_set_is_interpolated() {
        let data = two_blob_dataset(10, 3);
        let cfg = TrainConfig { max_lbfgs_iterations: 300, seed: 1, ..TrainConfig::default() };
        for spec in [
            ArchSpec::Softmax { lambda: 1e-6 },
            ArchSpec::TwoHidden { h1: 12, h2: 8, lambdas: [0.0, 0.0, 0.0] },
        ] {
            let model = train(&spec, &data, &cfg).unwrap();
            assert_eq!(
                model.train_error,
                0.0,
                "10 blob images should interpolate under {}",
                spec.family_name()
            );
        }
    }

    #[test]
    fn training_is_bit_reproducible() {
        let data = two_blob_dataset(40, 9);
        let cfg = TrainConfig { max_lbfgs_iterations: 60, seed: 5, ..TrainConfig::default() };
        let spec = ArchSpec::Softmax { lambda: 1e-4 };
        let a = train(&spec, &data, &cfg).unwrap();
        let b = train(&spec, &data, &cfg).unwrap();
        for (la, lb) in a.network.layers.iter().zip(&b.network.layers) {
            for (u, v) in la.weights.data().iter().zip(lb.weights.data()) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn lambda_schedule_overrides_family_defaults() {
        let data = two_blob_dataset(20, 3);
        let spec = ArchSpec::Softmax { lambda: 1e-4 };
        let cfg = TrainConfig {
            max_lbfgs_iterations: 10,
            seed: 1,
            lambda_schedule: Some(vec![0.5]),
            ..TrainConfig::default()
        };
        let model = train(&spec, &data, &cfg).unwrap();
        assert_eq!(model.network.layers[0].lambda, 0.5);
        assert!(cfg.lambda_schedule.is_some());
    }

    #[test]
    fn accepted_steps_never_increase_loss() {
        let data = two_blob_dataset(60, 2);
        let cfg = TrainConfig { max_lbfgs_iterations: 80, seed: 2, ..TrainConfig::default() };
        let spec = ArchSpec::TwoHidden { h1: 10, h2: 6, lambdas: [1e-5, 1e-5, 1e-6] };
        let model = train(&spec, &data, &cfg).unwrap();
        for pair in model.trace.windows(2) {
            assert!(pair[1].loss <= pair[0].loss, "{pair:?}");
        }
    }
}
