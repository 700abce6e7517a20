//! Adversarial-pool training: alternate between fitting the network on the
//! original data mixed with pooled adversarial examples and regenerating a
//! fraction of each pool against the current model.
//!
//! With `per_layer` set, one pool is kept per layer input (layer 0 is pixel
//! space): pool items at layer `k` are perturbed activation vectors labeled
//! with their source's true class, and training gradients for them flow only
//! into layers `k` and above. Sigmoid activation spaces and pixel space are
//! box-constrained to `[0, 1]`; relu and linear spaces are unconstrained.

use crate::adversary::{minimal_perturbation_at_layer, AttackConfig, Bounds, TargetPolicy};
use crate::dataio::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::{argmax, LayerKind, Network};
use crate::numerics::RngStream;
use crate::trainer::{fit_items, train, ArchSpec, TrainConfig, TrainedModel};

/// Pool shape and schedule.
#[derive(Debug, Clone)]
pub struct AdvPoolConfig {
    pub pool_capacity: usize,
    /// Fraction of each pool regenerated per round, in (0, 1].
    pub refresh_fraction: f64,
    /// Pool examples mixed in per round, as a fraction of the original set.
    pub mix_ratio: f64,
    pub rounds: usize,
    pub per_layer: bool,
}

impl Default for AdvPoolConfig {
    fn default() -> Self {
        AdvPoolConfig {
            pool_capacity: 200,
            refresh_fraction: 0.5,
            mix_ratio: 0.3,
            rounds: 4,
            per_layer: true,
        }
    }
}

impl AdvPoolConfig {
    fn validate(&self) -> Result<()> {
        if self.pool_capacity == 0 {
            return Err(Error::InvalidInput("pool_capacity must be at least 1".into()));
        }
        if !(self.refresh_fraction > 0.0 && self.refresh_fraction <= 1.0) {
            return Err(Error::InvalidInput("refresh_fraction must lie in (0, 1]".into()));
        }
        if !(self.mix_ratio > 0.0 && self.mix_ratio < 1.0) {
            return Err(Error::InvalidInput("mix_ratio must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct PoolItem {
    start_layer: usize,
    vector: Vec<f64>,
    label: usize,
}

/// Train with continuously refreshed adversarial pools.
///
/// `rounds = 0` degenerates to a plain [`train`] call with the same seed.
/// Failed attacks during a refresh are skipped and logged, never fatal.
pub fn adversarial_pool_train(
    spec: &ArchSpec,
    data: &LabeledDataset,
    attack_cfg: &AttackConfig,
    pool_cfg: &AdvPoolConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainedModel> {
    pool_cfg.validate()?;
    attack_cfg.validate()?;

    let mut model = train(spec, data, train_cfg)?;
    if pool_cfg.rounds == 0 {
        return Ok(model);
    }

    let owned;
    let data = match train_cfg.subsample {
        Some(n) if n < data.len() => {
            owned = data.subsample(n, train_cfg.seed);
            &owned
        }
        _ => data,
    };

    let pool_layers: Vec<usize> = if pool_cfg.per_layer {
        (0..model.network.layers.len()).collect()
    } else {
        vec![0]
    };
    let mut pools: Vec<Vec<PoolItem>> = vec![Vec::new(); pool_layers.len()];
    let rng_root = RngStream::new(train_cfg.seed ^ 0x706f_6f6c);

    let mut trace = model.trace.clone();
    for round in 0..pool_cfg.rounds {
        let mut rng = rng_root.fork(round as u64);
        for (slot, &layer) in pool_layers.iter().enumerate() {
            refresh_pool(
                &mut pools[slot],
                &model.network,
                layer,
                data,
                attack_cfg,
                pool_cfg,
                &mut rng,
            )?;
        }

        // Assemble originals plus a seeded sample of pooled items.
        let mut items: Vec<(usize, &[f64], usize)> = data
            .images
            .iter()
            .zip(&data.labels)
            .map(|(im, &y)| (0usize, im.pixels(), y))
            .collect();
        let flat: Vec<&PoolItem> = pools.iter().flatten().collect();
        let want = ((pool_cfg.mix_ratio * data.len() as f64).round() as usize).max(1);
        let mut order: Vec<usize> = (0..flat.len()).collect();
        rng.shuffle(&mut order);
        for &i in order.iter().take(want.min(flat.len())) {
            let item = flat[i];
            items.push((item.start_layer, item.vector.as_slice(), item.label));
        }

        let outcome = fit_items(&mut model.network, &items, &train_cfg.lbfgs())?;
        let offset = trace.last().map_or(0, |r| r.iteration + 1);
        trace.extend(outcome.trace.iter().map(|r| crate::trainer::IterationRecord {
            iteration: r.iteration + offset,
            ..*r
        }));
    }

    model.train_error = model.network.error_rate(data)?;
    model.network.meta.train_error = Some(model.train_error);
    model.network.meta.note = Some(format!(
        "adversarial pool training: {} rounds, {} pools",
        pool_cfg.rounds,
        pools.len()
    ));
    model.trace = trace;
    Ok(model)
}

/// Replace `refresh_fraction` of the pool's capacity with fresh adversarial
/// examples against `net`. Sources are correctly classified examples, so
/// every new item is misclassified by the pre-refresh model.
fn refresh_pool(
    pool: &mut Vec<PoolItem>,
    net: &Network,
    layer: usize,
    data: &LabeledDataset,
    attack_cfg: &AttackConfig,
    pool_cfg: &AdvPoolConfig,
    rng: &mut RngStream,
) -> Result<()> {
    let want = ((pool_cfg.refresh_fraction * pool_cfg.pool_capacity as f64).ceil() as usize).max(1);
    let bounds = match layer {
        0 => Bounds::Unit,
        k => match net.layers[k - 1].kind {
            LayerKind::Sigmoid => Bounds::Unit,
            _ => Bounds::Free,
        },
    };

    let mut fresh = Vec::with_capacity(want);
    let mut guard = 0usize;
    while fresh.len() < want && guard < want * 20 {
        guard += 1;
        let idx = rng.next_below(data.len() as u64) as usize;
        let x = &data.images[idx];
        let y = data.labels[idx];
        let activation: Vec<f64> = if layer == 0 {
            x.pixels().to_vec()
        } else {
            net.forward(x)?.layer(layer - 1).to_vec()
        };
        let trace = net.forward_from(layer, &activation)?;
        if argmax(trace.output()) != y {
            continue;
        }
        let target = pick_target(trace.output(), attack_cfg.target_policy, y);
        match minimal_perturbation_at_layer(net, layer, &activation, target, attack_cfg, bounds) {
            Ok(attack) if attack.achieved => {
                fresh.push(PoolItem { start_layer: layer, vector: attack.perturbed, label: y });
            }
            Ok(_) => {
                eprintln!("pool refresh: attack on example {idx} (layer {layer}) not achieved; skipped");
            }
            Err(e) => {
                eprintln!("pool refresh: attack on example {idx} (layer {layer}) failed: {e}; skipped");
            }
        }
    }

    // Evict oldest entries once capacity is reached.
    for item in fresh {
        if pool.len() >= pool_cfg.pool_capacity {
            pool.remove(0);
        }
        pool.push(item);
    }
    Ok(())
}

fn pick_target(probs: &[f64], policy: TargetPolicy, true_label: usize) -> usize {
    let pred = argmax(probs);
    match policy {
        TargetPolicy::Fixed(l) => l,
        TargetPolicy::LeastProbable => {
            let mut best = usize::MAX;
            let mut best_p = f64::INFINITY;
            for (i, &p) in probs.iter().enumerate() {
                if i != true_label && p < best_p {
                    best_p = p;
                    best = i;
                }
            }
            best
        }
        TargetPolicy::SecondMostProbable | TargetPolicy::CycleAll => {
            let mut best = usize::MAX;
            let mut best_p = f64::NEG_INFINITY;
            for (i, &p) in probs.iter().enumerate() {
                if i != pred && p > best_p {
                    best_p = p;
                    best = i;
                }
            }
            best
        }
    }
}
