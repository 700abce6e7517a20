//! The studies: adversarial sets per model, cross-model and
//! cross-training-set transfer matrices with Gaussian-noise control rows,
//! and natural-vs-random direction activation inspection.

mod crosstrain;
mod inspect;

pub use crosstrain::{cross_training_set_study, BaselineRow, CrossTrainConfig, CrossTrainStudy};
pub use inspect::{inspection_grids, random_direction, top_activating, Direction, DirectionKind, InspectionGrids};

use rayon::prelude::*;

use crate::adversary::{
    gaussian_baseline, minimal_perturbation, AdversarialResult, AttackConfig, TargetPolicy,
};
use crate::dataio::{CsvTable, Image, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::network::Network;
use crate::numerics::RngStream;

/// One attacked example inside a set.
#[derive(Debug, Clone)]
pub struct AttackOutcome {
    /// Index into the source dataset.
    pub index: usize,
    pub true_label: usize,
    pub result: AdversarialResult,
}

/// Adversarial examples generated against one model.
#[derive(Debug, Clone)]
pub struct AdversarialSet {
    pub generator_model: String,
    pub source_split: Split,
    pub outcomes: Vec<AttackOutcome>,
    /// Mean RMS distortion over achieved attacks.
    pub average_distortion: f64,
    pub failures: usize,
}

impl AdversarialSet {
    /// Per-example CSV: `index,original_label,target,achieved,distortion,c_final`.
    pub fn to_csv(&self) -> CsvTable {
        let mut t =
            CsvTable::new(["index", "original_label", "target", "achieved", "distortion", "c_final"]);
        for o in &self.outcomes {
            t.push_row([
                o.index.to_string(),
                o.true_label.to_string(),
                o.result.target.to_string(),
                o.result.achieved.to_string(),
                format!("{}", o.result.distortion),
                format!("{}", o.result.c_final),
            ]);
        }
        t
    }

    /// Images interleaved original/perturbed for figure grids (odd columns
    /// originals, even columns distorted counterparts).
    pub fn figure_images(&self, limit: usize) -> Vec<Image> {
        let mut out = Vec::new();
        for o in self.outcomes.iter().take(limit) {
            out.push(o.result.original.clone());
            out.push(o.result.perturbed.clone());
        }
        out
    }
}

/// Attack every correctly classified input (up to `limit`) and collect the
/// results; retries all wrong labels in descending-probability order when the
/// policy is `CycleAll` and the first target fails.
///
/// Fails with a consistency error if more than 1% of attempts never achieve
/// any target, since downstream error rates would be meaningless.
pub fn build_adversarial_set(
    net: &Network,
    data: &LabeledDataset,
    source_split: Split,
    cfg: &AttackConfig,
    limit: Option<usize>,
) -> Result<AdversarialSet> {
    cfg.validate()?;
    let cap = limit.unwrap_or(data.len());

    // Attack only inputs the generator classifies correctly; a fixed target
    // equal to the true label would be the trivial zero perturbation.
    let mut chosen = Vec::with_capacity(cap);
    for (i, (im, &y)) in data.images.iter().zip(&data.labels).enumerate() {
        if chosen.len() == cap {
            break;
        }
        if matches!(cfg.target_policy, TargetPolicy::Fixed(l) if l == y) {
            continue;
        }
        if net.predict(im)? == y {
            chosen.push((i, im, y));
        }
    }
    if chosen.is_empty() {
        return Err(Error::InvalidInput("no correctly classified examples to attack".into()));
    }

    let outcomes: Vec<Result<AttackOutcome>> = chosen
        .par_iter()
        .map(|&(index, im, y)| {
            let result = attack_with_retries(net, im, y, cfg)?;
            Ok(AttackOutcome { index, true_label: y, result })
        })
        .collect();
    let outcomes: Vec<AttackOutcome> = outcomes.into_iter().collect::<Result<_>>()?;

    let failures = outcomes.iter().filter(|o| !o.result.achieved).count();
    let achieved: Vec<&AttackOutcome> = outcomes.iter().filter(|o| o.result.achieved).collect();
    #[cfg(debug_assertions)]
    for o in &achieved {
        debug_assert_eq!(net.predict(&o.result.perturbed)?, o.result.target);
        debug_assert!(o.result.perturbed.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
    }
    let average_distortion = if achieved.is_empty() {
        0.0
    } else {
        achieved.iter().map(|o| o.result.distortion).sum::<f64>() / achieved.len() as f64
    };
    if failures as f64 > 0.01 * outcomes.len() as f64 {
        return Err(Error::Consistency(format!(
            "adversarial set for {} invalid: {failures}/{} attacks failed",
            net.name,
            outcomes.len()
        )));
    }
    Ok(AdversarialSet {
        generator_model: net.name.clone(),
        source_split,
        outcomes,
        average_distortion,
        failures,
    })
}

fn attack_with_retries(
    net: &Network,
    im: &Image,
    true_label: usize,
    cfg: &AttackConfig,
) -> Result<AdversarialResult> {
    let probs = net.forward(im)?.output().to_vec();
    let pred = crate::network::argmax(&probs);
    let candidates: Vec<usize> = match cfg.target_policy {
        TargetPolicy::Fixed(l) => vec![l],
        TargetPolicy::LeastProbable => {
            let mut order = wrong_labels_by_probability(&probs, pred);
            order.reverse();
            order.truncate(1);
            order
        }
        TargetPolicy::SecondMostProbable => {
            let mut order = wrong_labels_by_probability(&probs, pred);
            order.truncate(1);
            order
        }
        TargetPolicy::CycleAll => wrong_labels_by_probability(&probs, pred),
    };

    let mut last = None;
    for &target in &candidates {
        if target == true_label {
            continue;
        }
        let result = minimal_perturbation(net, im, target, cfg)?;
        if result.achieved {
            return Ok(result);
        }
        last = Some(result);
    }
    last.ok_or_else(|| Error::InvalidInput("no admissible target label".into()))
}

fn wrong_labels_by_probability(probs: &[f64], pred: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..probs.len()).filter(|&i| i != pred).collect();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap_or(std::cmp::Ordering::Equal));
    order
}

/// Generator-model x victim-model error rates, plus noise baselines.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// `rates[i][j]`: error of victim `j` on row `i`'s distorted images.
    pub rates: Vec<Vec<f64>>,
    /// Average distortion per row (None for noise rows at a fixed stddev).
    pub row_distortion: Vec<f64>,
}

impl TransferMatrix {
    pub fn to_csv(&self) -> CsvTable {
        let mut header = vec!["generator".to_string()];
        header.extend(self.col_labels.iter().cloned());
        header.push("avg_distortion".to_string());
        let mut t = CsvTable::new(header);
        for ((label, rates), dist) in
            self.row_labels.iter().zip(&self.rates).zip(&self.row_distortion)
        {
            let mut row = vec![label.clone()];
            row.extend(rates.iter().map(|r| format!("{r}")));
            row.push(format!("{dist}"));
            t.push_row(row);
        }
        t
    }

    /// Entry by row/column label, for tests and report rendering.
    pub fn rate(&self, row: &str, col: &str) -> Option<f64> {
        let i = self.row_labels.iter().position(|l| l == row)?;
        let j = self.col_labels.iter().position(|l| l == col)?;
        Some(self.rates[i][j])
    }
}

/// Error rates induced on every victim by every adversarial set, with
/// Gaussian-noise rows at the given stddevs appended (noise applied to the
/// first set's source originals).
pub fn cross_error_matrix(
    models: &[&Network],
    sets: &[&AdversarialSet],
    noise_stddevs: &[f64],
    noise_seed: u64,
) -> Result<TransferMatrix> {
    if models.is_empty() || sets.is_empty() {
        return Err(Error::InvalidInput("need at least one model and one set".into()));
    }
    let dim = models[0].input_dim();
    if models.iter().any(|m| m.input_dim() != dim) {
        return Err(Error::InvalidInput("victim models disagree on input dimension".into()));
    }

    let mut row_labels = Vec::new();
    let mut rates = Vec::new();
    let mut row_distortion = Vec::new();

    for set in sets {
        let mut row = Vec::with_capacity(models.len());
        for model in models {
            let mut wrong = 0usize;
            let mut total = 0usize;
            for o in set.outcomes.iter().filter(|o| o.result.achieved) {
                if o.result.perturbed.dim() != dim {
                    return Err(Error::InvalidInput("set and victims disagree on dimension".into()));
                }
                total += 1;
                if model.predict(&o.result.perturbed)? != o.true_label {
                    wrong += 1;
                }
            }
            row.push(wrong as f64 / total.max(1) as f64);
        }
        row_labels.push(set.generator_model.clone());
        rates.push(row);
        row_distortion.push(set.average_distortion);
    }

    // Noise control rows over the same source images as the first set.
    let source: Vec<(&Image, usize)> = sets[0]
        .outcomes
        .iter()
        .map(|o| (&o.result.original, o.true_label))
        .collect();
    for (si, &stddev) in noise_stddevs.iter().enumerate() {
        let root = RngStream::new(noise_seed).fork(si as u64);
        let noisy: Vec<Image> = source
            .iter()
            .enumerate()
            .map(|(i, (im, _))| gaussian_baseline(im, stddev, &mut root.fork(i as u64)))
            .collect::<Result<_>>()?;
        let mut row = Vec::with_capacity(models.len());
        for model in models {
            let mut wrong = 0usize;
            for (noisy_im, (_, y)) in noisy.iter().zip(&source) {
                if model.predict(noisy_im)? != *y {
                    wrong += 1;
                }
            }
            row.push(wrong as f64 / source.len().max(1) as f64);
        }
        row_labels.push(format!("gaussian_noise_stddev_{stddev}"));
        rates.push(row);
        row_distortion.push(stddev);
    }

    Ok(TransferMatrix {
        row_labels,
        col_labels: models.iter().map(|m| m.name.clone()).collect(),
        rates,
        row_distortion,
    })
}
