//! Cross-training-set generalization: disjoint halves, three models, and the
//! amplified/unamplified transfer matrices over test-set adversarial sets.

use crate::adversary::{amplify, AttackConfig};
use crate::dataio::{split_half, CsvTable, LabeledDataset, Split};
use crate::error::Result;
use crate::experiments::{build_adversarial_set, cross_error_matrix, AdversarialSet, TransferMatrix};
use crate::network::Network;
use crate::trainer::{train, ArchSpec, TrainConfig};

/// Study parameters. Architectures default to the two-hidden-layer families
/// the experiment is about; the third model reuses `arch_a` on the other half.
#[derive(Debug, Clone)]
pub struct CrossTrainConfig {
    pub seed: u64,
    pub train: TrainConfig,
    pub attack: AttackConfig,
    /// Per-set attack budget (None = every test example).
    pub limit: Option<usize>,
    pub arch_a: ArchSpec,
    pub arch_b: ArchSpec,
    /// Stddev the amplified block is scaled to.
    pub amplify_to: f64,
    /// Gaussian control stddev for the unamplified block.
    pub noise_unamplified: f64,
    /// Gaussian control stddev for the amplified block.
    pub noise_amplified: f64,
    /// Use the literal fixed-L2 amplification formula instead of the
    /// stddev-matched default.
    pub amplify_literal: bool,
}

impl Default for CrossTrainConfig {
    fn default() -> Self {
        CrossTrainConfig {
            seed: 0,
            train: TrainConfig::default(),
            attack: AttackConfig::default(),
            limit: Some(1000),
            arch_a: ArchSpec::TwoHidden { h1: 100, h2: 100, lambdas: [1e-5, 1e-5, 1e-6] },
            arch_b: ArchSpec::TwoHidden { h1: 123, h2: 456, lambdas: [1e-5, 1e-5, 1e-6] },
            amplify_to: 0.1,
            noise_unamplified: 0.06,
            noise_amplified: 0.1,
            amplify_literal: false,
        }
    }
}

/// Table-3-shaped baseline facts for one model.
#[derive(Debug, Clone)]
pub struct BaselineRow {
    pub model: String,
    pub error_p1: f64,
    pub error_p2: f64,
    pub error_test: f64,
    pub avg_distortion: f64,
}

/// Everything the study produces.
#[derive(Debug, Clone)]
pub struct CrossTrainStudy {
    pub baselines: Vec<BaselineRow>,
    pub unamplified: TransferMatrix,
    pub amplified: TransferMatrix,
}

impl CrossTrainStudy {
    pub fn baseline_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(["model", "error_p1", "error_p2", "error_test", "avg_distortion"]);
        for b in &self.baselines {
            t.push_row([
                b.model.clone(),
                format!("{}", b.error_p1),
                format!("{}", b.error_p2),
                format!("{}", b.error_test),
                format!("{}", b.avg_distortion),
            ]);
        }
        t
    }
}

/// Split the training data in half, train `arch_a` and `arch_b` on P1 and
/// `arch_a` again on P2, attack the test set per model, and measure transfer
/// with and without amplification.
pub fn cross_training_set_study(
    train_data: &LabeledDataset,
    test_data: &LabeledDataset,
    cfg: &CrossTrainConfig,
) -> Result<CrossTrainStudy> {
    let (p1, p2) = split_half(train_data, cfg.seed)?;

    let mut name_a = cfg.arch_a.family_name();
    name_a.push_str("-P1");
    let mut name_b = cfg.arch_b.family_name();
    name_b.push_str("-P1");
    let mut name_a2 = cfg.arch_a.family_name();
    name_a2.push_str("'-P2");

    let tcfg = |idx: u64| TrainConfig { seed: cfg.train.seed ^ idx, ..cfg.train.clone() };
    let mut model_a = train(&cfg.arch_a, &p1, &tcfg(0))?;
    let mut model_b = train(&cfg.arch_b, &p1, &tcfg(1))?;
    let mut model_a2 = train(&cfg.arch_a, &p2, &tcfg(2))?;
    model_a.network.name = name_a;
    model_b.network.name = name_b;
    model_a2.network.name = name_a2;

    let models = [&model_a, &model_b, &model_a2];
    let mut sets = Vec::with_capacity(models.len());
    for m in &models {
        sets.push(build_adversarial_set(&m.network, test_data, Split::Test, &cfg.attack, cfg.limit)?);
    }

    let mut baselines = Vec::with_capacity(models.len());
    for (m, set) in models.iter().zip(&sets) {
        baselines.push(BaselineRow {
            model: m.network.name.clone(),
            error_p1: m.network.error_rate(&p1)?,
            error_p2: m.network.error_rate(&p2)?,
            error_test: m.network.error_rate(test_data)?,
            avg_distortion: set.average_distortion,
        });
    }

    let nets: Vec<&Network> = models.iter().map(|m| &m.network).collect();
    let set_refs: Vec<&AdversarialSet> = sets.iter().collect();
    let unamplified =
        cross_error_matrix(&nets, &set_refs, &[cfg.noise_unamplified], cfg.seed ^ 0x6e6f)?;

    let amplified_sets: Vec<AdversarialSet> = sets
        .iter()
        .map(|s| amplify_set(s, cfg.amplify_to, cfg.amplify_literal))
        .collect::<Result<_>>()?;
    let amp_refs: Vec<&AdversarialSet> = amplified_sets.iter().collect();
    let amplified =
        cross_error_matrix(&nets, &amp_refs, &[cfg.noise_amplified], cfg.seed ^ 0x616d)?;

    Ok(CrossTrainStudy { baselines, unamplified, amplified })
}

/// Rescale every achieved perturbation in a set to a fixed distortion.
fn amplify_set(set: &AdversarialSet, target_stddev: f64, literal: bool) -> Result<AdversarialSet> {
    let mut out = set.clone();
    out.generator_model = format!("{}-amplified-{target_stddev}", set.generator_model);
    for o in &mut out.outcomes {
        if !o.result.achieved {
            continue;
        }
        let amplified = amplify(&o.result.original, &o.result.perturbed, target_stddev, literal)?;
        o.result.distortion = crate::adversary::distortion(&o.result.original, &amplified)?;
        o.result.r = amplified
            .pixels()
            .iter()
            .zip(o.result.original.pixels())
            .map(|(a, b)| a - b)
            .collect();
        o.result.perturbed = amplified;
    }
    let achieved: Vec<f64> =
        out.outcomes.iter().filter(|o| o.result.achieved).map(|o| o.result.distortion).collect();
    out.average_distortion = if achieved.is_empty() {
        0.0
    } else {
        achieved.iter().sum::<f64>() / achieved.len() as f64
    };
    Ok(out)
}
