//! Command-line front end: train / attack / transfer / cross-train /
//! inspect / spectral / report over JSON configs, with a manifest for every
//! run.

mod commands;
mod config;
mod manifest;

pub use config::FileConfig;
pub use manifest::RunManifest;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "blindspot", version, about = "Adversarial examples, transfer studies, and spectral bounds for small image classifiers")]
pub struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    /// Desk-scale mode: subsample training to 10k examples and cap attack
    /// sets at 1000 (headline error rates do not apply in this mode).
    #[arg(long, global = true)]
    pub desk_scale: bool,

    /// JSON config file with flat per-command sections; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory holding the four MNIST IDX files (falls back to
    /// $BLINDSPOT_DATA, then ./data).
    #[arg(long)]
    pub data: Option<PathBuf>,

    /// Use the bundled synthetic blob dataset with this many training
    /// examples instead of IDX files.
    #[arg(long)]
    pub synthetic: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model family and write model JSON plus a training log.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Architecture: fc10, fc10(LAMBDA), fcH1-H2-10, ae400-10.
        #[arg(long)]
        spec: Option<String>,
        /// Per-layer weight decay override.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        lambda: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// L-BFGS iteration cap.
        #[arg(long)]
        max_iters: Option<usize>,
        /// Train on a seeded subsample of this size.
        #[arg(long)]
        subsample: Option<usize>,
        /// Train with adversarial pools for this many rounds.
        #[arg(long)]
        pool_rounds: Option<usize>,
    },
    /// Generate adversarial examples against a trained model.
    Attack {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Which split to distort: train or test.
        #[arg(long)]
        split: Option<String>,
        /// Attack at most this many correctly classified examples.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Target policy: second_most_probable, least_probable, cycle_all, or a fixed label.
        #[arg(long)]
        policy: Option<String>,
        /// Also write a PGM grid of original/perturbed pairs.
        #[arg(long)]
        grid: bool,
    },
    /// Cross-model transfer matrix over several trained models.
    Transfer {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, num_args = 1..)]
        models: Vec<PathBuf>,
        #[arg(long)]
        split: Option<String>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Disjoint-halves study: train on P1/P2, attack the test set, measure
    /// transfer with and without amplification.
    CrossTrain {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// First architecture (trained on P1 and, as a twin, on P2).
        #[arg(long)]
        arch_a: Option<String>,
        /// Second architecture (trained on P1).
        #[arg(long)]
        arch_b: Option<String>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Amplify with the literal fixed-L2 formula instead of matching the
        /// distortion stddev.
        #[arg(long)]
        amplify_literal: bool,
    },
    /// Natural-basis vs random-direction activation grids.
    Inspect {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Layer whose activations are inspected (0 = input).
        #[arg(long)]
        layer: Option<usize>,
        #[arg(long)]
        rows: Option<usize>,
        #[arg(long)]
        topk: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-layer Lipschitz bounds and the product bound.
    Spectral {
        /// Trained model JSON to bound (also runs the empirical probe).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Spectral layer-stack JSON (conv layers allowed; no probe).
        #[arg(long)]
        conv_spec: Option<PathBuf>,
        #[arg(long)]
        grid_points: Option<usize>,
        /// Report plain weight norms instead of tightened sigmoid bounds.
        #[arg(long)]
        plain_norms: bool,
        #[arg(long)]
        probe_samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a finished run directory into markdown.
    Report {
        #[arg(long)]
        run: Option<PathBuf>,
    },
}

/// Entry point: returns the process exit code (0 success, 1 validation
/// error, 2 runtime failure).
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version with success exit codes.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_parsed(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

fn run_parsed(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| crate::Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| commands::dispatch(cli))
}
