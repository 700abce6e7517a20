//! Command implementations.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::adversary::{AttackConfig, TargetPolicy};
use crate::cli::config::{pick, require, FileConfig};
use crate::cli::manifest::{hash_file, RunManifest};
use crate::cli::{Cli, Command, DataArgs};
use crate::dataio::{load_idx, load_model, save_model, two_blob_dataset, write_pgm_grid, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::experiments::{
    build_adversarial_set, cross_error_matrix, cross_training_set_study, inspection_grids,
    AdversarialSet, CrossTrainConfig,
};
use crate::numerics::RngStream;
use crate::spectral::{
    empirical_lipschitz_probe, load_spectral_spec, network_bound, SpectralLayer, SpectralOptions,
};
use crate::trainer::{adversarial_pool_train, train, AdvPoolConfig, ArchSpec, TrainConfig};

/// Fixed seed for the synthetic fallback dataset, so every command that says
/// `--synthetic N` sees the same data regardless of its run seed.
const SYNTHETIC_DATA_SEED: u64 = 0xB10B;

const IDX_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

pub fn dispatch(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let desk = cli.desk_scale;
    match cli.command {
        Command::Train { data, spec, lambda, seed, out, max_iters, subsample, pool_rounds } => {
            let s = file.train.clone();
            let data = merge_data(data, s.data, s.synthetic);
            let out = out_dir(pick(out, s.out))?;
            run_with_manifest(&out, "train", |m| {
                cmd_train(
                    &data,
                    require(pick(spec, s.spec), "--spec")?,
                    pick(lambda, s.lambda),
                    require(pick(seed, s.seed), "--seed")?,
                    &out,
                    pick(max_iters, s.max_iters),
                    pick(subsample, s.subsample),
                    pick(pool_rounds, s.pool_rounds),
                    desk,
                    m,
                )
            })
        }
        Command::Attack { data, model, split, limit, seed, out, policy, grid } => {
            let s = file.attack.clone();
            let data = merge_data(data, s.data, s.synthetic);
            let out = out_dir(pick(out, s.out))?;
            run_with_manifest(&out, "attack", |m| {
                cmd_attack(
                    &data,
                    require(pick(model, s.model), "--model")?,
                    pick(split, s.split),
                    pick(limit, s.limit),
                    require(pick(seed, s.seed), "--seed")?,
                    &out,
                    pick(policy, s.policy),
                    grid || s.grid.unwrap_or(false),
                    desk,
                    m,
                )
            })
        }
        Command::Transfer { data, models, split, limit, seed, out } => {
            let s = file.transfer.clone();
            let data = merge_data(data, s.data, s.synthetic);
            let models = if models.is_empty() { s.models.unwrap_or_default() } else { models };
            let out = out_dir(pick(out, s.out))?;
            run_with_manifest(&out, "transfer", |m| {
                cmd_transfer(
                    &data,
                    models.clone(),
                    pick(split, s.split),
                    pick(limit, s.limit),
                    require(pick(seed, s.seed), "--seed")?,
                    &out,
                    desk,
                    m,
                )
            })
        }
        Command::CrossTrain { data, seed, limit, out, arch_a, arch_b, max_iters, amplify_literal } => {
            let s = file.cross_train.clone();
            let data = merge_data(data, s.data, s.synthetic);
            let out = out_dir(pick(out, s.out))?;
            run_with_manifest(&out, "cross-train", |m| {
                cmd_cross_train(
                    &data,
                    require(pick(seed, s.seed), "--seed")?,
                    pick(limit, s.limit),
                    &out,
                    pick(arch_a, s.arch_a),
                    pick(arch_b, s.arch_b),
                    pick(max_iters, s.max_iters),
                    amplify_literal || s.amplify_literal.unwrap_or(false),
                    desk,
                    m,
                )
            })
        }
        Command::Inspect { data, model, layer, rows, topk, seed, out } => {
            let s = file.inspect.clone();
            let data = merge_data(data, s.data, s.synthetic);
            let out = out_dir(pick(out, s.out))?;
            run_with_manifest(&out, "inspect", |m| {
                cmd_inspect(
                    &data,
                    require(pick(model, s.model), "--model")?,
                    pick(layer, s.layer).unwrap_or(2),
                    pick(rows, s.rows).unwrap_or(8),
                    pick(topk, s.topk).unwrap_or(8),
                    require(pick(seed, s.seed), "--seed")?,
                    &out,
                    m,
                )
            })
        }
        Command::Spectral { model, conv_spec, grid_points, plain_norms, probe_samples, seed, out } => {
            let s = file.spectral.clone();
            let out = out_dir(pick(out, s.out))?;
            run_with_manifest(&out, "spectral", |m| {
                cmd_spectral(
                    pick(model, s.model),
                    pick(conv_spec, s.conv_spec),
                    pick(grid_points, s.grid_points).unwrap_or(64),
                    plain_norms || s.plain_norms.unwrap_or(false),
                    pick(probe_samples, s.probe_samples).unwrap_or(1000),
                    require(pick(seed, s.seed), "--seed")?,
                    &out,
                    m,
                )
            })
        }
        Command::Report { run } => cmd_report(&require(run, "--run")?),
    }
}

/// Run a command body, then write its manifest; on failure still leave an
/// error manifest behind.
fn run_with_manifest<F>(out: &Path, command: &str, body: F) -> Result<()>
where
    F: FnOnce(&mut RunManifest) -> Result<()>,
{
    let mut manifest = RunManifest::new(command, Value::Null, Value::Null);
    match body(&mut manifest) {
        Ok(()) => manifest.write(out),
        Err(e) => {
            manifest.status = "error".into();
            manifest.error = Some(e.to_string());
            let _ = manifest.write(out);
            Err(e)
        }
    }
}

fn out_dir(out: Option<PathBuf>) -> Result<PathBuf> {
    let out = out.unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    Ok(out)
}

/// Dataset request after flag/file merging.
#[derive(Debug, Clone)]
struct DataRequest {
    dir: Option<PathBuf>,
    synthetic: Option<usize>,
}

fn merge_data(flags: DataArgs, file_dir: Option<PathBuf>, file_synth: Option<usize>) -> DataRequest {
    DataRequest { dir: pick(flags.data, file_dir), synthetic: pick(flags.synthetic, file_synth) }
}

struct LoadedData {
    train: LabeledDataset,
    test: LabeledDataset,
    stamp: Value,
}

fn load_data(req: &DataRequest) -> Result<LoadedData> {
    if let Some(n) = req.synthetic {
        if n == 0 {
            return Err(Error::Config("--synthetic needs a positive example count".into()));
        }
        let train = two_blob_dataset(n, SYNTHETIC_DATA_SEED);
        let test = two_blob_dataset((n / 2).max(2), SYNTHETIC_DATA_SEED ^ 1);
        let stamp = json!({
            "kind": "synthetic",
            "train_examples": train.len(),
            "test_examples": test.len(),
            "generator_seed": SYNTHETIC_DATA_SEED,
        });
        return Ok(LoadedData { train, test, stamp });
    }

    let dir = req
        .dir
        .clone()
        .or_else(|| std::env::var_os("BLINDSPOT_DATA").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"));
    let paths: Vec<PathBuf> = IDX_FILES.iter().map(|f| dir.join(f)).collect();
    if let Some(missing) = paths.iter().find(|p| !p.exists()) {
        return Err(Error::Config(format!(
            "dataset file {} not found; expected the MNIST IDX files {} under {} \
             (set --data, BLINDSPOT_DATA, or use --synthetic N)",
            missing.display(),
            IDX_FILES.join(", "),
            dir.display(),
        )));
    }
    let train = load_idx(&paths[0], &paths[1])?;
    let test = load_idx(&paths[2], &paths[3])?;
    let hashes: Vec<Value> = paths
        .iter()
        .map(|p| Ok(json!({"file": p.display().to_string(), "sha256": hash_file(p)?})))
        .collect::<Result<_>>()?;
    let stamp = json!({"kind": "idx", "dir": dir.display().to_string(), "files": hashes});
    Ok(LoadedData { train, test, stamp })
}

fn parse_split(split: Option<String>) -> Result<Split> {
    match split.as_deref() {
        None | Some("train") => Ok(Split::Train),
        Some("test") => Ok(Split::Test),
        Some(other) => Err(Error::Config(format!("unknown split \"{other}\" (train|test)"))),
    }
}

fn parse_policy(policy: Option<String>) -> Result<TargetPolicy> {
    match policy.as_deref() {
        None | Some("second_most_probable") => Ok(TargetPolicy::SecondMostProbable),
        Some("least_probable") => Ok(TargetPolicy::LeastProbable),
        Some("cycle_all") => Ok(TargetPolicy::CycleAll),
        Some(other) => match other.parse::<usize>() {
            Ok(l) => Ok(TargetPolicy::Fixed(l)),
            Err(_) => Err(Error::Config(format!("unknown target policy \"{other}\""))),
        },
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    data_req: &DataRequest,
    spec: String,
    lambda: Option<Vec<f64>>,
    seed: u64,
    out: &Path,
    max_iters: Option<usize>,
    subsample: Option<usize>,
    pool_rounds: Option<usize>,
    desk: bool,
    manifest: &mut RunManifest,
) -> Result<()> {
    let data = load_data(data_req)?;
    let arch = ArchSpec::parse(&spec)?;
    let cfg = TrainConfig {
        max_lbfgs_iterations: max_iters.unwrap_or(2000),
        lambda_schedule: lambda.clone(),
        seed,
        subsample: subsample.or(if desk { Some(10_000) } else { None }),
        ..TrainConfig::default()
    };

    let model = match pool_rounds {
        Some(rounds) if rounds > 0 => {
            let pool_cfg = AdvPoolConfig { rounds, ..AdvPoolConfig::default() };
            let attack_cfg = AttackConfig { seed, ..AttackConfig::default() };
            adversarial_pool_train(&arch, &data.train, &attack_cfg, &pool_cfg, &cfg)?
        }
        _ => train(&arch, &data.train, &cfg)?,
    };

    let mut net = model.network.clone();
    net.meta.test_error = Some(net.error_rate(&data.test)?);
    save_model(&net, &out.join("model.json"))?;
    model.log_table().write(&out.join("training_log.csv"))?;

    manifest.config = json!({
        "spec": spec, "lambda": lambda, "seed": seed,
        "max_iters": cfg.max_lbfgs_iterations, "subsample": cfg.subsample,
        "pool_rounds": pool_rounds,
    });
    manifest.dataset = data.stamp;
    manifest.record(out, "model.json")?;
    manifest.record(out, "training_log.csv")?;
    println!(
        "trained {}: train error {:.4}, test error {:.4}, {} iterations",
        net.name,
        model.train_error,
        net.meta.test_error.unwrap_or(f64::NAN),
        model.trace.len().saturating_sub(1),
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_attack(
    data_req: &DataRequest,
    model_path: PathBuf,
    split: Option<String>,
    limit: Option<usize>,
    seed: u64,
    out: &Path,
    policy: Option<String>,
    grid: bool,
    desk: bool,
    manifest: &mut RunManifest,
) -> Result<()> {
    let data = load_data(data_req)?;
    let net = load_model(&model_path)?;
    let split = parse_split(split)?;
    let source = match split {
        Split::Train => &data.train,
        Split::Test => &data.test,
    };
    let cfg = AttackConfig { target_policy: parse_policy(policy.clone())?, seed, ..AttackConfig::default() };
    let limit = limit.or(if desk { Some(1000) } else { None });

    let set = build_adversarial_set(&net, source, split, &cfg, limit)?;
    set.to_csv().write(&out.join("attack.csv"))?;
    manifest.record(out, "attack.csv")?;
    if grid {
        let images = set.figure_images(16);
        write_pgm_grid(&images, 8, &out.join("attack_grid.pgm"))?;
        manifest.record(out, "attack_grid.pgm")?;
    }

    manifest.config = json!({
        "model": model_path.display().to_string(), "split": split.to_string(),
        "limit": limit, "seed": seed, "policy": policy,
        "c_init": cfg.c_init, "c_growth": cfg.c_growth,
        "bisection_steps": cfg.bisection_steps, "inner_iterations": cfg.inner_iterations,
    });
    manifest.dataset = data.stamp;
    let achieved = set.outcomes.iter().filter(|o| o.result.achieved).count();
    println!(
        "attacked {} examples against {}: {achieved} achieved, average distortion {:.5}",
        set.outcomes.len(),
        net.name,
        set.average_distortion,
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_transfer(
    data_req: &DataRequest,
    model_paths: Vec<PathBuf>,
    split: Option<String>,
    limit: Option<usize>,
    seed: u64,
    out: &Path,
    desk: bool,
    manifest: &mut RunManifest,
) -> Result<()> {
    if model_paths.is_empty() {
        return Err(Error::Config("--models needs at least one model".into()));
    }
    let data = load_data(data_req)?;
    let split = parse_split(split)?;
    let source = match split {
        Split::Train => &data.train,
        Split::Test => &data.test,
    };
    let limit = limit.or(if desk { Some(1000) } else { None });
    let cfg = AttackConfig { seed, ..AttackConfig::default() };

    let mut models = Vec::with_capacity(model_paths.len());
    for p in &model_paths {
        models.push(load_model(p)?);
    }
    // Same-family models would collide in labels and file names.
    let mut seen: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for net in &mut models {
        let n = seen.entry(net.name.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            net.name = format!("{}#{}", net.name, n);
        }
    }
    let mut sets: Vec<AdversarialSet> = Vec::with_capacity(models.len());
    for net in &models {
        let set = build_adversarial_set(net, source, split, &cfg, limit)?;
        set.to_csv().write(&out.join(format!("attack_{}.csv", sanitize(&net.name))))?;
        sets.push(set);
    }
    let model_refs: Vec<&crate::network::Network> = models.iter().collect();
    let set_refs: Vec<&AdversarialSet> = sets.iter().collect();
    let matrix = cross_error_matrix(&model_refs, &set_refs, &[0.1, 0.3], seed ^ 0x6e73)?;
    matrix.to_csv().write(&out.join("transfer.csv"))?;

    manifest.config = json!({
        "models": model_paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "split": split.to_string(), "limit": limit, "seed": seed,
    });
    manifest.dataset = data.stamp;
    for net in &models {
        manifest.record(out, &format!("attack_{}.csv", sanitize(&net.name)))?;
    }
    manifest.record(out, "transfer.csv")?;
    println!("transfer matrix over {} models written", models.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_cross_train(
    data_req: &DataRequest,
    seed: u64,
    limit: Option<usize>,
    out: &Path,
    arch_a: Option<String>,
    arch_b: Option<String>,
    max_iters: Option<usize>,
    amplify_literal: bool,
    desk: bool,
    manifest: &mut RunManifest,
) -> Result<()> {
    let data = load_data(data_req)?;
    let defaults = CrossTrainConfig::default();
    let cfg = CrossTrainConfig {
        seed,
        train: TrainConfig {
            max_lbfgs_iterations: max_iters.unwrap_or(2000),
            seed,
            subsample: if desk { Some(10_000) } else { None },
            ..TrainConfig::default()
        },
        attack: AttackConfig { seed, ..AttackConfig::default() },
        limit: limit.or(if desk { Some(1000) } else { None }),
        arch_a: match arch_a.as_deref() {
            Some(a) => ArchSpec::parse(a)?,
            None => defaults.arch_a.clone(),
        },
        arch_b: match arch_b.as_deref() {
            Some(b) => ArchSpec::parse(b)?,
            None => defaults.arch_b.clone(),
        },
        amplify_literal,
        ..defaults
    };

    let study = cross_training_set_study(&data.train, &data.test, &cfg)?;
    study.baseline_csv().write(&out.join("baselines.csv"))?;
    study.unamplified.to_csv().write(&out.join("transfer_unamplified.csv"))?;
    study.amplified.to_csv().write(&out.join("transfer_amplified.csv"))?;

    manifest.config = json!({
        "seed": seed, "limit": cfg.limit,
        "arch_a": cfg.arch_a.family_name(), "arch_b": cfg.arch_b.family_name(),
        "amplify_to": cfg.amplify_to, "amplify_literal": cfg.amplify_literal,
        "noise_unamplified": cfg.noise_unamplified, "noise_amplified": cfg.noise_amplified,
    });
    manifest.dataset = data.stamp;
    for f in ["baselines.csv", "transfer_unamplified.csv", "transfer_amplified.csv"] {
        manifest.record(out, f)?;
    }
    println!("cross-training-set study written ({} baseline rows)", study.baselines.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_inspect(
    data_req: &DataRequest,
    model_path: PathBuf,
    layer: usize,
    rows: usize,
    topk: usize,
    seed: u64,
    out: &Path,
    manifest: &mut RunManifest,
) -> Result<()> {
    let data = load_data(data_req)?;
    let net = load_model(&model_path)?;
    let grids = inspection_grids(&net, layer, &data.test, rows, topk, seed)?;
    write_pgm_grid(&grids.natural, grids.k, &out.join("natural.pgm"))?;
    write_pgm_grid(&grids.random, grids.k, &out.join("random.pgm"))?;

    let mut table = crate::dataio::CsvTable::new(["row", "kind", "rank", "image_index"]);
    for (row, indices) in grids.natural_indices.iter().enumerate() {
        for (rank, idx) in indices.iter().enumerate() {
            table.push_row([row.to_string(), "natural".into(), rank.to_string(), idx.to_string()]);
        }
    }
    for (row, indices) in grids.random_indices.iter().enumerate() {
        for (rank, idx) in indices.iter().enumerate() {
            table.push_row([row.to_string(), "random".into(), rank.to_string(), idx.to_string()]);
        }
    }
    table.write(&out.join("inspection.csv"))?;

    manifest.config = json!({
        "model": model_path.display().to_string(),
        "layer": layer, "rows": rows, "topk": topk, "seed": seed,
    });
    manifest.dataset = data.stamp;
    for f in ["natural.pgm", "random.pgm", "inspection.csv"] {
        manifest.record(out, f)?;
    }
    println!("inspection grids written ({rows} rows x {topk} images)");
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_spectral(
    model_path: Option<PathBuf>,
    conv_spec: Option<PathBuf>,
    grid_points: usize,
    plain_norms: bool,
    probe_samples: usize,
    seed: u64,
    out: &Path,
    manifest: &mut RunManifest,
) -> Result<()> {
    let opts = SpectralOptions {
        grid_points,
        sigmoid_tightened: !plain_norms,
        ..SpectralOptions::default()
    };

    let (name, layers, probe) = match (&model_path, &conv_spec) {
        (Some(p), None) => {
            let net = load_model(p)?;
            let layers = SpectralLayer::from_network(&net);
            let mut rng = RngStream::new(seed);
            let probe = empirical_lipschitz_probe(&net, probe_samples, &mut rng)?;
            (net.name.clone(), layers, Some(probe))
        }
        (None, Some(p)) => {
            let (name, layers) = load_spectral_spec(p)?;
            (name, layers, None)
        }
        _ => {
            return Err(Error::Config(
                "spectral needs exactly one of --model or --conv-spec".into(),
            ))
        }
    };

    let report = network_bound(&layers, &opts)?;
    report.to_csv().write(&out.join("spectral.csv"))?;
    report.to_detail_csv().write(&out.join("spectral_detail.csv"))?;

    manifest.config = json!({
        "model": model_path.map(|p| p.display().to_string()),
        "conv_spec": conv_spec.map(|p| p.display().to_string()),
        "grid_points": grid_points, "plain_norms": plain_norms,
        "probe_samples": probe_samples, "seed": seed,
    });
    manifest.dataset = json!({"kind": "none"});
    manifest.record(out, "spectral.csv")?;
    manifest.record(out, "spectral_detail.csv")?;
    match probe {
        Some(p) => println!(
            "{name}: product bound {:.6}, empirical probe {:.6} ({})",
            report.product,
            p,
            if p <= report.product { "sound" } else { "VIOLATED" },
        ),
        None => println!("{name}: product bound {:.6}", report.product),
    }
    Ok(())
}

fn cmd_report(run: &Path) -> Result<()> {
    let manifest_path = run.join("manifest.json");
    let manifest_text =
        fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Value = serde_json::from_str(&manifest_text).map_err(|e| Error::Format {
        path: manifest_path.display().to_string(),
        detail: e.to_string(),
    })?;

    let mut md = String::new();
    md.push_str(&format!(
        "# Run report: {}\n\nstatus: {}\n\n## Configuration\n\n```json\n{}\n```\n",
        manifest.get("command").and_then(Value::as_str).unwrap_or("?"),
        manifest.get("status").and_then(Value::as_str).unwrap_or("?"),
        serde_json::to_string_pretty(manifest.get("config").unwrap_or(&Value::Null)).unwrap_or_default(),
    ));

    if let Some(outputs) = manifest.get("outputs").and_then(Value::as_object) {
        md.push_str("\n## Outputs\n\n");
        for (file, hash) in outputs {
            md.push_str(&format!("- `{file}` sha256 `{}`\n", hash.as_str().unwrap_or("?")));
        }
        for file in outputs.keys().filter(|f| f.ends_with(".csv")) {
            let path = run.join(file);
            if let Ok(text) = fs::read_to_string(&path) {
                md.push_str(&format!("\n### {file}\n\n"));
                md.push_str(&csv_to_markdown(&text));
            }
        }
    }

    let out_path = run.join("summary.md");
    fs::write(&out_path, md).map_err(|e| Error::io(&out_path, e))?;
    println!("report written to {}", out_path.display());
    Ok(())
}

fn csv_to_markdown(text: &str) -> String {
    let mut lines = text.lines();
    let Some(header) = lines.next() else { return String::new() };
    let cols = header.split(',').count();
    let mut md = format!("|{}|\n", header.split(',').collect::<Vec<_>>().join("|"));
    md.push_str(&format!("|{}|\n", vec!["---"; cols].join("|")));
    for line in lines {
        md.push_str(&format!("|{}|\n", line.split(',').collect::<Vec<_>>().join("|")));
    }
    md
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}
