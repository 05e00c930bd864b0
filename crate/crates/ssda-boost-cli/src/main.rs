//! Command-line front end: training, bootstrap initialization, batch
//! prediction, virtual-source synthesis and the benchmark harness.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error.

mod bench;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};

use ssda_boost::dataset::{
    load_features_opts, save_features, DomainBundle, FeatureMatrix, LabelColumn, OneHotLabels,
};
use ssda_boost::model_io::{load_model, save_model};
use ssda_boost::ridge::fit_one_vs_rest;
use ssda_boost::sourcegen::synthesize_source;
use ssda_boost::trainer::{train, EnsembleModel, TrainConfig};

#[derive(Parser)]
#[command(
    name = "ssda-boost",
    version,
    about = "Boosting-based fine-tuning of linear classifiers for semi-supervised domain adaptation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fine-tune an initial classifier on source/target feature files.
    Train(TrainArgs),
    /// Fit a one-vs-rest ridge classifier to use as the initial model.
    BootstrapInit(BootstrapArgs),
    /// Score a feature file with a trained model.
    Predict(PredictArgs),
    /// Synthesize a labeled virtual source domain from a linear layer.
    SynthSource(SynthArgs),
    /// Run a synthetic-benchmark experiment grid and emit metrics CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("init").required(true).multiple(false)))]
struct TrainArgs {
    /// Labeled source feature CSV.
    #[arg(long)]
    source: PathBuf,
    /// Labeled target feature CSV.
    #[arg(long)]
    target_labeled: PathBuf,
    /// Unlabeled target feature CSV.
    #[arg(long)]
    target_unlabeled: PathBuf,
    /// Initial model JSON.
    #[arg(long, group = "init")]
    init_model: Option<PathBuf>,
    /// Fit the initial model from the labeled data instead.
    #[arg(long, group = "init")]
    bootstrap_init: bool,
    /// Number of fine-tuning block pairs.
    #[arg(long, default_value_t = 100)]
    blocks: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    /// Noise magnitude for the unlabeled-data augmentation.
    #[arg(long, default_value_t = 1.0)]
    xi: f64,
    /// Dimensionality of each random feature map.
    #[arg(long, default_value_t = 100)]
    node_size: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 0.01)]
    ridge_lambda: f64,
    #[arg(long, default_value_t = 2021)]
    seed: u64,
    /// Full-batch weighted fits instead of balanced sampling.
    #[arg(long)]
    deterministic: bool,
    /// Keep misclassified source samples at full weight.
    #[arg(long)]
    no_source_removal: bool,
    /// Labeled test CSV; per-block accuracy lands in the training log.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Output model JSON path.
    #[arg(long)]
    out: PathBuf,
    /// Training-log CSV path (default: <out> with extension `log.csv`).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct BootstrapArgs {
    /// Labeled source feature CSV.
    #[arg(long)]
    source: Option<PathBuf>,
    /// Labeled target feature CSV.
    #[arg(long)]
    target_labeled: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    ridge_lambda: f64,
    /// Output model JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Model JSON path.
    #[arg(long)]
    model: PathBuf,
    /// Feature CSV to score; a label column, if present, is ignored.
    #[arg(long)]
    features: PathBuf,
    /// Output predictions CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Model JSON holding the classifier's last linear layer.
    #[arg(long)]
    linear_layer: PathBuf,
    /// Target feature CSV; may repeat, files are pooled.
    #[arg(long, required = true)]
    target_features: Vec<PathBuf>,
    /// Synthesized samples per class.
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    #[arg(long, default_value_t = 0.75)]
    beta_a: f64,
    #[arg(long, default_value_t = 0.75)]
    beta_b: f64,
    /// Ridge strength for the layer pseudo-inverse.
    #[arg(long, default_value_t = 1e-6)]
    lambda: f64,
    #[arg(long, default_value_t = 2021)]
    seed: u64,
    /// Output labeled feature CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    scenario: bench::Scenario,
    /// Number of seeds per configuration.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Output metrics CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            // Usage errors exit 1; --help and --version exit 0.
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            std::process::exit(code);
        }
    };
    env_logger::init();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(2);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::BootstrapInit(args) => cmd_bootstrap_init(args),
        Command::Predict(args) => cmd_predict(args),
        Command::SynthSource(args) => cmd_synth_source(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn load_labeled(path: &Path, num_classes: Option<usize>) -> Result<(FeatureMatrix, OneHotLabels)> {
    let (features, labels) = load_features_opts(path, LabelColumn::Required { num_classes })
        .with_context(|| format!("reading {}", path.display()))?;
    Ok((features, labels.expect("label column required")))
}

fn load_unlabeled(path: &Path) -> Result<FeatureMatrix> {
    let (features, _) = load_features_opts(path, LabelColumn::Absent)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(features)
}

/// Re-encode both labeled parts against a shared class count.
fn harmonize_classes(
    source: (FeatureMatrix, OneHotLabels),
    target: (FeatureMatrix, OneHotLabels),
    at_least: Option<usize>,
) -> Result<((FeatureMatrix, OneHotLabels), (FeatureMatrix, OneHotLabels))> {
    let j = source
        .1
        .num_classes()
        .max(target.1.num_classes())
        .max(at_least.unwrap_or(0));
    let rebuild = |(features, labels): (FeatureMatrix, OneHotLabels)| -> Result<_> {
        let labels = OneHotLabels::from_classes(labels.classes().to_vec(), j)?;
        Ok((features, labels))
    };
    Ok((rebuild(source)?, rebuild(target)?))
}

fn bootstrap_model(
    parts: &[(&FeatureMatrix, &OneHotLabels)],
    lambda: f64,
) -> Result<EnsembleModel> {
    let features: Vec<&FeatureMatrix> = parts.iter().map(|(f, _)| *f).collect();
    let stacked = FeatureMatrix::vstack(&features)?;
    let mut classes = Vec::new();
    let mut j = 0;
    for (_, labels) in parts {
        classes.extend_from_slice(labels.classes());
        j = j.max(labels.num_classes());
    }
    let initial = fit_one_vs_rest(stacked.view(), &classes, j, lambda)?;
    Ok(EnsembleModel { initial, blocks: Vec::new(), lr: 0.1, node_size: 0 })
}

fn default_log_path(out: &Path) -> PathBuf {
    out.with_extension("log.csv")
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let init = match &args.init_model {
        Some(path) => {
            Some(load_model(path).with_context(|| format!("reading {}", path.display()))?)
        }
        None => None,
    };
    let source = load_labeled(&args.source, None)?;
    let target_labeled = load_labeled(&args.target_labeled, None)?;
    let target_unlabeled = load_unlabeled(&args.target_unlabeled)?;
    let (source, target_labeled) =
        harmonize_classes(source, target_labeled, init.as_ref().map(|m| m.num_classes()))?;
    let bundle = DomainBundle::new(source, target_labeled, target_unlabeled)?;

    let initial = match init {
        Some(model) => model.initial,
        None => {
            bootstrap_model(
                &[
                    (&bundle.source.0, &bundle.source.1),
                    (&bundle.target_labeled.0, &bundle.target_labeled.1),
                ],
                args.ridge_lambda,
            )?
            .initial
        }
    };

    let test = match &args.test {
        Some(path) => Some(load_labeled(path, Some(bundle.num_classes()))?),
        None => None,
    };

    let cfg = TrainConfig {
        blocks: args.blocks,
        batch_size: args.batch_size,
        xi: args.xi,
        node_size: args.node_size,
        lr: args.lr,
        lambda: args.ridge_lambda,
        seed: args.seed,
        deterministic_full_batch: args.deterministic,
        remove_misclassified_source: !args.no_source_removal,
        ..TrainConfig::default()
    };
    let (model, log) = train(
        &bundle,
        &initial,
        &cfg,
        test.as_ref().map(|(f, l)| (f, l)),
    )?;

    save_model(&args.out, &model).with_context(|| format!("writing {}", args.out.display()))?;
    let log_path = args.log.unwrap_or_else(|| default_log_path(&args.out));
    fs::write(&log_path, log.to_csv()).with_context(|| format!("writing {}", log_path.display()))?;
    println!(
        "trained {} blocks; model -> {}, log -> {}",
        model.blocks.len(),
        args.out.display(),
        log_path.display()
    );
    Ok(())
}

fn cmd_bootstrap_init(args: BootstrapArgs) -> Result<()> {
    let mut parts = Vec::new();
    if let Some(path) = &args.source {
        parts.push(load_labeled(path, None)?);
    }
    if let Some(path) = &args.target_labeled {
        parts.push(load_labeled(path, None)?);
    }
    if parts.is_empty() {
        bail!("bootstrap-init needs --source and/or --target-labeled");
    }
    let j = parts.iter().map(|(_, l)| l.num_classes()).max().unwrap();
    for part in &mut parts {
        part.1 = OneHotLabels::from_classes(part.1.classes().to_vec(), j)?;
    }
    let borrowed: Vec<(&FeatureMatrix, &OneHotLabels)> =
        parts.iter().map(|(f, l)| (f, l)).collect();
    let model = bootstrap_model(&borrowed, args.ridge_lambda)?;
    save_model(&args.out, &model).with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "bootstrap model ({} classes, {} features) -> {}",
        model.num_classes(),
        model.n_features(),
        args.out.display()
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let (features, _) = load_features_opts(&args.features, LabelColumn::Auto)
        .with_context(|| format!("reading {}", args.features.display()))?;
    let (scores, labels) = model.predict(&features)?;

    let mut out = String::from("index,predicted_class");
    for class in 0..model.num_classes() {
        let _ = write!(out, ",score{class}");
    }
    out.push('\n');
    for (i, &label) in labels.iter().enumerate() {
        let _ = write!(out, "{i},{label}");
        for class in 0..model.num_classes() {
            let _ = write!(out, ",{}", scores[[i, class]]);
        }
        out.push('\n');
    }
    fs::write(&args.out, out).with_context(|| format!("writing {}", args.out.display()))?;
    println!("{} predictions -> {}", labels.len(), args.out.display());
    Ok(())
}

fn cmd_synth_source(args: SynthArgs) -> Result<()> {
    let model = load_model(&args.linear_layer)
        .with_context(|| format!("reading {}", args.linear_layer.display()))?;
    let mut pools = Vec::new();
    for path in &args.target_features {
        let (features, _) = load_features_opts(path, LabelColumn::Auto)
            .with_context(|| format!("reading {}", path.display()))?;
        pools.push(features);
    }
    let borrowed: Vec<&FeatureMatrix> = pools.iter().collect();
    let pooled = FeatureMatrix::vstack(&borrowed)?;

    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(args.seed);
    let synth = synthesize_source(
        &model.initial,
        &pooled,
        args.per_class,
        args.beta_a,
        args.beta_b,
        args.lambda,
        &mut rng,
    )?;
    save_features(&args.out, &synth.features, Some(&synth.labels))
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "synthesized {} samples ({} per class) -> {}",
        synth.features.n_rows(),
        args.per_class,
        args.out.display()
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    if args.seeds == 0 {
        bail!("--seeds must be >= 1");
    }
    let rows = bench::run_scenario(args.scenario, args.seeds)?;
    fs::write(&args.out, bench::to_csv(&rows))
        .with_context(|| format!("writing {}", args.out.display()))?;
    println!("{} rows -> {}", rows.len(), args.out.display());
    Ok(())
}
