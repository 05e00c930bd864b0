//! Synthetic-benchmark experiment grids.
//!
//! Each scenario trains on generated domain-shift bundles across seeds
//! and reports test accuracy against the un-tuned initial model. The
//! grids are deliberately desk-scale: minutes, not GPU-days.

use anyhow::Result;
use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ssda_boost::dataset::{
    flip_labels, make_shift_benchmark, DomainBundle, FeatureMatrix, OneHotLabels, ShiftBenchmark,
    ShiftConfig,
};
use ssda_boost::logitboost::argmax;
use ssda_boost::ridge::{fit_one_vs_rest, predict_linear, LinearModel};
use ssda_boost::sourcegen::synthesize_source;
use ssda_boost::trainer::{train, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scenario {
    /// Accuracy across shift magnitudes.
    ShiftSweep,
    /// Accuracy across noise magnitudes.
    XiSweep,
    /// Accuracy across block counts, including the K=0 baseline.
    BlocksSweep,
    /// Misclassified-source removal on vs off under source label noise.
    RemovalAblation,
    /// Source-free pipeline: synthesize a virtual source, then fine-tune.
    SfdaPipeline,
}

pub struct BenchRow {
    pub scenario: &'static str,
    pub config: String,
    pub seed: String,
    pub baseline_accuracy: Option<f64>,
    pub accuracy: Option<f64>,
    pub accuracy_std: Option<f64>,
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("scenario,config,seed,baseline_accuracy,accuracy,accuracy_std\n");
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.scenario,
            r.config,
            r.seed,
            fmt(r.baseline_accuracy),
            fmt(r.accuracy),
            fmt(r.accuracy_std)
        ));
    }
    out
}

const FEATURES: usize = 20;
const SFDA_FEATURES: usize = 32;
const SOURCE_SIZE: usize = 400;
const TARGET_SIZE: usize = 800;
const DEFAULT_SHIFT: f64 = 0.75;
const DEFAULT_PAIRS: usize = 50;

fn benchmark(shift: f64, features: usize, seed: u64) -> Result<ShiftBenchmark> {
    Ok(make_shift_benchmark(&ShiftConfig::new(
        4, features, SOURCE_SIZE, TARGET_SIZE, shift, seed,
    ))?)
}

fn bootstrap_initial(bundle: &DomainBundle) -> Result<LinearModel> {
    let stacked = FeatureMatrix::vstack(&[&bundle.source.0, &bundle.target_labeled.0])?;
    let mut classes = bundle.source.1.classes().to_vec();
    classes.extend_from_slice(bundle.target_labeled.1.classes());
    Ok(fit_one_vs_rest(stacked.view(), &classes, bundle.num_classes(), 0.01)?)
}

fn linear_accuracy(
    model: &LinearModel,
    features: &FeatureMatrix,
    labels: &OneHotLabels,
) -> Result<f64> {
    let scores = predict_linear(model, features.view())?;
    let preds: Vec<usize> = scores
        .rows()
        .into_iter()
        .map(|r| argmax(r.as_slice().expect("contiguous row")))
        .collect();
    Ok(labels.accuracy_of(&preds))
}

/// Train on the bundle and report (baseline accuracy, tuned accuracy).
fn run_once(bench: &ShiftBenchmark, cfg: &TrainConfig) -> Result<(f64, f64)> {
    let initial = bootstrap_initial(&bench.bundle)?;
    let baseline = linear_accuracy(&initial, &bench.test_features, &bench.test_labels)?;
    let (model, _) = train(&bench.bundle, &initial, cfg, None)?;
    let (_, preds) = model.predict(&bench.test_features)?;
    Ok((baseline, bench.test_labels.accuracy_of(&preds)))
}

fn aggregate(
    scenario: &'static str,
    config: &str,
    results: &[(f64, f64)],
    rows: &mut Vec<BenchRow>,
) {
    for (seed, (baseline, accuracy)) in results.iter().enumerate() {
        rows.push(BenchRow {
            scenario,
            config: config.to_string(),
            seed: seed.to_string(),
            baseline_accuracy: Some(*baseline),
            accuracy: Some(*accuracy),
            accuracy_std: None,
        });
    }
    let n = results.len() as f64;
    let mean_base = results.iter().map(|r| r.0).sum::<f64>() / n;
    let mean_acc = results.iter().map(|r| r.1).sum::<f64>() / n;
    let var = results.iter().map(|r| (r.1 - mean_acc).powi(2)).sum::<f64>() / n;
    rows.push(BenchRow {
        scenario,
        config: config.to_string(),
        seed: "aggregate".to_string(),
        baseline_accuracy: Some(mean_base),
        accuracy: Some(mean_acc),
        accuracy_std: Some(var.sqrt()),
    });
}

pub fn run_scenario(scenario: Scenario, seeds: u64) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    match scenario {
        Scenario::ShiftSweep => {
            for shift in [0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0] {
                let mut results = Vec::new();
                for seed in 0..seeds {
                    let bench = benchmark(shift, FEATURES, seed)?;
                    let cfg =
                        TrainConfig { blocks: DEFAULT_PAIRS, seed, ..TrainConfig::default() };
                    results.push(run_once(&bench, &cfg)?);
                }
                aggregate("shift-sweep", &format!("shift={shift}"), &results, &mut rows);
            }
        }
        Scenario::XiSweep => {
            for xi in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let mut results = Vec::new();
                for seed in 0..seeds {
                    let bench = benchmark(DEFAULT_SHIFT, FEATURES, seed)?;
                    let cfg = TrainConfig {
                        blocks: DEFAULT_PAIRS,
                        xi,
                        seed,
                        ..TrainConfig::default()
                    };
                    results.push(run_once(&bench, &cfg)?);
                }
                aggregate("xi-sweep", &format!("xi={xi}"), &results, &mut rows);
            }
        }
        Scenario::BlocksSweep => {
            for pairs in [0, 5, 10, 25, 50] {
                let mut results = Vec::new();
                for seed in 0..seeds {
                    let bench = benchmark(DEFAULT_SHIFT, FEATURES, seed)?;
                    let cfg = TrainConfig { blocks: pairs, seed, ..TrainConfig::default() };
                    results.push(run_once(&bench, &cfg)?);
                }
                aggregate("blocks-sweep", &format!("K={pairs}"), &results, &mut rows);
            }
        }
        Scenario::RemovalAblation => {
            for removal in [true, false] {
                let mut results = Vec::new();
                for seed in 0..seeds {
                    let bench = benchmark(DEFAULT_SHIFT, FEATURES, seed)?;
                    // 20% corrupted source labels make removal matter.
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xF11F);
                    let flipped = flip_labels(&bench.bundle.source.1, 0.2, &mut rng);
                    let bundle = DomainBundle::new(
                        (bench.bundle.source.0.clone(), flipped),
                        bench.bundle.target_labeled.clone(),
                        bench.bundle.target_unlabeled.clone(),
                    )?;
                    let corrupted = ShiftBenchmark {
                        bundle,
                        test_features: bench.test_features.clone(),
                        test_labels: bench.test_labels.clone(),
                    };
                    let cfg = TrainConfig {
                        blocks: DEFAULT_PAIRS,
                        seed,
                        remove_misclassified_source: removal,
                        ..TrainConfig::default()
                    };
                    results.push(run_once(&corrupted, &cfg)?);
                }
                let config = format!("removal={}", if removal { "on" } else { "off" });
                aggregate("removal-ablation", &config, &results, &mut rows);
            }
        }
        Scenario::SfdaPipeline => {
            let mut results = Vec::new();
            for seed in 0..seeds {
                let bench = benchmark(DEFAULT_SHIFT, SFDA_FEATURES, seed)?;
                // Classifier trained on the true source only; the source
                // data itself is then considered unavailable.
                let theta = fit_one_vs_rest(
                    bench.bundle.source.0.view(),
                    bench.bundle.source.1.classes(),
                    bench.bundle.num_classes(),
                    0.01,
                )?;
                let baseline =
                    linear_accuracy(&theta, &bench.test_features, &bench.test_labels)?;
                let pooled = FeatureMatrix::vstack(&[
                    &bench.bundle.target_labeled.0,
                    &bench.bundle.target_unlabeled,
                ])?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
                let synth =
                    synthesize_source(&theta, &pooled, 100, 0.75, 0.75, 1e-6, &mut rng)?;
                let bundle = DomainBundle::new(
                    (synth.features, synth.labels),
                    bench.bundle.target_labeled.clone(),
                    bench.bundle.target_unlabeled.clone(),
                )?;
                let cfg = TrainConfig { blocks: DEFAULT_PAIRS, seed, ..TrainConfig::default() };
                let (model, _) = train(&bundle, &theta, &cfg, None)?;
                let (_, preds) = model.predict(&bench.test_features)?;
                results.push((baseline, bench.test_labels.accuracy_of(&preds)));
            }
            aggregate("sfda-pipeline", "virtual-source", &results, &mut rows);
        }
    }
    Ok(rows)
}
