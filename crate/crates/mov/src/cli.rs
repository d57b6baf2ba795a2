//! Subcommands of the `mov` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mov_core::data::{self, generate_synthetic, Preprocessing, StandardizationStats};
use mov_core::eval::{self, ScoredPrediction, POSITIVE_CLASS};
use mov_core::experiment::{self, FoldSeeds, Hyperparams};
use mov_core::{gradcheck, Dataset, Model, ModelKind, TrainHistory};
use serde::Serialize;

use crate::checkpoint::{Checkpoint, TrainingRecord};
use crate::config::{DataSource, DeLongMode, RunConfig};
use crate::csvio;
use crate::error::{CliError, Result};
use crate::report::{self, CompareReport, EvaluationReport, FoldPlanExport, Manifest, ReportHeader};
use crate::runner;

#[derive(Debug, Parser)]
#[command(name = "mov", version, about = "Mixture-of-views classification: generate, train, evaluate, compare")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// Run configuration (`.toml`, or JSON otherwise; a manifest also works).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parallel fold workers, overriding the config.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its ground-truth sidecar.
    Generate,
    /// Train one model on a stratified train/validation split.
    Train,
    /// Score a checkpoint on a dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Feature table to score instead of the config's data.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Cross-validated comparison of MoV against the baselines.
    Compare,
    /// Finite-difference check of the mixture gradients.
    Gradcheck {
        #[arg(long, default_value_t = 9)]
        trials: usize,
        #[arg(long, default_value_t = gradcheck::TOLERANCE)]
        tolerance: f64,
    },
}

const DEFAULT_OUT: &str = "mov-out";

/// The config file (or defaults) with command-line overrides applied.
pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut config = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = global.seed {
        config.seed = s;
    }
    if global.workers.is_some() {
        config.workers = global.workers;
    }
    if global.out.is_some() {
        config.out = global.out.clone();
    }
    if config.workers == Some(0) {
        return Err(CliError::Config {
            path: global.config.clone().unwrap_or_default(),
            message: "workers must be at least 1".into(),
        });
    }
    Ok(config)
}

fn out_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

/// Loads or generates the configured dataset, applying the group filter.
pub fn load_dataset(config: &RunConfig) -> Result<(Dataset, Option<u64>)> {
    let (dataset, data_seed) = match config.data_source()? {
        DataSource::Csv(path) => (csvio::load_csv(&path, &config.class_names())?, None),
        DataSource::Synthetic { config: syn, seed } => {
            let mut ds = generate_synthetic(&syn, seed)?;
            ds.schema = config.synthetic_schema(&syn.view_dims)?;
            (Dataset::new(ds.schema, ds.samples)?, Some(seed))
        }
    };
    let dataset = match &config.data.group {
        Some(g) => dataset.filter_group(g),
        None => dataset,
    };
    if dataset.is_empty() {
        return Err(mov_core::Error::InvalidInput("no samples to work on".into()).into());
    }
    Ok((dataset, data_seed))
}

pub fn run(cli: Cli) -> Result<()> {
    let config = resolve_config(&cli.global)?;
    match cli.command {
        Command::Generate => generate(&config),
        Command::Train => train(&config),
        Command::Evaluate { checkpoint, data } => evaluate(&config, &checkpoint, data.as_deref()),
        Command::Compare => compare(&config).map(|r| print_summary(&r)),
        Command::Gradcheck { trials, tolerance } => gradcheck_cmd(&config, trials, tolerance, cli.global.out.is_some()),
    }
}

pub fn generate(config: &RunConfig) -> Result<()> {
    let syn = config.data.synthetic.clone().unwrap_or_default();
    let seed = config.data.synthetic_seed.unwrap_or(config.seed);
    let generated = generate_synthetic(&syn, seed)?;
    let dataset = Dataset::new(config.synthetic_schema(&syn.view_dims)?, generated.samples)?;
    let dir = out_dir(config)?;
    let table = dir.join("data.csv");
    csvio::write_csv(&table, &dataset)?;
    let mut recorded = config.clone();
    recorded.data.synthetic = Some(syn);
    recorded.data.synthetic_seed = Some(seed);
    let mut manifest = Manifest::new("generate", &recorded);
    manifest.data_seed = Some(seed);
    manifest.dataset = Some(report::DatasetSummary::new(&dataset));
    report::write_json(&dir.join("manifest.json"), &manifest)?;
    println!("wrote {} samples to {}", dataset.len(), table.display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrainSummary<'a> {
    model: String,
    selected: Hyperparams,
    validation_loss: f64,
    train_samples: usize,
    validation_samples: usize,
    history: &'a TrainHistory,
}

/// Trains `kind` on a stratified split of `dataset`, sweeping the
/// protocol's grid and keeping the point with the lowest validation loss.
pub fn train_split(
    dataset: &Dataset,
    kind: ModelKind,
    config: &RunConfig,
) -> Result<(Checkpoint, Hyperparams, f64, TrainHistory, usize, usize)> {
    let protocol = &config.protocol;
    protocol.validate()?;
    let seeds = FoldSeeds::derive(config.seed, 0);
    let all: Vec<usize> = (0..dataset.len()).collect();
    let (inner_idx, val_idx) = data::carve_validation(dataset, &all, protocol.validation_fraction, seeds.carve)?;
    let inner_raw = dataset.subset(&inner_idx);
    let stats = match protocol.preprocessing {
        Preprocessing::ZScore => StandardizationStats::fit(&inner_raw)?,
        Preprocessing::Raw => StandardizationStats::identity(&dataset.schema.view_dims),
    };
    let inner = stats.apply(&inner_raw);
    let val = stats.apply(&dataset.subset(&val_idx));
    let mut best: Option<(Hyperparams, f64, Model, TrainHistory)> = None;
    for hp in protocol.sweep.points(kind) {
        let model = protocol.build(kind, dataset, &hp, seeds.init)?;
        let train_config = mov_core::TrainConfig {
            lambda: hp.lambda,
            dropout_rate: hp.dropout,
            seed: seeds.train,
            ..protocol.train.clone()
        };
        let (trained, history) = model.train(&inner, &val, &train_config)?;
        let loss = match history.best_epoch {
            Some(e) => history.val_loss[e],
            None => trained.validation_loss(&val)?,
        };
        if best.as_ref().is_none_or(|b| loss < b.1) {
            best = Some((hp, loss, trained, history));
        }
    }
    let (hp, loss, model, history) = best.expect("sweep has at least one point");
    let record = TrainingRecord {
        layers: mov_core::baselines::LayerConfig {
            hidden: vec![hp.hidden_units; hp.hidden_layers],
            gate_hidden: protocol.gate_hidden.clone(),
        },
        lambda: hp.lambda,
        dropout: hp.dropout,
        seed: config.seed,
    };
    let checkpoint = Checkpoint::new(&dataset.schema, model, stats, record);
    Ok((checkpoint, hp, loss, history, inner.len(), val.len()))
}

pub fn train(config: &RunConfig) -> Result<()> {
    config.validate()?;
    let (dataset, data_seed) = load_dataset(config)?;
    let kind = config.train_kind(&dataset.schema)?;
    let (checkpoint, selected, validation_loss, history, n_train, n_val) = train_split(&dataset, kind, config)?;
    let dir = out_dir(config)?;
    checkpoint.save(&dir.join("model.mov"))?;
    report::write_json(
        &dir.join("history.json"),
        &TrainSummary {
            model: checkpoint.header.model_name.clone(),
            selected,
            validation_loss,
            train_samples: n_train,
            validation_samples: n_val,
            history: &history,
        },
    )?;
    let mut manifest = Manifest::new("train", config);
    manifest.data_seed = data_seed;
    manifest.dataset = Some(report::DatasetSummary::new(&dataset));
    manifest.fold_seeds = vec![FoldSeeds::derive(config.seed, 0)];
    report::write_json(&dir.join("manifest.json"), &manifest)?;
    println!(
        "trained {} ({} epochs, best {:?}, validation NLL {validation_loss:.6}) -> {}",
        checkpoint.header.model_name,
        history.epochs(),
        history.best_epoch,
        dir.join("model.mov").display()
    );
    Ok(())
}

pub fn evaluate(config: &RunConfig, checkpoint_path: &Path, data: Option<&Path>) -> Result<()> {
    let checkpoint = Checkpoint::load(checkpoint_path)?;
    let (dataset, data_seed) = match data {
        Some(p) => (csvio::load_csv(p, &checkpoint.header.class_names)?, None),
        None => load_dataset(config)?,
    };
    checkpoint.check_schema(checkpoint_path, &dataset.schema)?;
    let samples = checkpoint.standardization.apply(&dataset.samples);
    let mut preds = Vec::with_capacity(samples.len());
    let mut gates = Vec::new();
    for s in &samples {
        match checkpoint.model.mixture_prediction(&s.views) {
            Some(p) => {
                let p = p?;
                preds.push(ScoredPrediction::new(s.id.clone(), s.label, p.mixture_dist[POSITIVE_CLASS]));
                gates.push(p.gate_weights);
            }
            None => {
                let p = checkpoint.model.predict_proba(&s.views)?;
                preds.push(ScoredPrediction::new(s.id.clone(), s.label, p[POSITIVE_CLASS]));
            }
        }
    }
    let eval_report = eval::evaluate(&preds)?;
    let is_mixture = matches!(checkpoint.model, Model::Mixture { .. });
    let names = &dataset.schema.view_names;
    let truth: Vec<Option<usize>> = samples.iter().map(|s| s.informative_view).collect();
    let dir = out_dir(config)?;
    let model_name = checkpoint.header.model_name.clone();
    report::write_roc(&dir.join(format!("roc_{}.csv", report::file_stem(&model_name))), &eval_report.roc)?;
    report::write_predictions(&dir.join("predictions.csv"), &preds)?;
    if is_mixture {
        report::write_gates(
            &dir.join("gates.csv"),
            names,
            &[],
            samples.iter().zip(&gates).map(|(s, g)| (vec![s.id.clone()], g.as_slice())).collect(),
        )?;
    }
    let out = EvaluationReport {
        header: ReportHeader::new(&dataset.schema.class_names),
        model: model_name,
        report: eval_report,
        gate_histogram: is_mixture.then(|| report::gate_histogram(names, &gates)),
        gate_agreement: if is_mixture { experiment::gate_agreement(&gates, &truth) } else { None },
    };
    report::write_json(&dir.join("report.json"), &out)?;
    let mut manifest = Manifest::new("evaluate", config);
    manifest.data_seed = data_seed;
    manifest.dataset = Some(report::DatasetSummary::new(&dataset));
    report::write_json(&dir.join("manifest.json"), &manifest)?;
    println!(
        "{}: accuracy {:.4}  F {:.4}  AUC {:.4}  (positive class: {})",
        out.model, out.report.accuracy, out.report.f_measure, out.report.auc, out.header.positive_class
    );
    Ok(())
}

/// Runs the comparison, writes every output and returns the report.
pub fn compare(config: &RunConfig) -> Result<CompareReport> {
    config.validate()?;
    let (dataset, data_seed) = load_dataset(config)?;
    let kinds = config.model_kinds(&dataset.schema)?;
    let workers = config.workers.unwrap_or_else(runner::default_workers);
    let (plan, outcomes, comparison) = runner::compare(&dataset, &kinds, &config.protocol, config.seed, workers)?;
    let per_fold = match config.delong {
        DeLongMode::Pooled => None,
        DeLongMode::PerFold => Some(report::per_fold_delong(&dataset, &kinds, &outcomes)?),
    };
    let out = CompareReport {
        header: ReportHeader::new(&dataset.schema.class_names),
        seed: config.seed,
        k_folds: plan.k_folds,
        summary: report::summary(&comparison)?,
        comparison,
        delong_per_fold: per_fold,
    };
    let dir = out_dir(config)?;
    report::write_json(&dir.join("report.json"), &out)?;
    for m in &out.comparison.models {
        let (roc, _) = eval::roc_and_auc(&m.cv.pooled)?;
        report::write_roc(&dir.join(format!("roc_{}.csv", report::file_stem(&m.name))), &roc)?;
    }
    let names = &dataset.schema.view_names;
    let mov_folds: Vec<_> = outcomes.iter().filter(|o| o.kind == ModelKind::Mov).collect();
    if !mov_folds.is_empty() {
        let mut rows = Vec::new();
        for o in &mov_folds {
            for ((p, g), z) in o.predictions.iter().zip(o.gate_weights.iter().flatten()).zip(&o.informative_views) {
                let truth = z.map(|v| names[v].clone()).unwrap_or_default();
                rows.push((vec![p.id.clone(), o.fold.to_string(), truth], g.as_slice()));
            }
        }
        report::write_gates(&dir.join("gates.csv"), names, &["fold", "informative_view"], rows)?;
    }
    let export = FoldPlanExport::new(&dataset, &plan);
    report::write_json(&dir.join("fold_plan.json"), &export)?;
    let mut manifest = Manifest::new("compare", config);
    manifest.data_seed = data_seed;
    manifest.dataset = Some(report::DatasetSummary::new(&dataset));
    manifest.fold_seeds = (0..plan.k_folds).map(|f| FoldSeeds::derive(config.seed, f)).collect();
    manifest.fold_plan = Some(export);
    report::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(out)
}

pub fn print_summary(report: &CompareReport) {
    println!(
        "{}-fold comparison, seed {}, positive class {:?}",
        report.k_folds, report.seed, report.header.positive_class
    );
    println!(
        "{:<12} {:>15} {:>15} {:>15} {:>10} {:>6}",
        "model", "accuracy", "F-measure", "AUC", "p vs mov", "gate"
    );
    let fmt = |m: f64, s: f64| format!("{m:.3} ± {s:.3}");
    for r in &report.summary {
        println!(
            "{:<12} {:>15} {:>15} {:>15} {:>10} {:>6}",
            r.model,
            fmt(r.accuracy_mean, r.accuracy_std),
            fmt(r.f_measure_mean, r.f_measure_std),
            fmt(r.auc_mean, r.auc_std),
            r.p_value_vs_mov.map(|p| format!("{p:.2e}")).unwrap_or_else(|| "-".into()),
            r.gate_agreement.map(|g| format!("{g:.3}")).unwrap_or_else(|| "-".into()),
        );
    }
}

pub fn gradcheck_cmd(config: &RunConfig, trials: usize, tolerance: f64, write: bool) -> Result<()> {
    let report = gradcheck::run(config.seed, trials, &[0.0, 1.0, 5.0], tolerance)?;
    println!(
        "gradcheck: {} cases (seed {}, λ {:?}), tolerance {:e}",
        report.cases, report.seed, report.lambdas, report.tolerance
    );
    for (block, err) in &report.worst_by_block {
        println!("  {block:<32} {err:.3e}");
    }
    println!("worst relative error {:.3e}: {}", report.max_rel_error, if report.passed { "PASS" } else { "FAIL" });
    if write {
        let dir = out_dir(config)?;
        report::write_json(&dir.join("gradcheck.json"), &report)?;
    }
    if report.passed {
        Ok(())
    } else {
        Err(CliError::CheckFailed(format!(
            "gradient check failed: worst relative error {:e} ≥ {:e}",
            report.max_rel_error, tolerance
        )))
    }
}
