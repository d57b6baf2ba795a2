//! Output files: JSON reports, ROC and gate CSVs, fold plans and manifests.

use std::collections::BTreeMap;
use std::path::Path;

use mov_core::data::FoldPlan;
use mov_core::eval::{self, DeLongResult, EvalReport, RocCurve, ScoredPrediction, POSITIVE_CLASS, THRESHOLD};
use mov_core::experiment::{Comparison, FoldOutcome, FoldSeeds};
use mov_core::{Dataset, ModelKind};
use serde::Serialize;

use crate::config::RunConfig;
use crate::csvio;
use crate::error::{CliError, Result};

/// Model selection policy, recorded in every report.
pub const SELECTION_POLICY: &str =
    "per grid point, parameters from the epoch with the lowest validation mixture NLL; grid point with the lowest such loss";

pub const HISTOGRAM_BINS: usize = 10;

/// Fields stated at the top of every report.
#[derive(Debug, Clone, Serialize)]
pub struct ReportHeader {
    pub positive_class: String,
    pub positive_class_index: usize,
    pub threshold: f64,
    pub selection: &'static str,
}

impl ReportHeader {
    pub fn new(class_names: &[String]) -> Self {
        ReportHeader {
            positive_class: class_names[POSITIVE_CLASS].clone(),
            positive_class_index: POSITIVE_CLASS,
            threshold: THRESHOLD,
            selection: SELECTION_POLICY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub model: String,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f_measure_mean: f64,
    pub f_measure_std: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub pooled_auc: f64,
    /// Pooled DeLong p-value of MoV against this model.
    pub p_value_vs_mov: Option<f64>,
    pub gate_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldDeLong {
    pub fold: usize,
    pub model: String,
    pub baseline: String,
    pub result: DeLongResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompareReport {
    #[serde(flatten)]
    pub header: ReportHeader,
    pub seed: u64,
    pub k_folds: usize,
    pub summary: Vec<SummaryRow>,
    pub comparison: Comparison,
    pub delong_per_fold: Option<Vec<FoldDeLong>>,
}

pub fn summary(comparison: &Comparison) -> Result<Vec<SummaryRow>> {
    let mut rows = Vec::with_capacity(comparison.models.len());
    for m in &comparison.models {
        let (_, pooled_auc) = eval::roc_and_auc(&m.cv.pooled)?;
        rows.push(SummaryRow {
            model: m.name.clone(),
            accuracy_mean: m.cv.mean.accuracy,
            accuracy_std: m.cv.std.accuracy,
            f_measure_mean: m.cv.mean.f_measure,
            f_measure_std: m.cv.std.f_measure,
            auc_mean: m.cv.mean.auc,
            auc_std: m.cv.std.auc,
            pooled_auc,
            p_value_vs_mov: comparison.delong_against(m.kind).map(|d| d.result.p_value),
            gate_agreement: m.gate_agreement,
        });
    }
    Ok(rows)
}

/// DeLong tests of MoV against every other model, fold by fold.
pub fn per_fold_delong(dataset: &Dataset, kinds: &[ModelKind], outcomes: &[FoldOutcome]) -> Result<Vec<FoldDeLong>> {
    let names = &dataset.schema.view_names;
    let mut out = Vec::new();
    for mov in outcomes.iter().filter(|o| o.kind == ModelKind::Mov) {
        for &kind in kinds.iter().filter(|k| **k != ModelKind::Mov) {
            if let Some(base) = outcomes.iter().find(|o| o.kind == kind && o.fold == mov.fold) {
                out.push(FoldDeLong {
                    fold: mov.fold,
                    model: ModelKind::Mov.name(names),
                    baseline: kind.name(names),
                    result: eval::delong_test(&mov.predictions, &base.predictions)?,
                });
            }
        }
    }
    Ok(out)
}

/// Counts of gate weights per view in equal-width bins over [0,1].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateHistogram {
    pub bin_edges: Vec<f64>,
    pub views: BTreeMap<String, Vec<usize>>,
}

pub fn gate_histogram(view_names: &[String], gates: &[Vec<f64>]) -> GateHistogram {
    let mut views = BTreeMap::new();
    for (v, name) in view_names.iter().enumerate() {
        let mut counts = vec![0usize; HISTOGRAM_BINS];
        for g in gates {
            let bin = ((g[v] * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
            counts[bin] += 1;
        }
        views.insert(name.clone(), counts);
    }
    GateHistogram {
        bin_edges: (0..=HISTOGRAM_BINS).map(|b| b as f64 / HISTOGRAM_BINS as f64).collect(),
        views,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationReport {
    #[serde(flatten)]
    pub header: ReportHeader,
    pub model: String,
    pub report: EvalReport,
    pub gate_histogram: Option<GateHistogram>,
    pub gate_agreement: Option<f64>,
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_roc(path: &Path, roc: &RocCurve) -> Result<()> {
    csvio::write_rows(
        path,
        &["fpr".into(), "tpr".into()],
        roc.points.iter().map(|(x, y)| vec![x.to_string(), y.to_string()]),
    )
}

pub fn write_predictions(path: &Path, preds: &[ScoredPrediction]) -> Result<()> {
    csvio::write_rows(
        path,
        &["id".into(), "label".into(), "score".into(), "predicted".into()],
        preds
            .iter()
            .map(|p| vec![p.id.clone(), p.label.to_string(), p.score.to_string(), p.predicted.to_string()]),
    )
}

/// One row per sample: id, optional leading columns, then one gate weight
/// per view.
pub fn write_gates(path: &Path, view_names: &[String], extra: &[&str], rows: Vec<(Vec<String>, &[f64])>) -> Result<()> {
    let mut header: Vec<String> = vec!["id".into()];
    header.extend(extra.iter().map(|s| s.to_string()));
    header.extend(view_names.iter().cloned());
    csvio::write_rows(
        path,
        &header,
        rows.into_iter().map(|(mut lead, g)| {
            lead.extend(g.iter().map(|x| x.to_string()));
            lead
        }),
    )
}

/// Test fold of every sample, by id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldPlanExport {
    pub k_folds: usize,
    pub seed: u64,
    pub folds: BTreeMap<String, usize>,
}

impl FoldPlanExport {
    pub fn new(dataset: &Dataset, plan: &FoldPlan) -> Self {
        FoldPlanExport {
            k_folds: plan.k_folds,
            seed: plan.seed,
            folds: dataset
                .samples
                .iter()
                .zip(&plan.assignments)
                .map(|(s, f)| (s.id.clone(), *f))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub samples: usize,
    pub class_counts: Vec<usize>,
    pub view_names: Vec<String>,
    pub view_dims: Vec<usize>,
}

impl DatasetSummary {
    pub fn new(dataset: &Dataset) -> Self {
        DatasetSummary {
            samples: dataset.len(),
            class_counts: dataset.class_counts(),
            view_names: dataset.schema.view_names.clone(),
            view_dims: dataset.schema.view_dims.clone(),
        }
    }
}

/// Everything needed to repeat a run. Passing the file back as `--config`
/// reruns with the recorded config.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: RunConfig,
    pub master_seed: u64,
    pub data_seed: Option<u64>,
    pub dataset: Option<DatasetSummary>,
    pub fold_seeds: Vec<FoldSeeds>,
    pub fold_plan: Option<FoldPlanExport>,
    pub selection: &'static str,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            config: config.clone(),
            master_seed: config.seed,
            data_seed: None,
            dataset: None,
            fold_seeds: Vec::new(),
            fold_plan: None,
            selection: SELECTION_POLICY,
        }
    }
}

/// File-name-safe form of a model name.
pub fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}
