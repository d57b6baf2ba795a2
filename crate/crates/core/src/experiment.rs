//! Cross-validated model comparison.
//!
//! For one model kind and one test fold: carve a stratified validation set
//! out of the remaining folds, fit standardization on the inner training
//! samples only, train every point of the hyperparameter grid, keep the
//! one with the lowest validation loss and score the test fold with it.
//! [`Comparison::assemble`] then aggregates folds per model and runs the
//! pooled DeLong tests of MoV against each baseline.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::baselines::{LayerConfig, Model, ModelKind};
use crate::data::{self, Dataset, FoldPlan, Preprocessing, StandardizationStats};
use crate::error::{Error, Result};
use crate::eval::{self, CvReport, DeLongResult, EvalReport, ScoredPrediction, POSITIVE_CLASS};
use crate::rng;
use crate::train::{TrainConfig, TrainHistory};

/// One point of the hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub hidden_units: usize,
    pub hidden_layers: usize,
    pub lambda: f64,
    pub dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub hidden_units: Vec<usize>,
    pub hidden_layers: Vec<usize>,
    pub lambda: Vec<f64>,
    pub dropout: Vec<f64>,
}

impl Default for SweepGrid {
    /// Two hidden layers of 24 units, λ = 1, dropout 0.5.
    fn default() -> Self {
        SweepGrid {
            hidden_units: vec![24],
            hidden_layers: vec![2],
            lambda: vec![1.0],
            dropout: vec![0.5],
        }
    }
}

impl SweepGrid {
    /// {12,24,48} units × {1,2} layers × λ {0,0.5,1,2} × dropout {0,0.5}.
    pub fn wide() -> Self {
        SweepGrid {
            hidden_units: vec![12, 24, 48],
            hidden_layers: vec![1, 2],
            lambda: vec![0.0, 0.5, 1.0, 2.0],
            dropout: vec![0.0, 0.5],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_units.is_empty()
            || self.hidden_layers.is_empty()
            || self.lambda.is_empty()
            || self.dropout.is_empty()
        {
            return Err(Error::InvalidConfig("every sweep axis needs at least one value".into()));
        }
        if self.hidden_units.contains(&0) {
            return Err(Error::InvalidConfig("hidden units must be positive".into()));
        }
        Ok(())
    }

    /// Grid points for `kind`. Models without a λ term only see the first λ.
    pub fn points(&self, kind: ModelKind) -> Vec<Hyperparams> {
        let lambdas: &[f64] = if kind.uses_lambda() { &self.lambda } else { &self.lambda[..1] };
        let mut out = Vec::new();
        for &hidden_units in &self.hidden_units {
            for &hidden_layers in &self.hidden_layers {
                for &lambda in lambdas {
                    for &dropout in &self.dropout {
                        out.push(Hyperparams {
                            hidden_units,
                            hidden_layers,
                            lambda,
                            dropout,
                        });
                    }
                }
            }
        }
        out
    }
}

/// The evaluation protocol shared by every model in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Protocol {
    pub k_folds: usize,
    pub validation_fraction: f64,
    pub preprocessing: Preprocessing,
    pub sweep: SweepGrid,
    pub gate_hidden: Vec<usize>,
    pub train: TrainConfig,
    /// Train Avg's experts jointly on the averaged likelihood (default) or
    /// each on its own likelihood.
    pub avg_joint: bool,
    pub gate_dropout: bool,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            k_folds: 10,
            validation_fraction: 0.1,
            preprocessing: Preprocessing::ZScore,
            sweep: SweepGrid::default(),
            gate_hidden: vec![3, 3],
            train: TrainConfig::default(),
            avg_joint: true,
            gate_dropout: true,
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            return Err(Error::InvalidConfig("k_folds must be at least 2".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidConfig("validation_fraction must be in (0,1)".into()));
        }
        self.sweep.validate()?;
        self.train.validate()
    }

    /// Untrained model for `kind` at grid point `hp`.
    pub fn build(&self, kind: ModelKind, dataset: &Dataset, hp: &Hyperparams, seed: u64) -> Result<Model> {
        let layers = LayerConfig {
            hidden: vec![hp.hidden_units; hp.hidden_layers],
            gate_hidden: self.gate_hidden.clone(),
        };
        let mut model = Model::build(
            kind,
            &dataset.schema.view_dims,
            dataset.schema.num_classes(),
            &layers,
            seed,
        )?;
        if let Model::Mixture { model, .. } = &mut model {
            model.gate_dropout = self.gate_dropout;
            if kind == ModelKind::Avg {
                model.joint = self.avg_joint;
            }
        }
        Ok(model)
    }
}

/// Seeds used for one fold, all derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSeeds {
    pub carve: u64,
    pub init: u64,
    pub train: u64,
}

impl FoldSeeds {
    /// Independent of the model kind, so every model in a fold starts from
    /// the same split and the same expert initialization.
    pub fn derive(master: u64, fold: usize) -> Self {
        let f = rng::derive(master, &[fold as u64]);
        FoldSeeds {
            carve: rng::derive(f, &[1]),
            init: rng::derive(f, &[2]),
            train: rng::derive(f, &[3]),
        }
    }
}

/// Everything produced for one (model, fold) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub kind: ModelKind,
    pub fold: usize,
    pub seeds: FoldSeeds,
    pub selected: Hyperparams,
    pub validation_loss: f64,
    pub history: TrainHistory,
    pub predictions: Vec<ScoredPrediction>,
    /// Per test sample gate weights, mixture models only.
    pub gate_weights: Option<Vec<Vec<f64>>>,
    pub informative_views: Vec<Option<usize>>,
    pub report: EvalReport,
    pub standardization: StandardizationStats,
    pub model: Model,
}

fn require_binary(dataset: &Dataset) -> Result<()> {
    if dataset.schema.num_classes() != 2 {
        return Err(Error::InvalidConfig(format!(
            "comparison metrics are binary; the schema has {} classes",
            dataset.schema.num_classes()
        )));
    }
    Ok(())
}

/// Trains and evaluates `kind` on test fold `fold` of `plan`.
pub fn run_fold(
    dataset: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    kind: ModelKind,
    protocol: &Protocol,
    master_seed: u64,
) -> Result<FoldOutcome> {
    protocol.validate()?;
    require_binary(dataset)?;
    if plan.assignments.len() != dataset.len() {
        return Err(Error::shape("fold plan", dataset.len(), plan.assignments.len()));
    }
    if fold >= plan.k_folds {
        return Err(Error::InvalidConfig(format!("fold {fold} outside 0..{}", plan.k_folds)));
    }
    let seeds = FoldSeeds::derive(master_seed, fold);
    let test_idx = plan.test_indices(fold);
    let (inner_idx, val_idx) = data::carve_validation(
        dataset,
        &plan.train_indices(fold),
        protocol.validation_fraction,
        seeds.carve,
    )?;
    let inner_raw = dataset.subset(&inner_idx);
    let standardization = match protocol.preprocessing {
        Preprocessing::ZScore => StandardizationStats::fit(&inner_raw)?,
        Preprocessing::Raw => StandardizationStats::identity(&dataset.schema.view_dims),
    };
    let inner = standardization.apply(&inner_raw);
    let val = standardization.apply(&dataset.subset(&val_idx));
    let test = standardization.apply(&dataset.subset(&test_idx));

    let mut best: Option<(Hyperparams, f64, Model, TrainHistory)> = None;
    for hp in protocol.sweep.points(kind) {
        let model = protocol.build(kind, dataset, &hp, seeds.init)?;
        let config = TrainConfig {
            lambda: hp.lambda,
            dropout_rate: hp.dropout,
            seed: seeds.train,
            ..protocol.train.clone()
        };
        let (trained, history) = model.train(&inner, &val, &config)?;
        let loss = match history.best_epoch {
            Some(e) => history.val_loss[e],
            None => trained.validation_loss(&val)?,
        };
        if best.as_ref().is_none_or(|b| loss < b.1) {
            best = Some((hp, loss, trained, history));
        }
    }
    let (selected, validation_loss, model, history) = best.expect("non-empty sweep");

    let mut predictions = Vec::with_capacity(test.len());
    let mut gates = Vec::new();
    for s in &test {
        match model.mixture_prediction(&s.views) {
            Some(p) => {
                let p = p?;
                predictions.push(ScoredPrediction::new(s.id.clone(), s.label, p.mixture_dist[POSITIVE_CLASS]));
                gates.push(p.gate_weights);
            }
            None => {
                let p = model.predict_proba(&s.views)?;
                predictions.push(ScoredPrediction::new(s.id.clone(), s.label, p[POSITIVE_CLASS]));
            }
        }
    }
    let report = eval::evaluate(&predictions)?;
    Ok(FoldOutcome {
        kind,
        fold,
        seeds,
        selected,
        validation_loss,
        history,
        predictions,
        gate_weights: matches!(model, Model::Mixture { .. }).then_some(gates),
        informative_views: test.iter().map(|s| s.informative_view).collect(),
        report,
        standardization,
        model,
    })
}

/// Share of samples whose ground-truth informative view gets gate weight
/// above one half. `None` without ground truth.
pub fn gate_agreement(gates: &[Vec<f64>], informative: &[Option<usize>]) -> Option<f64> {
    let mut known = 0usize;
    let mut agree = 0usize;
    for (g, z) in gates.iter().zip(informative) {
        if let Some(z) = z {
            known += 1;
            if g[*z] > 0.5 {
                agree += 1;
            }
        }
    }
    (known > 0).then(|| agree as f64 / known as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub kind: ModelKind,
    pub name: String,
    pub cv: CvReport,
    pub selected: Vec<Hyperparams>,
    pub gate_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeLongComparison {
    pub model: String,
    pub baseline: String,
    pub result: DeLongResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub positive_class: String,
    pub models: Vec<ModelResult>,
    pub delong: Vec<DeLongComparison>,
}

impl Comparison {
    /// Aggregates fold outcomes per model (in `kinds` order) and tests MoV
    /// against every other model on the pooled test predictions.
    pub fn assemble(dataset: &Dataset, kinds: &[ModelKind], outcomes: &[FoldOutcome]) -> Result<Comparison> {
        let names = &dataset.schema.view_names;
        let mut models = Vec::with_capacity(kinds.len());
        for &kind in kinds {
            let mut folds: Vec<&FoldOutcome> = outcomes.iter().filter(|o| o.kind == kind).collect();
            if folds.is_empty() {
                return Err(Error::InvalidInput(format!("no fold outcomes for {kind}")));
            }
            folds.sort_by_key(|o| o.fold);
            let cv = eval::aggregate_cv(
                folds.iter().map(|o| o.report.clone()).collect(),
                folds.iter().map(|o| o.predictions.clone()).collect(),
            )?;
            let gate_agreement = if kind == ModelKind::Mov {
                let gates: Vec<Vec<f64>> = folds.iter().flat_map(|o| o.gate_weights.clone().unwrap_or_default()).collect();
                let truth: Vec<Option<usize>> = folds.iter().flat_map(|o| o.informative_views.clone()).collect();
                gate_agreement(&gates, &truth)
            } else {
                None
            };
            models.push(ModelResult {
                kind,
                name: kind.name(names),
                cv,
                selected: folds.iter().map(|o| o.selected).collect(),
                gate_agreement,
            });
        }
        let mut delong = Vec::new();
        if let Some(mov) = models.iter().find(|m| m.kind == ModelKind::Mov) {
            for other in models.iter().filter(|m| m.kind != ModelKind::Mov) {
                delong.push(DeLongComparison {
                    model: mov.name.clone(),
                    baseline: other.name.clone(),
                    result: eval::delong_test(&mov.cv.pooled, &other.cv.pooled)?,
                });
            }
        }
        Ok(Comparison {
            positive_class: dataset.schema.class_names[POSITIVE_CLASS].clone(),
            models,
            delong,
        })
    }

    pub fn model(&self, kind: ModelKind) -> Option<&ModelResult> {
        self.models.iter().find(|m| m.kind == kind)
    }

    pub fn delong_against(&self, baseline: ModelKind) -> Option<&DeLongComparison> {
        let idx = self.models.iter().position(|m| m.kind == baseline)?;
        let name = &self.models[idx].name;
        self.delong.iter().find(|d| &d.baseline == name)
    }
}

/// Sequential comparison over all folds and `kinds`.
pub fn compare(dataset: &Dataset, kinds: &[ModelKind], protocol: &Protocol, seed: u64) -> Result<(FoldPlan, Comparison)> {
    protocol.validate()?;
    require_binary(dataset)?;
    let plan = data::stratified_kfold(dataset, protocol.k_folds, seed)?;
    let mut outcomes = Vec::new();
    for &kind in kinds {
        for fold in 0..protocol.k_folds {
            outcomes.push(run_fold(dataset, &plan, fold, kind, protocol, seed)?);
        }
    }
    Ok((plan.clone(), Comparison::assemble(dataset, kinds, &outcomes)?))
}
