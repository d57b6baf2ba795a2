//! Multi-view datasets, fold planning, standardization and the synthetic
//! generator.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Names and sizes of the views plus the class vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewSchema {
    pub view_names: Vec<String>,
    pub view_dims: Vec<usize>,
    pub class_names: Vec<String>,
}

impl ViewSchema {
    pub fn new(view_names: Vec<String>, view_dims: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        let schema = ViewSchema {
            view_names,
            view_dims,
            class_names,
        };
        schema.validate()?;
        Ok(schema)
    }

    /// Schema with views named `v0, v1, ...` and classes `negative, positive`.
    pub fn generic(view_dims: &[usize]) -> Self {
        ViewSchema {
            view_names: (0..view_dims.len()).map(|i| format!("v{i}")).collect(),
            view_dims: view_dims.to_vec(),
            class_names: vec!["negative".into(), "positive".into()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.view_names.len() != self.view_dims.len() {
            return Err(Error::InvalidConfig(format!(
                "{} view names for {} view sizes",
                self.view_names.len(),
                self.view_dims.len()
            )));
        }
        if self.view_dims.is_empty() || self.view_dims.contains(&0) {
            return Err(Error::InvalidConfig("views must be non-empty".into()));
        }
        if self.class_names.len() < 2 {
            return Err(Error::InvalidConfig("at least two classes are required".into()));
        }
        let unique: BTreeSet<&String> = self.view_names.iter().collect();
        if unique.len() != self.view_names.len() {
            return Err(Error::InvalidConfig("view names must be unique".into()));
        }
        Ok(())
    }

    pub fn num_views(&self) -> usize {
        self.view_dims.len()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn total_dim(&self) -> usize {
        self.view_dims.iter().sum()
    }
}

/// One case: a feature vector per view and a class index (0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiViewSample {
    pub id: String,
    pub views: Vec<Vec<f64>>,
    pub label: usize,
    /// Ground truth from the synthetic generator.
    pub informative_view: Option<usize>,
    pub group: Option<String>,
}

impl MultiViewSample {
    pub fn new(id: impl Into<String>, views: Vec<Vec<f64>>, label: usize) -> Self {
        MultiViewSample {
            id: id.into(),
            views,
            label,
            informative_view: None,
            group: None,
        }
    }

    pub fn concatenated(&self) -> Vec<f64> {
        self.views.concat()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: ViewSchema,
    pub samples: Vec<MultiViewSample>,
}

impl Dataset {
    pub fn new(schema: ViewSchema, samples: Vec<MultiViewSample>) -> Result<Self> {
        schema.validate()?;
        for (t, s) in samples.iter().enumerate() {
            check_sample(&schema, s).map_err(|e| match e {
                Error::InvalidInput(msg) => Error::InvalidInput(format!("sample {t} ({}): {msg}", s.id)),
                other => other,
            })?;
        }
        Ok(Dataset { schema, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Vec<MultiViewSample> {
        indices.iter().map(|&i| self.samples[i].clone()).collect()
    }

    /// Keeps only samples tagged with `group`.
    pub fn filter_group(&self, group: &str) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            samples: self
                .samples
                .iter()
                .filter(|s| s.group.as_deref() == Some(group))
                .cloned()
                .collect(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.schema.num_classes()];
        self.samples.iter().for_each(|s| counts[s.label] += 1);
        counts
    }
}

fn check_sample(schema: &ViewSchema, s: &MultiViewSample) -> Result<()> {
    if s.views.len() != schema.num_views() {
        return Err(Error::shape("sample views", schema.num_views(), s.views.len()));
    }
    for (v, (x, &d)) in s.views.iter().zip(&schema.view_dims).enumerate() {
        if x.len() != d {
            return Err(Error::shape(format!("view {v} features"), d, x.len()));
        }
        if x.iter().any(|f| !f.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite feature in view {v}")));
        }
    }
    if s.label >= schema.num_classes() {
        return Err(Error::InvalidInput(format!("label {} out of range", s.label)));
    }
    if let Some(z) = s.informative_view {
        if z >= schema.num_views() {
            return Err(Error::InvalidInput(format!("informative view {z} out of range")));
        }
    }
    Ok(())
}

/// Assignment of every sample to one of `k_folds` test folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k_folds: usize,
    pub assignments: Vec<usize>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != fold).collect()
    }
}

fn indices_by_class(labels: &[usize], indices: impl Iterator<Item = usize>) -> Vec<Vec<usize>> {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); k];
    indices.for_each(|i| by_class[labels[i]].push(i));
    by_class
}

/// Stratified k-fold plan: each class is shuffled under `seed` and dealt
/// round-robin, continuing the deal across classes so fold sizes stay
/// within one sample of each other.
pub fn stratified_kfold(dataset: &Dataset, k_folds: usize, seed: u64) -> Result<FoldPlan> {
    stratified_kfold_labels(&dataset.labels(), k_folds, seed)
}

pub fn stratified_kfold_labels(labels: &[usize], k_folds: usize, seed: u64) -> Result<FoldPlan> {
    if k_folds < 2 {
        return Err(Error::InvalidConfig(format!("k_folds must be at least 2, got {k_folds}")));
    }
    let by_class = indices_by_class(labels, 0..labels.len());
    for (c, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k_folds {
            return Err(Error::InvalidConfig(format!(
                "class {c} has {} samples, fewer than {k_folds} folds",
                members.len()
            )));
        }
    }
    let mut rng = rng::rng(seed);
    let mut assignments = vec![0; labels.len()];
    let mut next = 0;
    for mut members in by_class {
        members.shuffle(&mut rng);
        for i in members {
            assignments[i] = next;
            next = (next + 1) % k_folds;
        }
    }
    Ok(FoldPlan {
        k_folds,
        assignments,
        seed,
    })
}

/// Splits `train` into (inner-train, validation), stratified by class.
///
/// The validation size is `round(fraction · n)` distributed over classes
/// by largest remainder, then clamped so each class with at least two
/// samples contributes one to validation and keeps one for training. A
/// class with a single sample keeps it in inner-train.
pub fn carve_validation(
    dataset: &Dataset,
    train: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    carve_validation_labels(&dataset.labels(), train, fraction, seed)
}

pub fn carve_validation_labels(
    labels: &[usize],
    train: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("validation fraction must be in (0,1), got {fraction}")));
    }
    let n = train.len();
    let by_class = indices_by_class(labels, train.iter().copied());
    let target = libm::round(fraction * n as f64) as usize;
    let quotas: Vec<f64> = by_class
        .iter()
        .map(|m| target as f64 * m.len() as f64 / n.max(1) as f64)
        .collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| libm::floor(*q) as usize).collect();
    let mut order: Vec<usize> = (0..by_class.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - alloc[a] as f64;
        let rb = quotas[b] - alloc[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let short = target.saturating_sub(alloc.iter().sum());
    order.iter().take(short).for_each(|&c| alloc[c] += 1);

    let mut rng = rng::rng(seed);
    let mut inner = Vec::with_capacity(n);
    let mut validation = Vec::new();
    for (c, mut members) in by_class.into_iter().enumerate() {
        let take = match members.len() {
            0 | 1 => 0,
            len => alloc[c].clamp(1, len - 1),
        };
        members.shuffle(&mut rng);
        validation.extend_from_slice(&members[..take]);
        inner.extend_from_slice(&members[take..]);
    }
    if validation.is_empty() {
        return Err(Error::InvalidConfig(
            "no class has enough samples to supply both a validation and a training sample".into(),
        ));
    }
    inner.sort_unstable();
    validation.sort_unstable();
    Ok((inner, validation))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocessing {
    #[default]
    ZScore,
    Raw,
}

/// Per-view, per-feature mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationStats {
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
}

pub const STD_FLOOR: f64 = 1e-8;

impl StandardizationStats {
    /// Fits z-scoring on `samples` (population std, floored at [`STD_FLOOR`]).
    ///
    /// A feature that is constant over the fitting set gets that exact
    /// value as its mean, so it maps to exactly zero.
    pub fn fit(samples: &[MultiViewSample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidInput("cannot fit standardization on no samples".into()))?;
        let n = samples.len() as f64;
        let mut mean = Vec::with_capacity(first.views.len());
        let mut std = Vec::with_capacity(first.views.len());
        for (v, x0) in first.views.iter().enumerate() {
            let mut mv = Vec::with_capacity(x0.len());
            let mut sv = Vec::with_capacity(x0.len());
            for j in 0..x0.len() {
                let col = samples.iter().map(|s| s.views[v][j]);
                let constant = col.clone().all(|x| x == x0[j]);
                let mu = if constant { x0[j] } else { col.clone().sum::<f64>() / n };
                let var = col.map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
                mv.push(mu);
                sv.push(libm::sqrt(var).max(STD_FLOOR));
            }
            mean.push(mv);
            std.push(sv);
        }
        Ok(StandardizationStats { mean, std })
    }

    pub fn apply_sample(&self, sample: &MultiViewSample) -> MultiViewSample {
        let mut out = sample.clone();
        for (v, x) in out.views.iter_mut().enumerate() {
            for (j, f) in x.iter_mut().enumerate() {
                *f = (*f - self.mean[v][j]) / self.std[v][j];
            }
        }
        out
    }

    pub fn apply(&self, samples: &[MultiViewSample]) -> Vec<MultiViewSample> {
        samples.iter().map(|s| self.apply_sample(s)).collect()
    }

    /// Identity transform for the given view sizes.
    pub fn identity(view_dims: &[usize]) -> Self {
        StandardizationStats {
            mean: view_dims.iter().map(|&d| vec![0.0; d]).collect(),
            std: view_dims.iter().map(|&d| vec![1.0; d]).collect(),
        }
    }
}

pub fn fit_standardizer(samples: &[MultiViewSample]) -> Result<StandardizationStats> {
    StandardizationStats::fit(samples)
}

pub fn apply_standardizer(stats: &StandardizationStats, samples: &[MultiViewSample]) -> Vec<MultiViewSample> {
    stats.apply(samples)
}

/// Parameters of the synthetic multi-view generator.
///
/// Each sample has exactly one informative view drawn from
/// `informative_prior`. In that view the features are centred on a
/// class-dependent point along a fixed unit direction (classes spaced
/// `separation` apart, so ±separation/2 for two classes) with
/// `noise_std` spread; every other view is class-independent standard
/// normal noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_samples: usize,
    pub view_dims: Vec<usize>,
    pub classes: usize,
    pub separation: f64,
    pub informative_prior: Vec<f64>,
    pub noise_std: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_samples: 1400,
            view_dims: vec![14, 14],
            classes: 2,
            separation: 1.0,
            informative_prior: vec![0.5, 0.5],
            noise_std: 0.7,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.view_dims.is_empty() || self.view_dims.contains(&0) {
            return Err(Error::InvalidConfig("synthetic views must be non-empty".into()));
        }
        if self.informative_prior.len() != self.view_dims.len() {
            return Err(Error::InvalidConfig(format!(
                "informative prior has {} entries for {} views",
                self.informative_prior.len(),
                self.view_dims.len()
            )));
        }
        let total: f64 = self.informative_prior.iter().sum();
        if self.informative_prior.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig("informative prior must be a probability vector".into()));
        }
        if !(self.separation >= 0.0) || !(self.noise_std > 0.0) || self.classes < 2 {
            return Err(Error::InvalidConfig(
                "separation must be >= 0, noise_std > 0 and classes >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Draws a synthetic dataset. Identical config and seed give identical data.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = rng::rng(seed);
    let directions: Vec<Vec<f64>> = config
        .view_dims
        .iter()
        .map(|&d| {
            let raw: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = libm::sqrt(raw.iter().map(|x| x * x).sum::<f64>());
            raw.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    let width = libm::log10(config.n_samples.max(1) as f64) as usize + 1;
    let mut samples = Vec::with_capacity(config.n_samples);
    for t in 0..config.n_samples {
        let label = rng.random_range(0..config.classes);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut informative = config.view_dims.len() - 1;
        for (v, p) in config.informative_prior.iter().enumerate() {
            acc += p;
            if u < acc {
                informative = v;
                break;
            }
        }
        let offset = (label as f64 - (config.classes - 1) as f64 / 2.0) * config.separation;
        let views = config
            .view_dims
            .iter()
            .enumerate()
            .map(|(v, &d)| {
                (0..d)
                    .map(|j| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        if v == informative {
                            offset * directions[v][j] + config.noise_std * e
                        } else {
                            e
                        }
                    })
                    .collect()
            })
            .collect();
        samples.push(MultiViewSample {
            id: format!("s{t:0width$}"),
            views,
            label,
            informative_view: Some(informative),
            group: None,
        });
    }
    let mut schema = ViewSchema::generic(&config.view_dims);
    if config.classes != 2 {
        schema.class_names = (0..config.classes).map(|c| format!("c{c}")).collect();
    }
    Dataset::new(schema, samples)
}
