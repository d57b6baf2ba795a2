//! Binary classification metrics, ROC/AUC and the DeLong paired test.
//!
//! Class index 1 is the positive class throughout.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const POSITIVE_CLASS: usize = 1;
pub const THRESHOLD: f64 = 0.5;

/// One scored test case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPrediction {
    pub id: String,
    /// 1 for positive, 0 for negative.
    pub label: usize,
    /// Probability of the positive class.
    pub score: f64,
    /// `score >= 0.5`, ties go to the positive class.
    pub predicted: usize,
}

impl ScoredPrediction {
    pub fn new(id: impl Into<String>, label: usize, score: f64) -> Self {
        ScoredPrediction {
            id: id.into(),
            label,
            score,
            predicted: (score >= THRESHOLD) as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(preds: &[ScoredPrediction]) -> Result<Self> {
        if preds.is_empty() {
            return Err(Error::InvalidInput("no predictions".into()));
        }
        let mut c = Confusion::default();
        for p in preds {
            match (p.label, p.predicted) {
                (1, 1) => c.tp += 1,
                (0, 1) => c.fp += 1,
                (0, 0) => c.tn += 1,
                (1, 0) => c.fn_ += 1,
                _ => return Err(Error::InvalidInput(format!("non-binary label for {}", p.id))),
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// Harmonic mean of precision and recall; 0 when both are 0 or undefined.
    pub fn f_measure(&self) -> f64 {
        let precision = if self.tp + self.fp == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        };
        let recall = if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }
}

pub fn accuracy(preds: &[ScoredPrediction]) -> Result<f64> {
    Ok(Confusion::from_predictions(preds)?.accuracy())
}

pub fn f_measure(preds: &[ScoredPrediction]) -> Result<f64> {
    Ok(Confusion::from_predictions(preds)?.f_measure())
}

/// ROC points, anchored at (0,0) and (1,1), one point per distinct score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
}

fn class_counts(preds: &[ScoredPrediction]) -> Result<(usize, usize)> {
    let mut pos = 0;
    let mut neg = 0;
    for p in preds {
        if !p.score.is_finite() {
            return Err(Error::NonFinite(format!("score of {}", p.id)));
        }
        match p.label {
            1 => pos += 1,
            0 => neg += 1,
            _ => return Err(Error::InvalidInput(format!("non-binary label for {}", p.id))),
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    Ok((pos, neg))
}

/// Threshold sweep over distinct scores, highest first; AUC by the
/// trapezoidal rule, accumulated in integer counts.
pub fn roc_and_auc(preds: &[ScoredPrediction]) -> Result<(RocCurve, f64)> {
    let (pos, neg) = class_counts(preds)?;
    let mut order: Vec<&ScoredPrediction> = preds.iter().collect();
    order.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the area in units of one positive-negative pair
    let mut doubled_area = 0u128;
    let mut i = 0;
    while i < order.len() {
        let score = order[i].score;
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && order[i].score == score {
            if order[i].label == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        doubled_area += (fp - fp0) as u128 * (tp + tp0) as u128;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = doubled_area as f64 / (2.0 * pos as f64 * neg as f64);
    debug_assert!((auc - mann_whitney_auc(preds).unwrap()).abs() < 1e-12);
    Ok((RocCurve { points }, auc))
}

/// Midranks (1-based, ties averaged) of `values` in their original order.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j + 2) as f64 / 2.0;
        order[i..=j].iter().for_each(|&k| ranks[k] = rank);
        i = j + 1;
    }
    ranks
}

/// AUC as the normalized Mann–Whitney U statistic with midranks.
pub fn mann_whitney_auc(preds: &[ScoredPrediction]) -> Result<f64> {
    let (pos, neg) = class_counts(preds)?;
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let ranks = midranks(&scores);
    let rank_sum: f64 = preds
        .iter()
        .zip(&ranks)
        .filter(|(p, _)| p.label == 1)
        .map(|(_, r)| r)
        .sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

/// Outcome of a paired DeLong comparison of two AUCs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeLongResult {
    pub auc_a: f64,
    pub auc_b: f64,
    pub variance: f64,
    pub z: f64,
    pub p_value: f64,
    /// Set when the variance of the difference is zero but the AUCs differ.
    pub degenerate: bool,
}

/// Structural components of one scorer: one value per positive and per negative.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralComponents {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl StructuralComponents {
    pub fn auc(&self) -> f64 {
        self.positive.iter().sum::<f64>() / self.positive.len() as f64
    }
}

/// Structural components from midranks:
/// `V10_i = (R(X_i) − R_pos(X_i)) / n`, `V01_j = 1 − (R(Y_j) − R_neg(Y_j)) / m`,
/// with `m` positives and `n` negatives.
pub fn structural_components(scores: &[f64], labels: &[usize]) -> StructuralComponents {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l != 1).map(|(s, _)| *s).collect();
    let (m, n) = (pos.len() as f64, neg.len() as f64);
    let combined: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    let r_all = midranks(&combined);
    let r_pos = midranks(&pos);
    let r_neg = midranks(&neg);
    StructuralComponents {
        positive: (0..pos.len()).map(|i| (r_all[i] - r_pos[i]) / n).collect(),
        negative: (0..neg.len())
            .map(|j| 1.0 - (r_all[pos.len() + j] - r_neg[j]) / m)
            .collect(),
    }
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0)
}

/// Variance of `auc_a − auc_b` from the two scorers' structural components.
pub fn difference_variance(a: &StructuralComponents, b: &StructuralComponents) -> f64 {
    let m = a.positive.len() as f64;
    let n = a.negative.len() as f64;
    let s10 = covariance(&a.positive, &a.positive) + covariance(&b.positive, &b.positive)
        - 2.0 * covariance(&a.positive, &b.positive);
    let s01 = covariance(&a.negative, &a.negative) + covariance(&b.negative, &b.negative)
        - 2.0 * covariance(&a.negative, &b.negative);
    s10 / m + s01 / n
}

/// Standard normal upper tail, two-sided: `P(|Z| ≥ |z|)`.
pub fn two_sided_p(z: f64) -> f64 {
    libm::erfc(libm::fabs(z) / core::f64::consts::SQRT_2).min(1.0)
}

/// Paired DeLong test of H0: AUC(a) = AUC(b) on the same cases.
///
/// `b` is matched to `a` by id; both need at least two positives and two
/// negatives.
pub fn delong_test(a: &[ScoredPrediction], b: &[ScoredPrediction]) -> Result<DeLongResult> {
    if a.len() != b.len() {
        return Err(Error::Pairing(format!("{} vs {} predictions", a.len(), b.len())));
    }
    let index: BTreeMap<&str, &ScoredPrediction> = b.iter().map(|p| (p.id.as_str(), p)).collect();
    if index.len() != b.len() {
        return Err(Error::Pairing("duplicate ids".into()));
    }
    let mut b_scores = Vec::with_capacity(a.len());
    for p in a {
        let q = index
            .get(p.id.as_str())
            .ok_or_else(|| Error::Pairing(format!("id {} missing from second set", p.id)))?;
        if q.label != p.label {
            return Err(Error::Pairing(format!("labels disagree for {}", p.id)));
        }
        b_scores.push(q.score);
    }
    let labels: Vec<usize> = a.iter().map(|p| p.label).collect();
    let (pos, neg) = class_counts(a)?;
    if pos < 2 || neg < 2 {
        return Err(Error::InvalidInput(format!(
            "DeLong needs at least two cases per class, got {pos} positive and {neg} negative"
        )));
    }
    if b_scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("second score set".into()));
    }
    let a_scores: Vec<f64> = a.iter().map(|p| p.score).collect();
    let ca = structural_components(&a_scores, &labels);
    let cb = structural_components(&b_scores, &labels);
    let (auc_a, auc_b) = (ca.auc(), cb.auc());
    let variance = difference_variance(&ca, &cb).max(0.0);
    let diff = auc_a - auc_b;
    let (z, p_value, degenerate) = if diff == 0.0 {
        (0.0, 1.0, false)
    } else if variance == 0.0 {
        (diff.signum() * f64::INFINITY, 0.0, true)
    } else {
        let z = diff / libm::sqrt(variance);
        (z, two_sided_p(z), false)
    };
    Ok(DeLongResult {
        auc_a,
        auc_b,
        variance,
        z,
        p_value,
        degenerate,
    })
}

/// Metrics of one evaluated prediction set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub confusion: Confusion,
    pub accuracy: f64,
    pub f_measure: f64,
    pub auc: f64,
    pub roc: RocCurve,
}

pub fn evaluate(preds: &[ScoredPrediction]) -> Result<EvalReport> {
    let confusion = Confusion::from_predictions(preds)?;
    let (roc, auc) = roc_and_auc(preds)?;
    Ok(EvalReport {
        n: preds.len(),
        confusion,
        accuracy: confusion.accuracy(),
        f_measure: confusion.f_measure(),
        auc,
        roc,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub f_measure: f64,
    pub auc: f64,
}

/// Cross-validation summary: per-fold reports, their unweighted mean and
/// sample standard deviation, and the pooled test predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<EvalReport>,
    pub mean: MetricSummary,
    pub std: MetricSummary,
    pub pooled: Vec<ScoredPrediction>,
}

pub fn aggregate_cv(folds: Vec<EvalReport>, fold_predictions: Vec<Vec<ScoredPrediction>>) -> Result<CvReport> {
    if folds.is_empty() {
        return Err(Error::InvalidInput("no fold reports to aggregate".into()));
    }
    let stat = |f: fn(&EvalReport) -> f64| {
        let vals: Vec<f64> = folds.iter().map(f).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let std = if vals.len() < 2 {
            0.0
        } else {
            libm::sqrt(vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
        };
        (mean, std)
    };
    let (acc, acc_sd) = stat(|r| r.accuracy);
    let (f, f_sd) = stat(|r| r.f_measure);
    let (auc, auc_sd) = stat(|r| r.auc);
    Ok(CvReport {
        folds,
        mean: MetricSummary {
            accuracy: acc,
            f_measure: f,
            auc,
        },
        std: MetricSummary {
            accuracy: acc_sd,
            f_measure: f_sd,
            auc: auc_sd,
        },
        pooled: fold_predictions.into_iter().flatten().collect(),
    })
}
